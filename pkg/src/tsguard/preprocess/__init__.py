from .changepoint import binseg_changepoints, cusum_changepoints
from .decompose import (
    ClassicalDecomposer,
    Decomposition,
    RpcaResult,
    STLDecomposer,
    classical_decompose,
    rpca_decompose,
    stl_decompose,
    stl_with_status,
)
from .smoothers import (
    CyclicSubseriesSmoother,
    EnsembleSmoother,
    MovingAverage,
    RollingMedian,
    apply_smoother,
    cyclic_subseries_smooth,
    ensemble_smooth,
    moving_average,
    rolling_median,
)

__all__ = [
    "ClassicalDecomposer", "CyclicSubseriesSmoother", "Decomposition", "EnsembleSmoother",
    "MovingAverage", "RollingMedian", "RpcaResult", "STLDecomposer", "apply_smoother",
    "binseg_changepoints", "classical_decompose", "cusum_changepoints",
    "cyclic_subseries_smooth", "ensemble_smooth", "moving_average", "rolling_median",
    "rpca_decompose", "stl_decompose", "stl_with_status",
]
