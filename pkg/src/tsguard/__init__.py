"""Time-series anomaly detection, model selection and root cause analysis."""
