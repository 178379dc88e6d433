"""Cloud/edge cluster simulator with reactive and proactive pod autoscalers."""
__version__ = "0.1.0"
