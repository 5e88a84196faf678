"""Input-queued switch scheduling under linear queue costs."""

__version__ = "0.1.0"
