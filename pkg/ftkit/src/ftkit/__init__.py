"""Fine-tuning kit for multiple-choice frame identification with a restricted label set."""

__version__ = "0.1.0"
