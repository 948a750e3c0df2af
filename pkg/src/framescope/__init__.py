"""Frame identification pipeline: corpus handling, prompt rendering, LLM backends, and evaluation."""

__version__ = "0.1.0"
