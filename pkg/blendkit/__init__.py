"""Teacher/student text classification: an LSTM teacher distilled into a CNN student."""

__version__ = "0.1.0"
