"""curioseq: curiosity-driven policy-gradient training for attention-LSTM
sequence generation, with exact n-gram evaluation metrics, at desk scale."""

__version__ = "0.1.0"
