"""Fisher-loss deep domain adaptation with hand-written gradients."""

__version__ = "0.1.0"
