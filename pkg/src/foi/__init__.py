"""Field-of-interest proposal for augmented mitotic counting on whole-slide images."""

__version__ = "0.1.0"
