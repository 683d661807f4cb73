"""Low-rank plus additive matrix decomposition for background/foreground separation."""

__version__ = "0.1.0"
