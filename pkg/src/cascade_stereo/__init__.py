"""Cascaded recurrent stereo matching with adaptive group correlation, on a small numpy autodiff engine."""

__version__ = "0.1.0"
