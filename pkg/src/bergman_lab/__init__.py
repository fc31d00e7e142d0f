"""Partial, full and singular Bergman kernels of O(p) on the Riemann sphere."""
__version__ = "0.1.0"

from .geometry import FS, ChartPoint, CutoffProfile, MetricSpec, Mode
from .spectra import GramData, LogValue, SubspaceSpec, gram_matrix, kernel_at

__all__ = [
    "__version__",
    "FS",
    "ChartPoint",
    "CutoffProfile",
    "MetricSpec",
    "Mode",
    "GramData",
    "LogValue",
    "SubspaceSpec",
    "gram_matrix",
    "kernel_at",
]
