"""Graph-based fusion of low- and high-fidelity data."""

from .dataset import Dataset, RestrictionSpec, ScalingRecord, apply_scaling, fit_scaling, inverse_scaling
from .errors import BifidError
from .fusion import FusionConfig, FusionModel, FusionProblem, fit, optimize, transform
from .graph import KernelSpec, LaplacianBundle, graph_laplacian
from .pipeline import PipelineConfig, run
from .regtune import LCurve, elbow, sweep
from .selection import KMeansConfig, SelectionResult, select_high_fidelity
from .spectral import Spectrum, lowest_eigenpairs

__version__ = "0.1.0"

__all__ = [
    "BifidError",
    "Dataset",
    "FusionConfig",
    "FusionModel",
    "FusionProblem",
    "KMeansConfig",
    "KernelSpec",
    "LCurve",
    "LaplacianBundle",
    "PipelineConfig",
    "RestrictionSpec",
    "ScalingRecord",
    "SelectionResult",
    "Spectrum",
    "apply_scaling",
    "elbow",
    "fit",
    "fit_scaling",
    "graph_laplacian",
    "inverse_scaling",
    "lowest_eigenpairs",
    "optimize",
    "run",
    "select_high_fidelity",
    "sweep",
    "transform",
]
