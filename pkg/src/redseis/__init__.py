"""Deep-RED: regularization by a DnCNN denoiser for seismic de-noising and compressive recovery."""
__version__ = "0.1.0"

from .errors import ConfigError, FormatError, SolverDiverged, TrainingDiverged
from .kernels import BACKEND
from .section import SeismicSection, assemble_patches, partition_patches
from .solver import REDContext, SolverOptions, deep_red_solve, ista_solve

__all__ = [
    "BACKEND",
    "ConfigError",
    "FormatError",
    "REDContext",
    "SeismicSection",
    "SolverDiverged",
    "SolverOptions",
    "TrainingDiverged",
    "__version__",
    "assemble_patches",
    "deep_red_solve",
    "ista_solve",
    "partition_patches",
]
