"""Path-independence of Girsanov exponents: models, simulation, residual checks and Monte Carlo verification."""

from .errors import (
    ConfigurationError,
    DegenerateTransformError,
    DomainError,
    NotFoundError,
    NumericError,
    PathIndepError,
    ValidationError,
)
from .fields import FTransform, ScalarField, compose, derivatives
from .model import JumpSpec, ModelSpec, builtin, drift_image_residual, hypothesis_probe, model_names
from .simulate import PathBatch, PathBundle, TimeGrid, derive_stream, simulate_batch, simulate_diffusion, simulate_jump_diffusion

__version__ = "0.1.0"
