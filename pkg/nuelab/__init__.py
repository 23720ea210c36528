"""nuelab: simulation and estimation lab for non-uniformly expanding maps."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConeViolation,
    ConfigError,
    DomainSpec,
    DynamicalSystem,
    DynamicsError,
    EstimationError,
    HitSingularSet,
    LeftDomain,
    ModelError,
    NuelabError,
    Region,
    SchemaError,
    SystemConfigError,
)
from .observables import Observable  # noqa: E402
from .systems import available_families, build_system  # noqa: E402

__all__ = [
    "__version__",
    "ConeViolation",
    "ConfigError",
    "DomainSpec",
    "DynamicalSystem",
    "DynamicsError",
    "EstimationError",
    "HitSingularSet",
    "LeftDomain",
    "ModelError",
    "NuelabError",
    "Observable",
    "Region",
    "SchemaError",
    "SystemConfigError",
    "available_families",
    "build_system",
]
