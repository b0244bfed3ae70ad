"""Exception types shared across the package."""


class HypfluxError(Exception):
    """Base class for all package errors."""


class MeshError(HypfluxError):
    """Invalid mesh geometry, topology, or regularity."""


class ConstructionError(HypfluxError):
    """A system or flux scheme could not be built from the given parameters."""


class AdmissibilityError(HypfluxError):
    """A state left the admissible set."""


class ConfigError(HypfluxError):
    """Invalid run/study configuration."""


class HorizonError(HypfluxError):
    """A reference solution was evaluated past its validity horizon."""
