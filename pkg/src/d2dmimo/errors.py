"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """A configuration value violates a documented constraint."""


class ClusteringError(RuntimeError):
    """An active user cannot be given the requested number of relay nodes."""


class BeamformingError(RuntimeError):
    """Beamformer computation failed (e.g. rank-deficient effective channel)."""
