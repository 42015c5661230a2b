"""Exception types shared across the simulator.

The CLI maps these onto exit codes: input-side problems (bad manifests,
bad configs, validation failures) exit 2, everything else exits 1.
"""


class AdeSimError(Exception):
    """Base class for all simulator errors."""


class ManifestError(AdeSimError):
    """A graph or parameter manifest could not be parsed."""


class ValidationError(AdeSimError):
    """Structurally valid input violates a data invariant."""


class SpecError(AdeSimError):
    """A metapath or model specification is internally inconsistent."""


class ContractError(AdeSimError):
    """An operation was called outside its precondition."""


class ConfigError(AdeSimError):
    """A hardware or run configuration is unusable."""
