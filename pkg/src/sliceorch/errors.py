"""Exception types shared across the package."""


class SliceOrchError(Exception):
    """Base class for all workbench errors."""


class CapacityExceededError(SliceOrchError):
    """Requested svRBs exceed the infrastructure capacity."""


class InfeasibleCapacityError(SliceOrchError):
    """The per-slice minimum allocations alone exceed capacity."""


class NoFeasibleActionError(SliceOrchError):
    """Exhaustive search found no action meeting every SLA."""


class ScenarioError(SliceOrchError):
    """A scenario file or dict failed validation."""


class GpFitError(SliceOrchError):
    """Gram matrix factorization failed even after jitter escalation."""


class GridCapExceededError(SliceOrchError):
    """A sweep grid is larger than the configured cap."""
