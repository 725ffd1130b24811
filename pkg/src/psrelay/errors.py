"""Exception types shared across the solvers."""


class DegenerateBudgetError(ValueError):
    """The harvested-energy budget is identically zero, so the dual
    root that would size the relay allocation does not exist."""


class DualBracketError(RuntimeError):
    """A sign-changing bracket for a dual variable could not be
    established within the expansion cap."""


class InfeasibleSubproblemError(DualBracketError):
    """No dual pair satisfies both the source-power and harvested-energy
    constraints for the requested allocation."""
