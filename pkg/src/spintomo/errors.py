"""Exception types shared across the package.

Usage errors (bad arguments, malformed files) raise plain ``ValueError`` /
``OSError``; the classes below mark failures of physics or numerics that can
only be detected from the data itself.
"""


class PhysicalityError(Exception):
    """A state, channel, or derived quantity violates a physical invariant.

    Raised for non-unit traces, negative eigenvalues beyond tolerance,
    covariances below the Heisenberg floor, unresolvable calibrations, and
    integrator steps that left the physical state space.
    """


class ConvergenceError(Exception):
    """An iterative estimator failed to make progress."""
