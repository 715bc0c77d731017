"""Exception types shared across the solver modules."""


class SolverError(RuntimeError):
    """An internal invariant of the solver was violated.

    Raised when a state that the algorithm guarantees (feasibility,
    potential drop, consistent tree systems, ...) fails to hold.  This
    always indicates a bug or a corrupted state, never bad input.
    """


class GenericityError(RuntimeError):
    """The instance violated a genericity assumption mid-run.

    The solvers assume the (perturbed) instance is generic: the equality
    graph is cycle-free at every price vector and each of its connected
    components contains at most one buyer whose best bang-per-buck is
    exactly one.  A random perturbation satisfies this with overwhelming
    probability; when a violation is still detected, the driver retries
    with a fresh perturbation seed.
    """
