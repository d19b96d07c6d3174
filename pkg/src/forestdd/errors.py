"""Exception types shared across the package."""


class ForestddError(Exception):
    """Base class for all package errors."""


class LevelCapError(ForestddError):
    """Refinement would exceed the maximum tree level."""

    def __init__(self, tree: int, level: int, morton: int, max_level: int):
        self.tree = tree
        self.level = level
        self.morton = morton
        self.max_level = max_level
        super().__init__(
            f"cell (tree={tree}, level={level}, morton={morton}) cannot be refined "
            f"past max_level={max_level}"
        )


class UnbalancedForestError(ForestddError):
    """Operation requires a 2:1 balanced forest."""


class FactorizationError(ForestddError):
    """Base class for direct-solver failures."""


class NotPositiveDefiniteError(FactorizationError):
    """A Cholesky pivot was non-positive."""

    def __init__(self, pivot_index: int, value: float):
        self.pivot_index = pivot_index
        self.value = value
        super().__init__(f"non-positive pivot {value:.3e} at index {pivot_index}")


class SingularMatrixError(FactorizationError):
    """The matrix is numerically or structurally singular."""


class UnderconstrainedComponentError(ForestddError):
    """A floating subdomain component has fewer constraints than nullspace modes."""

    def __init__(self, subdomain: int, component: int, n_constraints: int, required: int):
        self.subdomain = subdomain
        self.component = component
        self.n_constraints = n_constraints
        self.required = required
        super().__init__(
            f"subdomain {subdomain}, component {component}: {n_constraints} constraints "
            f"cannot control a nullspace of dimension {required}"
        )
