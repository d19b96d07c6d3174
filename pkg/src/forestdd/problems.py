"""Model problems: Poisson with f=1, manufactured arctan layer, elasticity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LAYER_RADIUS = math.pi / 3.0


@dataclass(frozen=True)
class Problem:
    kind: str
    dimension: int
    s: float = 60.0
    E: float = 1e10
    nu: float = 1.0 / 3.0
    F: tuple = (0.0, 0.0, -1e5)

    @property
    def n_components(self) -> int:
        return self.dimension if self.kind == "elasticity" else 1

    @property
    def has_exact(self) -> bool:
        return self.kind == "poisson_arctan"

    @property
    def lame(self) -> tuple[float, float]:
        if self.nu >= 0.5:
            raise ValueError("Poisson ratio 1/2 makes lambda singular")
        lam = self.nu * self.E / ((1 + self.nu) * (1 - 2 * self.nu))
        mu = self.E / (2 * (1 + self.nu))
        return lam, mu

    def _r(self, x: np.ndarray) -> np.ndarray:
        c = np.array([1.25, -0.25, -0.25][: self.dimension])
        return np.linalg.norm(np.atleast_2d(x) - c, axis=1)

    def exact(self, x: np.ndarray) -> np.ndarray:
        if not self.has_exact:
            raise ValueError(f"{self.kind} has no closed-form solution")
        return np.arctan(self.s * (self._r(x) - LAYER_RADIUS))

    def exact_grad(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        c = np.array([1.25, -0.25, -0.25][: self.dimension])
        diff = x - c
        r = np.linalg.norm(diff, axis=1)
        w = self.s * (r - LAYER_RADIUS)
        du = self.s / (1 + w * w)
        return (du / r)[:, None] * diff

    def rhs(self, x: np.ndarray) -> np.ndarray:
        """Source term; (npts,) for scalar problems, (npts, d) for elasticity."""
        x = np.atleast_2d(x)
        if self.kind == "poisson_const":
            return np.ones(len(x))
        if self.kind == "elasticity":
            return np.broadcast_to(np.asarray(self.F, dtype=float), (len(x), self.dimension)).copy()
        # -laplace(arctan(s(r - R))) with radial laplacian u'' + (d-1)/r u'
        r = self._r(x)
        w = self.s * (r - LAYER_RADIUS)
        du = self.s / (1 + w * w)
        ddu = -2 * self.s * self.s * w / (1 + w * w) ** 2
        return -(ddu + (self.dimension - 1) / r * du)

    def dirichlet(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "poisson_arctan":
            return self.exact(x)
        if self.n_components == 1:
            return np.zeros(len(x))
        return np.zeros((len(x), self.n_components))


def poisson_const(dimension: int) -> Problem:
    return Problem("poisson_const", dimension)


def poisson_arctan(dimension: int, s: float = 60.0) -> Problem:
    return Problem("poisson_arctan", dimension, s=s)


def elasticity(E: float = 1e10, nu: float = 1.0 / 3.0,
               F: tuple = (0.0, 0.0, -1e5)) -> Problem:
    return Problem("elasticity", 3, E=E, nu=nu, F=F)
