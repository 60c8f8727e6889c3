"""Linearized collision operator L = nu*I + K and the bilinear operator.

The default model is a frequency-weighted BGK surrogate
L g = nu (g - P_nu g) / k0, with P_nu the orthogonal projection onto
span{1, v, |v|^2} under the nu-weighted inner product.  This realization is
self-adjoint on the discrete L2(M dv), annihilates exactly the five collision
invariants, satisfies the spectral (coercivity) inequality, and keeps the
two-sided collision-frequency bounds.  A dense symmetric kernel matrix can be
plugged in instead (kind="plugin").

The bilinear surrogate is G(f, g) = (I - P)(nu f g) / (2 k0), symmetric with
range orthogonal to ker L in the plain inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelViolationError
from .velocity import VelocityGrid, kernel_basis, KERNEL_DIM

__all__ = [
    "CollisionModel",
    "default_collision_frequency",
    "collision_frequency",
    "apply_L",
    "apply_K",
    "apply_Gamma",
    "L_matrix",
    "spectral_gap",
    "bgk_kernel_matrix",
    "load_plugin_kernel",
]


def default_collision_frequency(v: np.ndarray) -> np.ndarray:
    """nu(v) = 1 + |v|, matching the hard-sphere growth bounds with
    nu_m = nu_M = 1."""
    v = np.asarray(v, dtype=float)
    return 1.0 + np.sqrt(np.sum(v * v, axis=-1))


@dataclass(frozen=True)
class CollisionModel:
    nu: Callable[[np.ndarray], np.ndarray] = default_collision_frequency
    k0: float = 1.0
    kind: str = "weighted-bgk"
    nu_m: float = 1.0
    nu_M: float = 1.0
    kernel_matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError("k0 must be positive")
        if self.kind not in ("weighted-bgk", "plugin"):
            raise ValueError(f"unknown collision model kind {self.kind!r}")
        if self.kind == "plugin" and self.kernel_matrix is None:
            raise ValueError("plugin model requires a kernel matrix")

    def frequencies(self, grid: VelocityGrid) -> np.ndarray:
        return np.asarray(self.nu(grid.nodes), dtype=float)


def collision_frequency(v, model: CollisionModel) -> float:
    """nu(v) at a single velocity."""
    return float(model.nu(np.asarray(v, dtype=float)))


def check_frequency_bounds(model: CollisionModel, grid: VelocityGrid) -> bool:
    """nu_m (1+|v|) <= nu(v) <= nu_M (1+|v|) at every node."""
    nu = model.frequencies(grid)
    base = 1.0 + grid.speed
    return bool(np.all(nu >= model.nu_m * base - 1e-14)
                and np.all(nu <= model.nu_M * base + 1e-14))


class WeightedProjector:
    """Orthogonal projection onto span{1, v, |v|^2} in a weighted inner
    product sum_k m_k f_k g_k.  Precomputes the Gram factorization so that
    repeated applications inside solvers stay cheap."""

    def __init__(self, grid: VelocityGrid, point_weights: np.ndarray):
        self.basis = kernel_basis(grid)
        self.wb = point_weights[:, None] * self.basis
        gram = self.basis.T @ self.wb
        self._gram_inv = np.linalg.inv(gram)

    def coefficients(self, g: np.ndarray) -> np.ndarray:
        return (g @ self.wb) @ self._gram_inv

    def apply(self, g: np.ndarray) -> np.ndarray:
        """Works on (..., n) stacks of node-value vectors."""
        return self.coefficients(g) @ self.basis.T

    def matrix(self) -> np.ndarray:
        return self.basis @ self._gram_inv @ self.wb.T


def nu_weighted_projector(model: CollisionModel, grid: VelocityGrid) -> WeightedProjector:
    return WeightedProjector(grid, grid.weights * model.frequencies(grid))


def plain_projector(grid: VelocityGrid) -> WeightedProjector:
    return WeightedProjector(grid, grid.weights)


def apply_L(g, model: CollisionModel, grid: VelocityGrid) -> np.ndarray:
    """L g on node values; accepts (..., n) stacks."""
    g = np.asarray(g, dtype=float)
    nu = model.frequencies(grid)
    if model.kind == "plugin":
        return (nu * g + g @ model.kernel_matrix.T) / model.k0
    proj = nu_weighted_projector(model, grid)
    return nu * (g - proj.apply(g)) / model.k0


def apply_K(g, model: CollisionModel, grid: VelocityGrid) -> np.ndarray:
    """The compact part K = L - nu*I applied to node values."""
    g = np.asarray(g, dtype=float)
    nu = model.frequencies(grid)
    if model.kind == "plugin":
        return (g @ model.kernel_matrix.T) / model.k0
    proj = nu_weighted_projector(model, grid)
    return -nu * proj.apply(g) / model.k0


def apply_Gamma(f, g, model: CollisionModel, grid: VelocityGrid) -> np.ndarray:
    """Symmetric bilinear surrogate (I - P)(nu f g) / (2 k0).

    Output is orthogonal to ker L in the plain inner product, which is what
    the remainder equation needs from its quadratic source.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    nu = model.frequencies(grid)
    prod = nu * (f * g)
    proj = plain_projector(grid)
    return (prod - proj.apply(prod)) / (2.0 * model.k0)


def L_matrix(model: CollisionModel, grid: VelocityGrid) -> np.ndarray:
    """Dense matrix of L acting on node-value vectors."""
    nu = model.frequencies(grid)
    if model.kind == "plugin":
        return (np.diag(nu) + model.kernel_matrix) / model.k0
    proj = nu_weighted_projector(model, grid)
    return np.diag(nu) @ (np.eye(grid.size) - proj.matrix()) / model.k0


def bgk_kernel_matrix(model: CollisionModel, grid: VelocityGrid) -> np.ndarray:
    """K = -nu P_nu as a dense matrix (the weighted-BGK compact part).
    Useful as plugin-interface test data."""
    proj = nu_weighted_projector(model, grid)
    return -np.diag(model.frequencies(grid)) @ proj.matrix()


def spectral_gap(model: CollisionModel, grid: VelocityGrid,
                 zero_tol: float = 1e-10):
    """Smallest nonzero eigenvalue of L on the discrete L2(M dv).

    Returns (gap, kernel_dimension).  The eigenproblem is symmetrized with
    D = diag(sqrt(w)); eigenvalues below zero_tol count as kernel.
    """
    lmat = L_matrix(model, grid)
    d = np.sqrt(grid.weights)
    sym = (d[:, None] * lmat) / d[None, :]
    sym = 0.5 * (sym + sym.T)
    eigvals = np.linalg.eigvalsh(sym)
    kernel_dim = int(np.sum(np.abs(eigvals) <= zero_tol))
    nonzero = eigvals[np.abs(eigvals) > zero_tol]
    if nonzero.size == 0:
        raise ModelViolationError("collision operator has no positive spectrum")
    return float(nonzero.min()), kernel_dim


def load_plugin_kernel(path, grid: VelocityGrid,
                       nu: Callable = default_collision_frequency,
                       k0: float = 1.0,
                       tol: float = 1e-8) -> CollisionModel:
    """Build a plugin model from a dense kernel matrix stored as .npy or CSV.

    Validates self-adjointness of L = nu I + K in L2(M dv) (symmetry of W K)
    and annihilation of the five collision invariants; both raise
    ModelViolationError on failure.
    """
    path = str(path)
    if path.endswith(".npy"):
        kmat = np.load(path)
    else:
        kmat = np.loadtxt(path, delimiter=",")
    kmat = np.asarray(kmat, dtype=float)
    n = grid.size
    if kmat.shape != (n, n):
        raise ModelViolationError(
            f"kernel matrix shape {kmat.shape} does not match grid size {n}")

    wk = grid.weights[:, None] * kmat
    scale = max(1.0, float(np.abs(wk).max()))
    sym_defect = float(np.abs(wk - wk.T).max()) / scale
    if sym_defect > tol:
        raise ModelViolationError(
            f"plugin kernel not self-adjoint in L2(M dv): defect {sym_defect:.3e}")

    model = CollisionModel(nu=nu, k0=k0, kind="plugin", kernel_matrix=kmat)
    basis = kernel_basis(grid)
    for j in range(KERNEL_DIM):
        defect = np.linalg.norm(apply_L(basis[:, j], model, grid))
        if defect > tol * max(1.0, np.linalg.norm(basis[:, j])):
            raise ModelViolationError(
                f"plugin kernel does not annihilate invariant {j}: {defect:.3e}")
    return model
