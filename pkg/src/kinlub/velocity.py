"""Velocity-space discretization of L2(M dv).

The reference measure is the normalized Maxwellian
M(v) = (2 pi)^(-3/2) exp(-|v|^2 / 2).  Quadrature nodes and weights absorb M,
so every velocity inner product in the suite is a plain weighted sum over the
tensor Gauss-Hermite nodes.  Grids are immutable and safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "VelocityGrid",
    "FluidMoments",
    "build_velocity_grid",
    "inner_product",
    "project_kernel",
    "orthogonal_part",
    "kernel_basis",
]

# span{1, v_x, v_y, v_z, (|v|^2 - 3)/2}
KERNEL_DIM = 5


@dataclass(frozen=True)
class VelocityGrid:
    """Tensor Gauss quadrature for the Gaussian measure M dv.

    ``order`` nodes per axis, ``order**3`` nodes total.  Weights sum to one
    (the Maxwellian is normalized) and the rule integrates polynomial moments
    exactly up to degree ``2*order - 1`` per axis.  Node coordinates are
    exactly antisymmetric under v -> -v so that odd moments cancel to zero,
    not merely to rounding level.
    """

    order: int
    nodes: np.ndarray    # (n, 3)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def vx(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def vy(self) -> np.ndarray:
        return self.nodes[:, 1]

    @property
    def vz(self) -> np.ndarray:
        return self.nodes[:, 2]

    @property
    def speed(self) -> np.ndarray:
        return np.sqrt(np.sum(self.nodes**2, axis=1))

    def axis_swap_permutation(self, axis_a: int = 0, axis_b: int = 1) -> np.ndarray:
        """Node permutation realizing the coordinate swap v[a] <-> v[b].

        The tensor grid is closed under axis swaps, so for any sampled
        function f the array ``f[perm]`` equals f evaluated at the swapped
        velocities.  Used for the x/y symmetry of the slab solves.
        """
        o = self.order
        idx = np.arange(o**3).reshape(o, o, o)
        order_axes = [0, 1, 2]
        order_axes[axis_a], order_axes[axis_b] = order_axes[axis_b], order_axes[axis_a]
        return idx.transpose(order_axes).ravel()

    def moment(self, powers) -> float:
        """Quadrature value of the monomial moment <v_x^a v_y^b v_z^c>."""
        a, b, c = powers
        f = self.vx**a * self.vy**b * self.vz**c
        return float(np.dot(self.weights, f))

    def max_moment_error(self, max_total_degree: int = 6) -> float:
        """Worst absolute defect of monomial moments against closed forms."""
        worst = 0.0
        for a in range(max_total_degree + 1):
            for b in range(max_total_degree + 1 - a):
                for c in range(max_total_degree + 1 - a - b):
                    exact = (_gauss_moment_1d(a) * _gauss_moment_1d(b)
                             * _gauss_moment_1d(c))
                    worst = max(worst, abs(self.moment((a, b, c)) - exact))
        return worst

    def summary(self) -> dict:
        return {
            "order": self.order,
            "node_count": self.size,
            "weight_sum_defect": float(abs(self.weights.sum() - 1.0)),
            "max_moment_error_deg6": self.max_moment_error(6),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


@dataclass(frozen=True)
class FluidMoments:
    """Coefficients of the projection onto span{1, v, |v|^2}:
    P f = a + v . b + c (|v|^2 - 3)/2."""

    a: float
    b: np.ndarray  # (3,)
    c: float

    def evaluate(self, grid: VelocityGrid) -> np.ndarray:
        """Sample the projected function P f on the grid nodes."""
        return (self.a + grid.nodes @ self.b
                + 0.5 * self.c * (grid.speed**2 - 3.0))


def _gauss_moment_1d(k: int) -> float:
    """E[X^k] for standard normal X: 0 for odd k, (k-1)!! for even k."""
    if k % 2 == 1:
        return 0.0
    m = 1.0
    for j in range(k - 1, 0, -2):
        m *= j
    return m


def build_velocity_grid(order: int) -> VelocityGrid:
    """Tensor probabilists'-Hermite rule for the normalized Maxwellian.

    Raises ValueError for order < 2.
    """
    if order < 2:
        raise ValueError(f"velocity grid order must be >= 2, got {order}")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    # exact antisymmetry of nodes / symmetry of weights
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / np.sqrt(2.0 * np.pi)

    vx, vy, vz = np.meshgrid(x, x, x, indexing="ij")
    wx, wy, wz = np.meshgrid(w, w, w, indexing="ij")
    nodes = np.column_stack([vx.ravel(), vy.ravel(), vz.ravel()])
    weights = (wx * wy * wz).ravel()
    return VelocityGrid(order=order, nodes=nodes, weights=weights)


def inner_product(f, g, grid: VelocityGrid) -> float:
    """Scalar product on the discrete L2(M dv): sum_k w_k f_k g_k."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.size,) or g.shape != (grid.size,):
        raise ValueError(
            f"expected node-value vectors of length {grid.size}, "
            f"got shapes {f.shape} and {g.shape}")
    return float(np.dot(grid.weights, f * g))


def kernel_basis(grid: VelocityGrid) -> np.ndarray:
    """Node values of the five collision-invariant basis functions,
    columns [1, v_x, v_y, v_z, (|v|^2-3)/2]."""
    n = grid.size
    basis = np.empty((n, KERNEL_DIM))
    basis[:, 0] = 1.0
    basis[:, 1:4] = grid.nodes
    basis[:, 4] = 0.5 * (grid.speed**2 - 3.0)
    return basis


def _gram_solve(basis: np.ndarray, weights: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    gram = basis.T @ (weights[:, None] * basis)
    return np.linalg.solve(gram, rhs)


def project_kernel(f, grid: VelocityGrid) -> FluidMoments:
    """L2(M dv)-orthogonal projection coefficients of f onto span{1, v, |v|^2}.

    Solves the 5x5 Gram system in the discrete inner product, which makes the
    projection exactly idempotent on the grid.  Requires order >= 3 so the
    degree-4 Gram entries are integrated exactly.
    """
    if grid.order < 3:
        raise ValueError("project_kernel requires grid order >= 3")
    f = np.asarray(f, dtype=float)
    basis = kernel_basis(grid)
    coef = _gram_solve(basis, grid.weights, basis.T @ (grid.weights * f))
    return FluidMoments(a=float(coef[0]), b=coef[1:4].copy(), c=float(coef[4]))


def project_kernel_batch(fields: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Projection coefficients for many functions at once.

    ``fields`` has node values along its last axis; returns coefficients
    with a trailing axis of length 5 ordered [a, b1, b2, b3, c].
    """
    if grid.order < 3:
        raise ValueError("project_kernel requires grid order >= 3")
    fields = np.asarray(fields, dtype=float)
    basis = kernel_basis(grid)
    gram = basis.T @ (grid.weights[:, None] * basis)
    rhs = fields @ (grid.weights[:, None] * basis)       # (..., 5)
    flat = np.linalg.solve(gram, rhs.reshape(-1, KERNEL_DIM).T).T
    return flat.reshape(fields.shape[:-1] + (KERNEL_DIM,))


def orthogonal_part(f, grid: VelocityGrid) -> np.ndarray:
    """f - P f, the component orthogonal to the collision invariants."""
    f = np.asarray(f, dtype=float)
    return f - project_kernel(f, grid).evaluate(grid)
