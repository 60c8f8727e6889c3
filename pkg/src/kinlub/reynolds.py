"""Generalized Reynolds equation div(A(rho) grad rho) = 0 on a planar domain.

The solve follows the Kirchhoff-transform construction: gamma = G(rho) with
G' = A turns the quasilinear equation into the Laplace equation, which is
solved with the standard 5-point stencil; rho is recovered node-wise by
inverting the strictly increasing primitive.  The 5-point operator is an
M-matrix, so the discrete maximum principle holds exactly and transfers to
rho through the monotone transform.

Domains are rectangles or regions bounded between two graphs y_lo(x) and
y_hi(x); for the latter the curved boundary is resolved by flagging grid
nodes (interior nodes have all four neighbors inside the region, remaining
inside nodes carry the Dirichlet trace).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientTable
from .errors import TableRangeError

__all__ = [
    "PlanarDomain",
    "DensityField",
    "harmonic_solve",
    "solve_reynolds",
    "solve_reynolds_profile",
    "reynolds_residual",
    "classical_reynolds_reference",
]


@dataclass(frozen=True)
class PlanarDomain:
    """Uniformly gridded planar region with interior/boundary node flags.

    ``interior`` marks nodes whose four neighbors all lie inside the region;
    ``boundary`` marks the remaining inside nodes (where Dirichlet data is
    imposed).  Arrays are indexed [iy, ix].
    """

    kind: str
    xgrid: np.ndarray
    ygrid: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray

    @property
    def hx(self) -> float:
        return float(self.xgrid[1] - self.xgrid[0])

    @property
    def hy(self) -> float:
        return float(self.ygrid[1] - self.ygrid[0])

    @property
    def inside(self) -> np.ndarray:
        return self.interior | self.boundary

    def meshgrid(self):
        return np.meshgrid(self.xgrid, self.ygrid, indexing="xy")

    @classmethod
    def rectangle(cls, nx: int, ny: int, x0: float = 0.0, x1: float = 1.0,
                  y0: float = 0.0, y1: float = 1.0) -> "PlanarDomain":
        if nx < 3 or ny < 3:
            raise ValueError("rectangle needs at least 3 nodes per direction")
        xg = np.linspace(x0, x1, nx)
        yg = np.linspace(y0, y1, ny)
        interior = np.zeros((ny, nx), dtype=bool)
        interior[1:-1, 1:-1] = True
        boundary = np.ones((ny, nx), dtype=bool) & ~interior
        return cls("rectangle", xg, yg, interior, boundary)

    @classmethod
    def graph_bounded(cls, y_lo, y_hi, x0: float = 0.0, x1: float = 1.0,
                      h: float = 1.0 / 32) -> "PlanarDomain":
        """Region {(x, y): x in [x0, x1], y_lo(x) < y < y_hi(x)} with the two
        bounding curves required to have finite second derivative."""
        nx = int(round((x1 - x0) / h)) + 1
        xg = np.linspace(x0, x1, nx)
        lo = np.array([float(y_lo(x)) for x in xg])
        hi = np.array([float(y_hi(x)) for x in xg])
        if np.any(hi - lo <= 2 * h):
            raise ValueError("graph-bounded region too thin for spacing h")
        for curve in (lo, hi):
            d2 = np.diff(curve, 2) / h**2
            if not np.all(np.isfinite(d2)):
                raise ValueError("bounding curve has unbounded second derivative")
        ymin, ymax = lo.min(), hi.max()
        ny = int(np.ceil((ymax - ymin) / h)) + 3
        yg = ymin - h + np.arange(ny) * h
        xx, yy = np.meshgrid(xg, yg, indexing="xy")
        inside = (yy > lo[None, :]) & (yy < hi[None, :])
        inside[:, 0] = False
        inside[:, -1] = False
        interior = inside.copy()
        interior[:, 1:] &= inside[:, :-1]
        interior[:, :-1] &= inside[:, 1:]
        interior[1:, :] &= inside[:-1, :]
        interior[:-1, :] &= inside[1:, :]
        interior[0, :] = False
        interior[-1, :] = False
        boundary = inside & ~interior
        if not interior.any():
            raise ValueError("degenerate graph-bounded domain: no interior nodes")
        return cls("graph-bounded", xg, yg, interior, boundary)


def _boundary_values(domain: PlanarDomain, data) -> np.ndarray:
    """Full-grid array with Dirichlet data filled on boundary nodes."""
    vals = np.zeros(domain.boundary.shape)
    if callable(data):
        xx, yy = domain.meshgrid()
        vals[domain.boundary] = np.vectorize(data)(xx[domain.boundary],
                                                   yy[domain.boundary])
    else:
        data = np.asarray(data, dtype=float)
        if data.shape != domain.boundary.shape:
            raise ValueError("boundary data array must cover the full grid")
        vals[domain.boundary] = data[domain.boundary]
    if not np.all(np.isfinite(vals[domain.boundary])):
        raise ValueError("boundary data must be finite")
    return vals


def _laplace_system(domain: PlanarDomain, bvals: np.ndarray):
    """SPD system for -Laplace u = 0 on interior nodes, Dirichlet data
    folded into the right-hand side."""
    ny, nx = domain.interior.shape
    index = -np.ones((ny, nx), dtype=int)
    ii = np.nonzero(domain.interior)
    index[ii] = np.arange(ii[0].size)
    n = ii[0].size
    cx = 1.0 / domain.hx**2
    cy = 1.0 / domain.hy**2
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for (iy, ix), me in zip(zip(*ii), range(n)):
        rows.append(me); cols.append(me); vals.append(2 * cx + 2 * cy)
        for jy, jx, c in ((iy, ix - 1, cx), (iy, ix + 1, cx),
                          (iy - 1, ix, cy), (iy + 1, ix, cy)):
            if domain.interior[jy, jx]:
                rows.append(me); cols.append(index[jy, jx]); vals.append(-c)
            elif domain.boundary[jy, jx]:
                rhs[me] += c * bvals[jy, jx]
            else:
                raise ValueError("interior node with neighbor outside the domain")
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return mat, rhs, index


def _spd_solve(mat, rhs, tol=1e-13, residual_cap=1e-10):
    """Diagonally preconditioned CG with an explicit residual guarantee."""
    if rhs.size == 0:
        return rhs.copy()
    dinv = 1.0 / mat.diagonal()
    M = spla.LinearOperator(mat.shape, matvec=lambda v: dinv * v)
    x, info = spla.cg(mat, rhs, rtol=tol, atol=tol * max(1.0, np.linalg.norm(rhs)),
                      maxiter=20 * int(np.sqrt(mat.shape[0]) + 200), M=M)
    res = np.linalg.norm(mat @ x - rhs)
    if info != 0 or res > residual_cap * max(1.0, np.linalg.norm(rhs)):
        x = spla.spsolve(mat.tocsc(), rhs)
        res = np.linalg.norm(mat @ x - rhs)
        if res > residual_cap * max(1.0, np.linalg.norm(rhs)):
            raise RuntimeError(f"elliptic solve residual {res:.3e} too large")
    return x


def harmonic_solve(domain: PlanarDomain, data) -> np.ndarray:
    """Discrete-harmonic extension of Dirichlet data (5-point Laplacian).

    Returns a full-grid array; nodes outside the region are NaN.
    """
    bvals = _boundary_values(domain, data)
    mat, rhs, index = _laplace_system(domain, bvals)
    x = _spd_solve(mat, rhs)
    out = np.full(domain.boundary.shape, np.nan)
    out[domain.boundary] = bvals[domain.boundary]
    out[domain.interior] = x
    return out


@dataclass
class DensityField:
    """Density rho on a planar grid (2D) or a 1D profile (ygrid=None).

    Carries the Dirichlet trace; the invariants min rho0 <= rho <= max rho0
    and rho > 0 are enforced at construction.
    """

    xgrid: np.ndarray
    values: np.ndarray
    ygrid: np.ndarray | None = None
    domain: PlanarDomain | None = None
    metadata: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        self.xgrid = np.asarray(self.xgrid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        finite = self.values[np.isfinite(self.values)]
        if finite.size == 0 or np.any(finite <= 0):
            raise ValueError("density must be positive")
        bvals = self.trace_values()
        lo, hi = bvals.min(), bvals.max()
        slack = 1e-12 * max(1.0, abs(hi))
        if finite.min() < lo - slack or finite.max() > hi + slack:
            raise ValueError("density violates the maximum principle bounds")

    @property
    def is_profile(self) -> bool:
        return self.ygrid is None

    def trace_values(self) -> np.ndarray:
        if self.is_profile:
            return np.array([self.values[0], self.values[-1]])
        return self.values[self.domain.boundary]

    def gradient(self):
        """Central-difference gradient (one-sided second order at edges)."""
        if self.is_profile:
            gx = np.gradient(self.values, self.xgrid, edge_order=2)
            return gx, np.zeros_like(gx)
        gy, gx = np.gradient(self.values, self.ygrid, self.xgrid, edge_order=2)
        return gx, gy

    def to_csv(self, path):
        if self.is_profile:
            data = np.column_stack([self.xgrid, self.values])
            np.savetxt(path, data, fmt="%.17e", delimiter=",",
                       header="x,rho", comments="")
            return
        xx, yy = self.domain.meshgrid()
        mask = self.domain.inside
        data = np.column_stack([xx[mask], yy[mask], self.values[mask]])
        np.savetxt(path, data, fmt="%.17e", delimiter=",",
                   header="x,y,rho", comments="")

    def to_json(self, path=None) -> str:
        finite = self.values[np.isfinite(self.values)]
        payload = dict(self.metadata)
        payload.update({
            "min_rho": float(finite.min()),
            "max_rho": float(finite.max()),
            "profile": self.is_profile,
            "nx": int(self.xgrid.size),
            "ny": int(self.ygrid.size) if self.ygrid is not None else 1,
        })
        text = json.dumps(payload, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _check_trace_range(bvals, table: CoefficientTable):
    if np.any(bvals <= table.rho_m):
        raise TableRangeError("boundary density must exceed the table's rho_m")
    if np.any(bvals > table.rho_max + 1e-12):
        raise TableRangeError("boundary density exceeds the tabulated range")


def solve_reynolds(domain: PlanarDomain, rho0, table: CoefficientTable) -> DensityField:
    """Kirchhoff-transform solve: gamma = G(rho0) on the boundary, harmonic
    inside, rho = Ginv(gamma) node-wise."""
    bvals = _boundary_values(domain, rho0)
    _check_trace_range(bvals[domain.boundary], table)
    gamma_b = np.zeros_like(bvals)
    gamma_b[domain.boundary] = table.G(bvals[domain.boundary])
    gamma = harmonic_solve(domain, gamma_b)
    rho = np.full_like(gamma, np.nan)
    mask = domain.inside
    rho[mask] = table.invert_G(gamma[mask])
    return DensityField(xgrid=domain.xgrid, ygrid=domain.ygrid,
                        values=rho, domain=domain,
                        metadata={"rho_m": table.rho_m})


def solve_reynolds_profile(rho0_left: float, rho0_right: float,
                           table: CoefficientTable, xgrid) -> DensityField:
    """One-dimensional generalized Reynolds solve: the transformed variable
    is linear in x, so the construction is exact."""
    xgrid = np.asarray(xgrid, dtype=float)
    bvals = np.array([rho0_left, rho0_right], dtype=float)
    _check_trace_range(bvals, table)
    gl, gr = table.G(rho0_left), table.G(rho0_right)
    s = (xgrid - xgrid[0]) / (xgrid[-1] - xgrid[0])
    gamma = gl + s * (gr - gl)
    rho = table.invert_G(gamma)
    return DensityField(xgrid=xgrid, values=rho,
                        metadata={"rho_m": table.rho_m})


def reynolds_residual(field: DensityField, table: CoefficientTable,
                      domain: PlanarDomain | None = None) -> float:
    """Max-norm of the conservative finite-difference divergence of
    A(rho) grad rho over nodes whose full 5-point stencil lies inside."""
    if field.is_profile:
        rho = field.values
        hx = field.xgrid[1] - field.xgrid[0]
        aface = np.asarray(table.A(0.5 * (rho[1:] + rho[:-1])))
        flux = aface * np.diff(rho) / hx
        return float(np.abs(np.diff(flux) / hx).max())
    domain = domain or field.domain
    rho = field.values
    hx, hy = domain.hx, domain.hy
    inside = domain.inside
    ny, nx = rho.shape
    core = np.zeros_like(inside)
    core[1:-1, 1:-1] = (inside[1:-1, 1:-1] & inside[1:-1, :-2] & inside[1:-1, 2:]
                        & inside[:-2, 1:-1] & inside[2:, 1:-1])
    res = np.zeros_like(rho)
    ax_e = np.asarray(table.A(0.5 * (rho[:, 1:] + rho[:, :-1])))
    fx = ax_e * np.diff(rho, axis=1) / hx
    ay_n = np.asarray(table.A(0.5 * (rho[1:, :] + rho[:-1, :])))
    fy = ay_n * np.diff(rho, axis=0) / hy
    res[1:-1, 1:-1] = (np.diff(fx, axis=1)[1:-1, :] / hx
                       + np.diff(fy, axis=0)[:, 1:-1] / hy)
    vals = np.abs(res[core])
    return float(vals.max()) if vals.size else 0.0


def classical_reynolds_reference(domain: PlanarDomain, H_profile, U: float,
                                 boundary_data) -> np.ndarray:
    """Baseline lubrication solve: d/dx(H^3 dp/dx) + d/dy(H^3 dp/dy)
    = 6 U dH/dx with Dirichlet data, same conservative discretization.

    ``H_profile`` is a positive callable H(x, y); its x-derivative on the
    right-hand side is evaluated by central differences of the sampled H.
    """
    xx, yy = domain.meshgrid()
    hfield = np.vectorize(H_profile)(xx, yy).astype(float)
    if np.any(hfield <= 0):
        raise ValueError("film thickness profile must be positive")
    bvals = _boundary_values(domain, boundary_data)

    ny, nx = hfield.shape
    hx, hy = domain.hx, domain.hy
    index = -np.ones((ny, nx), dtype=int)
    ii = np.nonzero(domain.interior)
    index[ii] = np.arange(ii[0].size)
    n = ii[0].size
    dhdx = np.gradient(hfield, domain.xgrid, axis=1, edge_order=2)

    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    h3 = hfield**3
    for (iy, ix), me in zip(zip(*ii), range(n)):
        diag = 0.0
        for jy, jx, hstep in ((iy, ix - 1, hx), (iy, ix + 1, hx),
                              (iy - 1, ix, hy), (iy + 1, ix, hy)):
            cface = 0.5 * (h3[iy, ix] + h3[jy, jx]) / hstep**2
            diag += cface
            if domain.interior[jy, jx]:
                rows.append(me); cols.append(index[jy, jx]); vals.append(-cface)
            elif domain.boundary[jy, jx]:
                rhs[me] += cface * bvals[jy, jx]
            else:
                raise ValueError("interior node with neighbor outside the domain")
        rows.append(me); cols.append(me); vals.append(diag)
        rhs[me] += -6.0 * U * dhdx[iy, ix]
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    x = _spd_solve(mat, rhs)
    out = np.full(hfield.shape, np.nan)
    out[domain.boundary] = bvals[domain.boundary]
    out[domain.interior] = x
    return out
