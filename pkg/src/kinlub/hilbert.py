"""Hilbert-expansion terms over the planar density field.

The first-order term solves the slab problem per column,
g1 = -(d rho/dx) Rinv v_x - (d rho/dy) Rinv v_y with Rinv the diffuse-wall
slab solve at that column's density; the second-order term solves
g2 = Rinv(2 G(g1, g1) - v_x d g1/dx - v_y d g1/dy).  Columns with equal
density share the two base solves through a cache, and the y-direction base
solve is the x-direction one relabeled through the grid's axis-swap
permutation.

The averaged mass conservation of g1 is precisely the generalized Reynolds
residual of the density field, so build_g2's solvability check doubles as a
diagnostic that the density actually solves the Reynolds equation: the
z-integrated mass of its source vanishes only up to the planar-discretization
error, which is reported and removed explicitly before the slab solve (the
slab solver itself keeps rejecting incompatible data).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .collision import CollisionModel, apply_Gamma
from .errors import SolvabilityError
from .reynolds import DensityField
from .slab import (SlabField, SlabOptions, box_residual, solve_diffuse,
                   wall_mass_flux, z_weights)
from .velocity import VelocityGrid

__all__ = [
    "ExpansionField",
    "build_g1",
    "mass_flux_divergence",
    "build_g2",
    "boundary_traces",
    "order1_residual",
    "order2_residual",
]


@dataclass
class ExpansionField:
    """Expansion terms on spatial columns: arrays indexed (*space, z, v).

    ``space`` is (ny, nx) for a rectangle field or (nx,) for a profile.
    """

    density: DensityField
    zgrid: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray | None
    g1: np.ndarray
    g2: np.ndarray | None = None
    g2_source: np.ndarray | None = None
    compat_defects: np.ndarray | None = None
    metadata: dict = dataclass_field(default_factory=dict)

    @property
    def space_shape(self):
        return self.g1.shape[:-2]

    @property
    def is_profile(self) -> bool:
        return self.density.is_profile

    def column_iter(self):
        for s in np.ndindex(self.space_shape):
            yield s

    def summary_csv(self, path, grid: VelocityGrid):
        """Per-column norms and the g2 compatibility defects."""
        tw = z_weights(self.zgrid)
        rows = []
        for s in self.column_iter():
            n1 = np.sqrt(np.dot(tw, (self.g1[s] ** 2) @ grid.weights))
            n2 = (np.sqrt(np.dot(tw, (self.g2[s] ** 2) @ grid.weights))
                  if self.g2 is not None else np.nan)
            dd = (self.compat_defects[s]
                  if self.compat_defects is not None else np.nan)
            rows.append((*s, n1, n2, dd))
        data = np.array(rows, dtype=float)
        ncoord = len(self.space_shape)
        header = ",".join(["iy", "ix"][2 - ncoord:] + ["g1_norm", "g2_norm",
                                                       "g2_mass_defect"])
        np.savetxt(path, data, fmt="%.17e", delimiter=",", header=header,
                   comments="")

    def dump_binary(self, path_prefix):
        """Row-major float64 dumps with dimension headers (.npy layout)."""
        np.save(f"{path_prefix}_g1.npy", self.g1)
        if self.g2 is not None:
            np.save(f"{path_prefix}_g2.npy", self.g2)


def _check_rectangle(density: DensityField):
    if density.is_profile:
        return
    if density.domain is None or density.domain.kind != "rectangle":
        raise ValueError("expansion construction supports rectangle domains "
                         "and 1D profiles")


def build_g1(rho_field: DensityField, model: CollisionModel,
             grid: VelocityGrid, zgrid, opts: SlabOptions | None = None,
             cache: dict | None = None, rho_quantum: float = 1e-6) -> ExpansionField:
    """First expansion term per column (free constant taken as zero).

    The base solve Rinv v_x is computed once per distinct density value
    (quantized to ``rho_quantum``) and shared; Rinv v_y is its x<->y node
    relabeling.
    """
    _check_rectangle(rho_field)
    zgrid = np.asarray(zgrid, dtype=float)
    gx, gy = rho_field.gradient()
    cache = {} if cache is None else cache
    perm = grid.axis_swap_permutation(0, 1)
    nz, nv = zgrid.size, grid.size

    space = rho_field.values.shape
    g1 = np.zeros(space + (nz, nv))
    for s in np.ndindex(space):
        rho = float(rho_field.values[s])
        key = round(rho / rho_quantum)
        if key not in cache:
            try:
                rep, _ = _solve_direction(rho, model, grid, zgrid, opts)
            except Exception as exc:
                raise type(exc)(f"column {s}: {exc}") from exc
            cache[key] = rep.solution.values
        base = cache[key]
        g1[s] = -gx[s] * base - gy[s] * base[:, perm]
    return ExpansionField(density=rho_field, zgrid=zgrid,
                          grad_x=gx, grad_y=None if rho_field.is_profile else gy,
                          g1=g1, metadata={"rho_quantum": rho_quantum})


def _solve_direction(rho, model, grid, zgrid, opts):
    h = SlabField.from_velocity_function(zgrid, grid.vx, grid)
    return solve_diffuse(h, rho, model, grid, opts), h


def order1_residual(expansion: ExpansionField, model: CollisionModel,
                    grid: VelocityGrid) -> float:
    """Max over columns of the slab-scheme defect of the first-order balance
    v_z dg1/dz + rho L g1 = -(v_x d rho/dx + v_y d rho/dy)."""
    worst = 0.0
    gx = expansion.grad_x
    gy = expansion.grad_y
    for s in expansion.column_iter():
        drive = -gx[s] * grid.vx
        if gy is not None:
            drive = drive - gy[s] * grid.vy
        h = SlabField.from_velocity_function(expansion.zgrid, drive, grid)
        g = SlabField(expansion.zgrid, expansion.g1[s])
        rho = float(expansion.density.values[s])
        worst = max(worst, box_residual(g, h, rho, model, grid))
    return worst


def mass_flux_divergence(expansion: ExpansionField, grid: VelocityGrid) -> np.ndarray:
    """d/dx int (v_x, g1) dz + d/dy int (v_y, g1) dz on the planar grid.

    For a density solving the generalized Reynolds equation this is the
    equation's residual and decays with the planar spacing squared; for any
    other density it stays order one.
    """
    tw = z_weights(expansion.zgrid)
    wx = grid.weights * grid.vx
    wy = grid.weights * grid.vy
    flux_x = (expansion.g1 @ wx) @ tw
    if expansion.is_profile:
        return np.gradient(flux_x, expansion.density.xgrid, edge_order=2)
    flux_y = (expansion.g1 @ wy) @ tw
    ddx = np.gradient(flux_x, expansion.density.xgrid, axis=1, edge_order=2)
    ddy = np.gradient(flux_y, expansion.density.ygrid, axis=0, edge_order=2)
    return ddx + ddy


def _g2_source(expansion: ExpansionField, model: CollisionModel,
               grid: VelocityGrid) -> np.ndarray:
    g1 = expansion.g1
    gamma_term = 2.0 * apply_Gamma(g1, g1, model, grid)
    if expansion.is_profile:
        dx = np.gradient(g1, expansion.density.xgrid, axis=0, edge_order=2)
        transport = grid.vx * dx
    else:
        dx = np.gradient(g1, expansion.density.xgrid, axis=1, edge_order=2)
        dy = np.gradient(g1, expansion.density.ygrid, axis=0, edge_order=2)
        transport = grid.vx * dx + grid.vy * dy
    return gamma_term - transport


def build_g2(expansion: ExpansionField, model: CollisionModel,
             grid: VelocityGrid, zgrid=None, opts: SlabOptions | None = None,
             compat_tol: float = 0.05) -> ExpansionField:
    """Second expansion term per column (free constant taken as zero).

    The z-integrated mass of the source must vanish when the density solves
    the Reynolds equation; the actual defect (the planar mass-flux divergence)
    is recorded per column, checked against ``compat_tol``, and removed as a
    constant before the slab solve.
    """
    zgrid = expansion.zgrid if zgrid is None else np.asarray(zgrid, dtype=float)
    src = _g2_source(expansion, model, grid)
    tw = z_weights(zgrid)
    height = float(zgrid[-1] - zgrid[0])
    nz, nv = zgrid.size, grid.size

    defects = np.zeros(expansion.space_shape)
    g2 = np.zeros_like(expansion.g1)
    scale = max(1.0, float(np.abs(src).max()))
    for s in expansion.column_iter():
        defect = float(np.dot(tw, src[s] @ grid.weights))
        defects[s] = defect
        if abs(defect) > compat_tol * scale:
            raise SolvabilityError(
                f"column {s}: mass-flux divergence {defect:.3e} too large; "
                f"the density field does not solve the Reynolds equation "
                f"accurately enough")
        src[s] -= defect / height
        rho = float(expansion.density.values[s])
        rep = solve_diffuse(SlabField(zgrid, src[s]), rho, model, grid, opts)
        g2[s] = rep.solution.values
    expansion.g2 = g2
    expansion.g2_source = src
    expansion.compat_defects = defects
    return expansion


def order2_residual(expansion: ExpansionField, model: CollisionModel,
                    grid: VelocityGrid) -> float:
    """Max over columns of the slab-scheme defect of g2 against its
    (mass-corrected) source."""
    if expansion.g2 is None:
        raise ValueError("second-order term not built")
    worst = 0.0
    for s in expansion.column_iter():
        g = SlabField(expansion.zgrid, expansion.g2[s])
        h = SlabField(expansion.zgrid, expansion.g2_source[s])
        rho = float(expansion.density.values[s])
        worst = max(worst, box_residual(g, h, rho, model, grid))
    return worst


def g2_wall_flux(expansion: ExpansionField, grid: VelocityGrid) -> float:
    """Largest wall mass flux of the second-order term over all columns."""
    worst = 0.0
    for s in expansion.column_iter():
        f0, fH = wall_mass_flux(SlabField(expansion.zgrid, expansion.g2[s]), grid)
        worst = max(worst, abs(f0), abs(fH))
    return worst


@dataclass
class EdgeTrace:
    """Expansion traces on one lateral edge, restricted to incoming nodes."""

    g1: np.ndarray              # (n_edge..., nz, nv), zero on outgoing nodes
    g2: np.ndarray | None
    incoming: np.ndarray        # (nv,) bool

    def norm_g2(self, zgrid, grid: VelocityGrid, normal_speed) -> float:
        if self.g2 is None:
            return float("nan")
        tw = z_weights(zgrid)
        w = grid.weights * np.abs(normal_speed) * self.incoming
        val = (self.g2**2 @ w) @ tw if self.g2.ndim == 2 else \
            np.sum(((self.g2**2) @ w) @ tw)
        return float(np.sqrt(val))


def boundary_traces(expansion: ExpansionField, grid: VelocityGrid) -> dict:
    """Lateral inflow data: restrictions of g1 and g2 to incoming velocities.

    Profile fields have edges "left" (x = 0, incoming v_x > 0) and "right"
    (x = 1, incoming v_x < 0); rectangle fields add "bottom"/"top" in y.
    """

    def restrict(values, mask):
        out = values.copy()
        out[..., ~mask] = 0.0
        return out

    g2 = expansion.g2
    traces = {}
    if expansion.is_profile:
        masks = {"left": (0, grid.vx > 0), "right": (-1, grid.vx < 0)}
        for name, (idx, mask) in masks.items():
            traces[name] = EdgeTrace(
                g1=restrict(expansion.g1[idx], mask),
                g2=None if g2 is None else restrict(g2[idx], mask),
                incoming=mask)
        return traces
    edges = {
        "left": (np.s_[:, 0], grid.vx > 0),
        "right": (np.s_[:, -1], grid.vx < 0),
        "bottom": (np.s_[0, :], grid.vy > 0),
        "top": (np.s_[-1, :], grid.vy < 0),
    }
    for name, (sl, mask) in edges.items():
        traces[name] = EdgeTrace(
            g1=restrict(expansion.g1[sl], mask),
            g2=None if g2 is None else restrict(g2[sl], mask),
            incoming=mask)
    return traces
