"""Batch front-end: configuration, pipeline orchestration, artifact emission.

Pipeline stages: coefficient table -> generalized Reynolds solve ->
expansion residual report -> hydrodynamic-limit study, with every output
file listed in a manifest by content hash.  Runs are deterministic for a
fixed configuration (the only randomness, the property-check probes, is
seeded).

Configuration is a flat JSON file; every key has a default and can be
overridden by command-line flags.  Schema (defaults in parentheses):

    preset          name of an embedded preset filling the keys below
    grid_order      velocity nodes per axis (4)
    z_nodes         slab grid nodes (24)
    model_kind      "weighted-bgk" (plugin kernels are loaded via the API)
    nu_scale        collision frequency nu = nu_scale * (1 + |v|)  (1.0)
    k0              rescaled Knudsen normalization (1.0)
    rho0_kind       boundary profile: "constant" | "linear" | "tabulated"
    rho0_params     [a] for constant, [a, bx, by] for a + bx*x + by*y
    rho0_file       CSV of x,y,rho boundary samples (tabulated profiles)
    domain_nx/ny    planar grid for the 2D Reynolds/expansion stage (13)
    profile_nx      columns of the reduced geometry for the study (25)
    table_samples   coefficient-table sample count (17)
    table_margin    table range stretch around the trace range (0.1)
    epsilons        decreasing ladder in (0,1)  ([0.2, 0.1, 0.05])
    slab_tol / inner_tol / picard_tol   iteration tolerances
    threads         worker threads for the table build (1)
    seed            seed for the property-check probes (1234)

Exit codes: 0 success, 2 validation/range, 3 convergence failure,
4 model violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from . import coefficients as coeff
from . import hilbert, remainder, reynolds, slab
from .collision import CollisionModel, default_collision_frequency
from .errors import (ConvergenceError, DivergenceError, ModelViolationError,
                     SolvabilityError, TableRangeError)
from .velocity import build_velocity_grid

__all__ = ["RunConfig", "PRESETS", "run_pipeline", "main"]


@dataclass
class RunConfig:
    preset: str = "default"
    grid_order: int = 4
    z_nodes: int = 24
    model_kind: str = "weighted-bgk"
    nu_scale: float = 1.0
    k0: float = 1.0
    rho0_kind: str = "linear"
    rho0_params: list = dataclass_field(default_factory=lambda: [1.0, 0.25, 0.1])
    rho0_file: str = ""
    domain_nx: int = 13
    domain_ny: int = 13
    profile_nx: int = 25
    table_samples: int = 17
    table_margin: float = 0.1
    epsilons: list = dataclass_field(default_factory=lambda: [0.2, 0.1, 0.05])
    slab_tol: float = 1e-12
    inner_tol: float = 1e-11
    picard_tol: float = 1e-9
    threads: int = 1
    seed: int = 1234

    def validate(self):
        if self.grid_order < 2:
            raise ValueError("grid_order must be >= 2")
        if self.z_nodes < 4:
            raise ValueError("z_nodes must be >= 4")
        if self.model_kind != "weighted-bgk":
            raise ValueError("pipeline configs support the weighted-bgk model")
        for name in ("slab_tol", "inner_tol", "picard_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.nu_scale <= 0 or self.k0 <= 0:
            raise ValueError("nu_scale and k0 must be positive")
        eps = list(self.epsilons)
        if len(eps) < 1 or any(not (0 < e < 1) for e in eps):
            raise ValueError("epsilon values must lie in (0, 1)")
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("epsilon ladder must be decreasing")
        if self.rho0_kind not in ("constant", "linear", "tabulated"):
            raise ValueError(f"unknown rho0 profile kind {self.rho0_kind!r}")
        lo = min(self.rho0_values_probe())
        if lo <= 0:
            raise ValueError("rho0 must be positive everywhere")
        if self.table_samples < 8:
            raise ValueError("table_samples must be >= 8")
        return self

    # -- boundary profile ----------------------------------------------------

    def rho0_callable(self):
        if self.rho0_kind == "constant":
            a = float(self.rho0_params[0])
            return lambda x, y: a
        if self.rho0_kind == "linear":
            a, bx, by = (list(self.rho0_params) + [0.0, 0.0])[:3]
            return lambda x, y: a + bx * x + by * y
        samples = np.loadtxt(self.rho0_file, delimiter=",", skiprows=1, ndmin=2)

        def nearest(x, y):
            d2 = (samples[:, 0] - x) ** 2 + (samples[:, 1] - y) ** 2
            return float(samples[np.argmin(d2), 2])

        return nearest

    def rho0_values_probe(self):
        fn = self.rho0_callable()
        xs = np.linspace(0, 1, 9)
        vals = [fn(x, y) for x in xs for y in (0.0, 1.0)]
        vals += [fn(x, y) for y in xs for x in (0.0, 1.0)]
        return vals

    def build_model(self):
        scale = self.nu_scale
        if scale == 1.0:
            nu = default_collision_frequency
        else:
            def nu(v):
                return scale * default_collision_frequency(v)
        return CollisionModel(nu=nu, k0=self.k0, kind="weighted-bgk",
                              nu_m=scale, nu_M=scale)

    def slab_options(self):
        return slab.SlabOptions(tol=self.slab_tol)

    def remainder_options(self):
        return remainder.RemainderOptions(inner_tol=self.inner_tol,
                                          picard_tol=self.picard_tol)

    @classmethod
    def from_sources(cls, config_path=None, preset=None, overrides=None):
        cfg = {}
        if preset:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}")
            cfg.update(PRESETS[preset])
            cfg["preset"] = preset
        if config_path:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
            name = file_cfg.get("preset")
            if name and not preset:
                if name not in PRESETS:
                    raise ValueError(f"unknown preset {name!r}")
                cfg.update(PRESETS[name])
            cfg.update(file_cfg)
        for key, val in (overrides or {}).items():
            if val is not None:
                cfg[key] = val
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**cfg).validate()


PRESETS = {
    "default": {
        "rho0_kind": "linear",
        "rho0_params": [1.0, 0.25, 0.1],
        "grid_order": 4,
        "z_nodes": 24,
        "domain_nx": 13,
        "domain_ny": 13,
        "profile_nx": 25,
        "table_samples": 17,
        "epsilons": [0.2, 0.1, 0.05],
    },
    "constant-rho": {
        "rho0_kind": "constant",
        "rho0_params": [1.0],
        "grid_order": 4,
        "z_nodes": 16,
        "domain_nx": 9,
        "domain_ny": 9,
        "profile_nx": 17,
        "table_samples": 9,
        "epsilons": [0.2, 0.1, 0.05],
    },
    "paper-scale": {
        "rho0_kind": "linear",
        "rho0_params": [1.0, 0.25, 0.1],
        "grid_order": 6,
        "z_nodes": 32,
        "domain_nx": 17,
        "domain_ny": 17,
        "profile_nx": 33,
        "table_samples": 25,
        "epsilons": [0.2, 0.1, 0.05],
    },
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_pipeline(config: RunConfig, out_dir) -> dict:
    """Full batch run; returns the manifest dictionary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = build_velocity_grid(config.grid_order)
    model = config.build_model()
    zgrid = slab.uniform_zgrid(config.z_nodes, 1.0)
    opts = config.slab_options()
    files = []

    # stage 1: coefficient table spanning the trace range with margin
    rho0 = config.rho0_callable()
    probe = config.rho0_values_probe()
    lo, hi = min(probe), max(probe)
    span = max(hi - lo, 0.1 * hi)
    rho_min = max(1e-3, lo - config.table_margin * span)
    rho_max = hi + config.table_margin * span
    table = coeff.tabulate(rho_min, rho_max, config.table_samples, model,
                           grid, zgrid, opts, threads=config.threads)
    table.save(out / "table.csv", out / "table.json")
    files += ["table.csv", "table.json"]

    # stage 2: planar density field
    domain = reynolds.PlanarDomain.rectangle(config.domain_nx, config.domain_ny)
    density = reynolds.solve_reynolds(domain, rho0, table)
    density.to_csv(out / "density.csv")
    density.to_json(out / "density.json")
    files += ["density.csv", "density.json"]

    # stage 3: expansion residual report (first-order term on the 2D field)
    expansion2d = hilbert.build_g1(density, model, grid, zgrid, opts)
    div = hilbert.mass_flux_divergence(expansion2d, grid)
    inner = div[1:-1, 1:-1]
    report = {
        "order1_residual": hilbert.order1_residual(expansion2d, model, grid),
        "mass_flux_divergence_max": float(np.abs(inner).max()),
        "reynolds_residual": reynolds.reynolds_residual(density, table, domain),
    }
    _write_json(out / "expansion_report.json", report)
    expansion2d.summary_csv(out / "expansion_summary.csv", grid)
    files += ["expansion_report.json", "expansion_summary.csv"]

    # stage 4: reduced geometry and the hydrodynamic-limit study
    xg = np.linspace(0.0, 1.0, config.profile_nx)
    left = rho0(0.0, 0.5)
    right = rho0(1.0, 0.5)
    profile = reynolds.solve_reynolds_profile(left, right, table, xg)
    profile.to_csv(out / "profile.csv")
    files.append("profile.csv")
    reduced = hilbert.build_g1(profile, model, grid, zgrid, opts)
    hilbert.build_g2(reduced, model, grid, opts=opts)
    study = remainder.convergence_study(config.epsilons, reduced, model, grid,
                                        config.remainder_options())
    study.to_csv(out / "study.csv")
    _write_json(out / "study_report.json", {
        "slope": study.slope,
        "reports": {str(eps): json.loads(rep.to_json())
                    for eps, rep in study.reports.items()},
    })
    files += ["study.csv", "study_report.json"]

    failures = [row.error for row in study.rows if row.error]
    manifest = {
        "config": asdict(config),
        "files": {name: _sha256(out / name) for name in files},
        "study_slope": study.slope,
        "study_failures": failures,
    }
    _write_json(out / "manifest.json", manifest)
    if failures:
        raise ConvergenceError(
            f"{len(failures)} study stage(s) failed: {failures[0]}")
    return manifest


# ---------------------------------------------------------------------------
# invariant battery for check-properties
# ---------------------------------------------------------------------------

def property_checks(config: RunConfig):
    """Fast structural-invariant battery; yields (name, value, bound, ok)."""
    from .collision import (apply_Gamma, apply_L, check_frequency_bounds,
                            spectral_gap)
    from .velocity import inner_product, kernel_basis, project_kernel_batch

    rng = np.random.default_rng(config.seed)
    grid = build_velocity_grid(max(4, config.grid_order))
    model = config.build_model()
    zgrid = slab.uniform_zgrid(max(16, config.z_nodes), 1.0)
    rows = []

    def check(name, value, bound, larger_ok=False):
        ok = value > bound if larger_ok else value <= bound
        rows.append((name, float(value), float(bound), bool(ok)))

    check("grid.weight_sum_defect", abs(grid.weights.sum() - 1.0), 1e-12)
    check("grid.moment_error_deg6", grid.max_moment_error(6), 1e-12)
    check("grid.node_antisymmetry",
          float(np.abs(np.sort(grid.vz) + np.sort(grid.vz)[::-1]).max()), 0.0)

    basis = kernel_basis(grid)
    check("collision.kernel_annihilation",
          max(np.linalg.norm(apply_L(basis[:, j], model, grid))
              for j in range(5)), 1e-12)
    f, g = rng.normal(size=(2, grid.size))
    lf, lg = apply_L(f, model, grid), apply_L(g, model, grid)
    check("collision.self_adjointness",
          abs(inner_product(lf, g, grid) - inner_product(lg, f, grid)), 1e-12)
    gap, kdim = spectral_gap(model, grid)
    check("collision.spectral_gap", gap, 0.0, larger_ok=True)
    check("collision.kernel_dimension_defect", abs(kdim - 5), 0.0)
    check("collision.frequency_bounds",
          0.0 if check_frequency_bounds(model, grid) else 1.0, 0.0)
    gam = apply_Gamma(f, g, model, grid)
    check("collision.gamma_symmetry",
          float(np.abs(gam - apply_Gamma(g, f, model, grid)).max()), 1e-13)
    check("collision.gamma_orthogonality",
          float(np.abs(project_kernel_batch(gam, grid)).max()), 1e-10)

    h = slab.SlabField.from_velocity_function(zgrid, grid.vx, grid)
    rep = slab.solve_diffuse(h, 1.0, model, grid, config.slab_options())
    flux = slab.wall_mass_flux(rep.solution, grid)
    check("slab.wall_flux", max(abs(flux[0]), abs(flux[1])), 1e-10)
    lhs, rhs = slab.greens_identity(rep.solution, h, 1.0, model, grid)
    check("slab.greens_identity", abs(lhs - rhs) / abs(rhs), 1e-6)
    small_z = slab.uniform_zgrid(12, 1.0)
    small_grid = build_velocity_grid(4)
    hs = slab.SlabField.from_velocity_function(small_z, small_grid.vx, small_grid)
    rep_it = slab.solve_diffuse(hs, 1.0, model, small_grid, config.slab_options())
    direct = slab.assemble_direct(hs, 1.0, model, small_grid)
    check("slab.oracle_agreement",
          float(np.abs(rep_it.solution.values - direct.values).max()), 1e-8)

    a_val = coeff.compute_A(1.0, model, grid, zgrid, config.slab_options())
    check("coefficients.A_positive", a_val, 0.0, larger_ok=True)
    tw = slab.z_weights(zgrid)
    axy = float(np.dot(tw, (rep.solution.values * grid.vy[None, :]) @ grid.weights))
    check("coefficients.A_xy", abs(axy), 1e-10 * a_val)
    check("coefficients.resolvent_identity",
          coeff.resolvent_identity_defect(1.0, 1.5, model, small_grid, small_z),
          1e-8)

    table = coeff.CoefficientTable.from_function(
        lambda r: 1.0, 0.5, 2.0, 9, Aprime_fn=lambda r: 0.0,
        G_fn=lambda r: r)
    dom = reynolds.PlanarDomain.rectangle(17, 17)
    fld = reynolds.solve_reynolds(dom, lambda x, y: 1.0 + 0.2 * x + 0.1 * y, table)
    harm = reynolds.harmonic_solve(dom, lambda x, y: 1.0 + 0.2 * x + 0.1 * y)
    mask = dom.inside
    check("reynolds.kirchhoff_affine",
          float(np.abs(fld.values[mask] - harm[mask]).max()), 1e-10)
    bvals = fld.values[dom.boundary]
    check("reynolds.maximum_principle",
          max(bvals.min() - fld.values[dom.interior].min(),
              fld.values[dom.interior].max() - bvals.max()), 1e-12)

    gg = slab.SlabField(zgrid, rng.normal(size=(zgrid.size, grid.size)))
    ge = remainder.rescale_to_thin(gg, 0.25)
    check("remainder.scaling_identity",
          abs(slab.field_norm(ge, grid) / slab.field_norm(gg, grid) - 0.5),
          1e-12)
    return rows


# ---------------------------------------------------------------------------
# command-line interface
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--preset", help="embedded preset name")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grid-order", type=int, dest="grid_order", default=None)
    p.add_argument("--z-nodes", type=int, dest="z_nodes", default=None)


def _config_from_args(args) -> RunConfig:
    overrides = {k: getattr(args, k, None)
                 for k in ("threads", "seed", "grid_order", "z_nodes")}
    if getattr(args, "epsilons", None):
        overrides["epsilons"] = [float(e) for e in args.epsilons.split(",")]
    preset = args.preset or (None if args.config else "default")
    return RunConfig.from_sources(config_path=args.config, preset=preset,
                                  overrides=overrides)


def _setup_parser():
    parser = argparse.ArgumentParser(
        prog="kinlub",
        description="kinetic lubrication solver suite: slab problems, "
                    "transport coefficients, the generalized Reynolds "
                    "equation, and hydrodynamic-limit studies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline")
    _add_common(p)
    p.add_argument("--epsilons", help="comma-separated decreasing ladder")

    p = sub.add_parser("compute-a", help="transport coefficient at one rho")
    _add_common(p)
    p.add_argument("--rho", type=float, required=True)

    p = sub.add_parser("solve-reynolds", help="planar density solve")
    _add_common(p)
    p.add_argument("--table", help="reuse an existing table.csv")

    p = sub.add_parser("build-expansion", help="expansion terms and residuals")
    _add_common(p)

    p = sub.add_parser("verify-limit", help="hydrodynamic-limit study")
    _add_common(p)
    p.add_argument("--epsilons", help="comma-separated decreasing ladder")

    p = sub.add_parser("check-properties", help="structural invariant battery")
    _add_common(p)
    return parser


def _cmd_run(args):
    config = _config_from_args(args)
    manifest = run_pipeline(config, args.out)
    print(f"pipeline complete; study slope {manifest['study_slope']:.4f}")
    for name, digest in manifest["files"].items():
        print(f"  {name}  {digest[:16]}")
    return 0


def _cmd_compute_a(args):
    config = _config_from_args(args)
    grid = build_velocity_grid(config.grid_order)
    model = config.build_model()
    zgrid = slab.uniform_zgrid(config.z_nodes, 1.0)
    a = coeff.compute_A(args.rho, model, grid, zgrid, config.slab_options())
    ap = coeff.compute_Aprime(args.rho, model, grid, zgrid, config.slab_options())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"rho": args.rho, "A": a, "Aprime": ap,
               "grid_order": config.grid_order, "z_nodes": config.z_nodes}
    _write_json(out / "transport_coefficient.json", payload)
    print(f"A({args.rho}) = {a:.12f}   A'({args.rho}) = {ap:.12f}")
    return 0


def _cmd_solve_reynolds(args):
    config = _config_from_args(args)
    grid = build_velocity_grid(config.grid_order)
    model = config.build_model()
    zgrid = slab.uniform_zgrid(config.z_nodes, 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.table:
        table = coeff.CoefficientTable.load(args.table)
    else:
        probe = config.rho0_values_probe()
        lo, hi = min(probe), max(probe)
        span = max(hi - lo, 0.1 * hi)
        table = coeff.tabulate(max(1e-3, lo - config.table_margin * span),
                               hi + config.table_margin * span,
                               config.table_samples, model, grid, zgrid,
                               config.slab_options(), threads=config.threads)
        table.save(out / "table.csv", out / "table.json")
    domain = reynolds.PlanarDomain.rectangle(config.domain_nx, config.domain_ny)
    density = reynolds.solve_reynolds(domain, config.rho0_callable(), table)
    density.to_csv(out / "density.csv")
    density.to_json(out / "density.json")
    res = reynolds.reynolds_residual(density, table, domain)
    print(f"density solved; residual {res:.3e}; wrote {out / 'density.csv'}")
    return 0


def _cmd_build_expansion(args):
    config = _config_from_args(args)
    grid = build_velocity_grid(config.grid_order)
    model = config.build_model()
    zgrid = slab.uniform_zgrid(config.z_nodes, 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    probe = config.rho0_values_probe()
    lo, hi = min(probe), max(probe)
    span = max(hi - lo, 0.1 * hi)
    table = coeff.tabulate(max(1e-3, lo - config.table_margin * span),
                           hi + config.table_margin * span,
                           config.table_samples, model, grid, zgrid,
                           config.slab_options(), threads=config.threads)
    domain = reynolds.PlanarDomain.rectangle(config.domain_nx, config.domain_ny)
    density = reynolds.solve_reynolds(domain, config.rho0_callable(), table)
    expansion = hilbert.build_g1(density, model, grid, zgrid,
                                 config.slab_options())
    div = hilbert.mass_flux_divergence(expansion, grid)
    report = {
        "order1_residual": hilbert.order1_residual(expansion, model, grid),
        "mass_flux_divergence_max": float(np.abs(div[1:-1, 1:-1]).max()),
    }
    expansion.summary_csv(out / "expansion_summary.csv", grid)
    _write_json(out / "expansion_report.json", report)
    print(f"expansion built; order-1 residual {report['order1_residual']:.3e}")
    return 0


def _cmd_verify_limit(args):
    config = _config_from_args(args)
    grid = build_velocity_grid(config.grid_order)
    model = config.build_model()
    zgrid = slab.uniform_zgrid(config.z_nodes, 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rho0 = config.rho0_callable()
    probe = config.rho0_values_probe()
    lo, hi = min(probe), max(probe)
    span = max(hi - lo, 0.1 * hi)
    table = coeff.tabulate(max(1e-3, lo - config.table_margin * span),
                           hi + config.table_margin * span,
                           config.table_samples, model, grid, zgrid,
                           config.slab_options(), threads=config.threads)
    xg = np.linspace(0.0, 1.0, config.profile_nx)
    profile = reynolds.solve_reynolds_profile(rho0(0.0, 0.5), rho0(1.0, 0.5),
                                              table, xg)
    reduced = hilbert.build_g1(profile, model, grid, zgrid,
                               config.slab_options())
    hilbert.build_g2(reduced, model, grid, opts=config.slab_options())
    study = remainder.convergence_study(config.epsilons, reduced, model, grid,
                                        config.remainder_options())
    study.to_csv(out / "study.csv")
    print(f"study slope: {study.slope:.4f}")
    for row in study.rows:
        status = row.error or "ok"
        print(f"  eps={row.epsilon:<6g} norm/eps={row.norm_over_eps:.6e} "
              f"iters={row.iterations} contraction={row.contraction:.3f} "
              f"[{status}]")
    failures = [row for row in study.rows if row.error]
    if failures:
        raise ConvergenceError(f"{len(failures)} ladder stage(s) failed")
    return 0


def _cmd_check_properties(args):
    config = _config_from_args(args)
    rows = property_checks(config)
    width = max(len(r[0]) for r in rows)
    bad = 0
    for name, value, bound, ok in rows:
        status = "pass" if ok else "FAIL"
        print(f"{name:<{width}}  {value:12.3e}  (bound {bound:9.1e})  {status}")
        bad += 0 if ok else 1
    if bad:
        print(f"{bad} invariant(s) failed")
        raise ModelViolationError(f"{bad} invariant(s) failed")
    print(f"all {len(rows)} invariants hold")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "compute-a": _cmd_compute_a,
    "solve-reynolds": _cmd_solve_reynolds,
    "build-expansion": _cmd_build_expansion,
    "verify-limit": _cmd_verify_limit,
    "check-properties": _cmd_check_properties,
}


def main(argv=None) -> int:
    parser = _setup_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, SolvabilityError, TableRangeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, DivergenceError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except ModelViolationError as exc:
        print(f"model violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
