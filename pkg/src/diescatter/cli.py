"""``die-scatter`` command-line front end."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import planner, spectral, validation
from .errors import (BreakdownError, ConfigError, DieError, InvalidParameterError, ResourceCapError)
from .krylov import KrylovConfig, fair_memory_split, gmres_restarted
from .medium import (Background, Grid, ScattererSpec, circular_cylinder, grid_for, homogeneous_square,
                     layered_square, rasterize, sin_product_profile)
from .operator import DENSE_CAP, DieOperator, RegularizedOperator, assemble_dense, incident_plane_wave

log = logging.getLogger("diescatter")

EXIT_OK, EXIT_NOCONV, EXIT_CONFIG, EXIT_CAP = 0, 2, 3, 4
PIPELINES = ("plain", "regularized", "regularized+deflated", "deflated-only")


def parse_complex(value, name: str = "value") -> complex:
    """Numbers or ``[re, im]`` pairs."""
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{name}: expected a number or [re, im], got {value!r}")


def encode_complex(z: complex) -> list:
    return [float(z.real), float(z.imag)]


def scatterer_from_dict(d: dict) -> ScattererSpec:
    kind = d.get("kind")
    center = tuple(d.get("center", (0.0, 0.0)))
    try:
        if kind == "homogeneous-square":
            return homogeneous_square(float(d["side"]), parse_complex(d["eps_rel"], "eps_rel"),
                                      parse_complex(d.get("mu_rel", 1.0), "mu_rel"), center)
        if kind == "layered-square":
            return layered_square(float(d["side"]), parse_complex(d["eps_outer"], "eps_outer"),
                                  parse_complex(d["eps_inner"], "eps_inner"), d.get("inner_side"), center)
        if kind == "circular-cylinder":
            return circular_cylinder(float(d["radius"]), parse_complex(d["eps_rel"], "eps_rel"),
                                     parse_complex(d.get("mu_rel", 1.0), "mu_rel"), center)
        if kind == "analytic-profile":
            return sin_product_profile(float(d["side"]), float(d.get("base", 10.0)),
                                       float(d.get("amplitude", 5.0)), float(d.get("frequency", 4.0)), center)
    except KeyError as exc:
        raise ConfigError(f"scatterer {kind}: missing field {exc}") from exc
    raise ConfigError(f"unknown scatterer kind {kind!r}")


def scatterer_to_dict(spec: ScattererSpec) -> dict:
    out = {"kind": spec.kind, "center": list(spec.center)}
    for k, v in spec.params.items():
        out[k] = encode_complex(v) if isinstance(v, complex) else v
    return out


@dataclass
class RunConfig:
    """Resolved run configuration.  Lengths are in units of the background
    wavelength unless the background is given explicitly."""

    scatterer: ScattererSpec
    background: Background = field(default_factory=Background.normalized)
    polarization: str = "TE"
    pipeline: str = "plain"
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    eigs_tol: float = 1e-4
    r_override: Optional[int] = None
    output_dir: str = "out"
    psi: float = 0.0
    convention: str = "maxwell-consistent"
    k_points: int = 15
    beta: Optional[float] = None
    fair_memory: bool = True
    field_format: str = "csv"
    deterministic: bool = False
    plan: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.polarization not in ("TE", "TM"):
            raise ConfigError("polarization must be TE or TM")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}")
        if self.pipeline != "plain" and self.polarization != "TE" and "regularized" in self.pipeline:
            raise ConfigError("the regularized pipelines need TE polarization")
        if self.field_format not in ("csv", "binary"):
            raise ConfigError("field_format must be csv or binary")
        if self.r_override is not None and self.r_override < 0:
            raise ConfigError("r must be non-negative")
        if not 1e-14 <= self.eigs_tol <= 1e-1:
            raise ConfigError("eigs_tol must lie in [1e-14, 1e-1]")

    def to_dict(self) -> dict:
        bg = self.background
        return {
            "scatterer": scatterer_to_dict(self.scatterer),
            "background": {"eps_b": encode_complex(complex(bg.eps_b)), "mu_b": encode_complex(complex(bg.mu_b)),
                           "omega": bg.omega},
            "polarization": self.polarization, "pipeline": self.pipeline,
            "krylov": asdict(self.krylov), "eigs_tol": self.eigs_tol, "r": self.r_override,
            "output_dir": self.output_dir, "incident": {"psi": self.psi, "convention": self.convention},
            "k_points": self.k_points, "beta": self.beta, "fair_memory": self.fair_memory,
            "field_format": self.field_format, "deterministic": self.deterministic,
            "plan": self.plan, "validate": self.validate,
        }


def config_from_dict(d: dict) -> RunConfig:
    try:
        bgd = d.get("background", {})
        if "wavelength" in bgd:
            bg = Background.normalized(float(bgd["wavelength"]))
        else:
            bg = Background(parse_complex(bgd.get("eps_b", 1.0), "eps_b"),
                            parse_complex(bgd.get("mu_b", 1.0), "mu_b"),
                            float(bgd.get("omega", 2 * math.pi)))
        kd = d.get("krylov", {})
        kc = KrylovConfig(int(kd.get("restart", 40)), float(kd.get("tol", 1e-8)),
                          int(kd.get("max_iters", 100_000)), bool(kd.get("record_history", True)))
        inc = d.get("incident", {})
        scat = d.get("scatterer")
        if scat is None:
            raise ConfigError("config needs a scatterer")
        return RunConfig(
            scatterer=scatterer_from_dict(scat), background=bg,
            polarization=d.get("polarization", "TE"), pipeline=d.get("pipeline", "plain"),
            krylov=kc, eigs_tol=float(d.get("eigs_tol", 1e-4)), r_override=d.get("r"),
            output_dir=d.get("output_dir", "out"), psi=float(inc.get("psi", 0.0)),
            convention=inc.get("convention", "maxwell-consistent"), k_points=int(d.get("k_points", 15)),
            beta=d.get("beta"), fair_memory=bool(d.get("fair_memory", True)),
            field_format=d.get("field_format", "csv"), deterministic=bool(d.get("deterministic", False)),
            plan=dict(d.get("plan", {})), validate=dict(d.get("validate", {})))
    except (InvalidParameterError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=str)


def write_field(out: Path, name: str, grid: Grid, values: np.ndarray, fmt: str = "csv") -> Path:
    """One field component, as CSV ``x1,x2,re,im`` or raw little-endian re/im pairs plus a JSON header."""
    values = np.asarray(values, complex).ravel()
    if fmt == "csv":
        P = grid.positions()
        path = out / f"{name}.csv"
        data = np.column_stack([P[:, 0], P[:, 1], values.real, values.imag])
        np.savetxt(path, data, delimiter=",", header="x1,x2,re,im", comments="", fmt="%.17g")
        return path
    path = out / f"{name}.bin"
    inter = np.empty(2 * values.size, "<f8")
    inter[0::2], inter[1::2] = values.real, values.imag
    inter.tofile(path)
    _write_json(out / f"{name}.json", {"n1": grid.n1, "n2": grid.n2, "h": grid.h, "origin": list(grid.origin),
                                       "dtype": "<f8", "layout": "row-major (n2, n1), interleaved re/im",
                                       "component": name})
    return path


def read_binary_field(path) -> np.ndarray:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        head = json.load(fh)
    raw = np.fromfile(path, "<f8")
    return (raw[0::2] + 1j * raw[1::2]).reshape(head["n2"], head["n1"])


def _component_names(cfg: RunConfig, op: DieOperator) -> tuple:
    if cfg.polarization == "TE":
        return ("E1", "E2", "H3")
    return ("E3",) if op.size == op.grid.N else ("H1", "H2", "E3")


@dataclass
class SolveOutcome:
    u: np.ndarray
    record: object
    r: int
    restart: int
    offline_time: float
    online_time: float
    grid: Grid
    op: DieOperator
    eig_converged: bool = True


def _resolve_r(cfg: RunConfig, grid: Grid) -> int:
    if cfg.r_override is not None:
        return int(cfg.r_override)
    if cfg.beta is not None:
        return planner.estimate_r(grid.N, float(cfg.beta))
    raise ConfigError("deflated pipelines need r (override) or beta (planner estimate)")


def solve(cfg: RunConfig, factory=validation.default_factory) -> SolveOutcome:
    """Build the grid and operator for ``cfg`` and run its pipeline."""
    bg = cfg.background
    grid = grid_for(cfg.scatterer, bg, cfg.k_points)
    medium = rasterize(cfg.scatterer, grid)
    duality = cfg.polarization == "TM" and medium.is_magnetic
    op = factory(medium, grid, bg, cfg.polarization, duality=duality)
    b = incident_plane_wave(grid, bg, cfg.psi, cfg.convention, cfg.polarization, duality)

    regularized = cfg.pipeline.startswith("regularized")
    deflated = cfg.pipeline.endswith("deflated") or cfg.pipeline == "deflated-only"
    if regularized:
        sys_op = RegularizedOperator(op)
        apply_sys = sys_op.apply
        rhs = sys_op.reg.apply(b)
    else:
        apply_sys = op.apply
        rhs = b

    restart = cfg.krylov.restart
    r = 0
    precond = None
    t0 = time.perf_counter()
    eig_ok = True
    if deflated:
        r = _resolve_r(cfg, grid)
        if r <= 0:
            raise ConfigError("deflated pipelines need r > 0")
        if cfg.fair_memory:
            _, restart = fair_memory_split(cfg.krylov.restart, r)
        res = spectral.topk_eigs(apply_sys, op.size, r, cfg.eigs_tol)
        eig_ok = res.converged
        if not res.converged:
            log.warning("eigs returned %d of %d eigenpairs", len(res.values), r)
        basis = spectral.build_deflation(apply_sys, res.values, res.vectors)
        precond = basis.apply
    t1 = time.perf_counter()
    u, rec = gmres_restarted(apply_sys, rhs, replace(cfg.krylov, restart=restart), precond)
    t2 = time.perf_counter()
    return SolveOutcome(u, rec, r, restart, t1 - t0, t2 - t1, grid, op, eig_ok)


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg: RunConfig, command: str, out: Path, extra: Optional[dict] = None) -> None:
    import numpy
    import scipy
    m = {"command": command, "config": cfg.to_dict(), "versions": {"numpy": numpy.__version__,
                                                                   "scipy": scipy.__version__}}
    m.update(extra or {})
    _write_json(out / "manifest.json", m)


def cmd_solve(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    res = solve(cfg)
    rec = res.record
    rec.to_csv(out / "convergence.csv")
    names = _component_names(cfg, res.op)
    U = np.asarray(res.u).reshape(len(names), -1)
    for name, comp in zip(names, U):
        write_field(out, name, res.grid, comp, cfg.field_format)
    if cfg.polarization == "TE":
        write_field(out, "intensity_E", res.grid, np.abs(U[0]) ** 2 + np.abs(U[1]) ** 2, cfg.field_format)
    total = res.offline_time + res.online_time
    _write_json(out / "timing.json", {"offline_seconds": res.offline_time, "online_seconds": res.online_time,
                                      "total_seconds": total})
    summary = {"pipeline": cfg.pipeline, "iterations": rec.iterations, "converged": rec.converged,
               "final_residual": rec.final_residual, "r": res.r, "restart": res.restart,
               "unknowns": res.op.size, "grid": [res.grid.n1, res.grid.n2, res.grid.h],
               "eigs_converged": res.eig_converged}
    _write_json(out / "summary.json", summary)
    _manifest(cfg, "solve", out, {"summary": summary})
    print(json.dumps(summary))
    return EXIT_OK if rec.converged else EXIT_NOCONV


def cmd_spectrum(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    bg = cfg.background
    grid = grid_for(cfg.scatterer, bg, cfg.k_points)
    medium = rasterize(cfg.scatterer, grid)
    duality = cfg.polarization == "TM" and medium.is_magnetic
    size = grid.N if cfg.polarization == "TM" and not duality else 3 * grid.N
    if size > DENSE_CAP:
        raise ResourceCapError(f"dense spectrum of {size} unknowns exceeds cap {DENSE_CAP}")
    A = assemble_dense(medium, grid, bg, cfg.polarization, duality=duality)
    regularized = cfg.pipeline.startswith("regularized")
    if regularized:
        A = assemble_dense(medium.invert_permittivity(), grid, bg, "TE") @ A
    lam = spectral.dense_spectrum(A)
    report = spectral.spectral_report(lam, medium, bg, regularized=regularized,
                                      tube_count=spectral.tube_count(lam, max(medium.scatterer_materials() or [1.0],
                                                                              key=abs)))
    report.to_csv(out / "eigenvalues.csv")
    report.to_json(out / "spectral_report.json")
    _manifest(cfg, "spectrum", out)
    print(json.dumps(report.summary(), default=str))
    return EXIT_OK


def cmd_plan(cfg_dict: dict, out_dir: str) -> int:
    p = cfg_dict.get("plan", cfg_dict)
    try:
        memory = float(p["memory_bytes"]) if "memory_bytes" in p else float(p.get("memory_gib", 4)) * planner.GIB
        beta = float(p.get("beta", 0.0011))
        preset = p.get("preset")
        x = planner.RESTART_PRESETS[preset] if preset else float(p.get("x", 8))
        if "alpha" in p:
            alpha = float(p["alpha"])
        else:
            k = int(p.get("k_points", 15))
            if "scatterer" in cfg_dict:
                n = scatterer_from_dict(cfg_dict["scatterer"]).max_refractive_index()
            else:
                n = float(p.get("refractive_index", math.sqrt(15)))
            alpha = planner.alpha_for(k, n)
    except KeyError as exc:
        raise ConfigError(f"unknown restart preset {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if memory <= 0:
        raise ConfigError("memory budget must be positive")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = planner.plan(memory, beta, x, alpha, p.get("a_over_lambda"))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan.to_json(out / "plan.json")
    _write_json(out / "manifest.json", {"command": "plan", "config": cfg_dict})
    print(plan.table())
    return EXIT_OK


def cmd_validate(cfg_dict: dict, out_dir: str, factory=validation.default_factory) -> int:
    v = cfg_dict.get("validate", {})
    k_list = tuple(v.get("k_points", (10, 15, 20)))
    report = validation.run_validation(factory=factory, oracle=bool(v.get("oracle", True)), k_list=k_list,
                                       eps_rel=parse_complex(v.get("eps_rel", 4.0)),
                                       radius=float(v.get("radius", 0.5)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "validation.json", report)
    for c in report["checks"]:
        tag = "PASS" if c["passed"] else ("FAIL" if c["required"] else "INFO")
        print(f"{tag:4s} {c['name']}: {c['value']:.3e} (threshold {c['threshold']:.1e})")
    return EXIT_OK if report["passed"] else 1


def cmd_bench(cfg: RunConfig) -> int:
    """Plain versus the configured pipeline at fair memory; reports ratios only."""
    out = _prepare_out(cfg)
    base = solve(replace(cfg, pipeline="plain"))
    other = solve(cfg) if cfg.pipeline != "plain" else base
    res = {"plain_iterations": base.record.iterations, "pipeline": cfg.pipeline,
           "pipeline_iterations": other.record.iterations,
           "iteration_ratio": base.record.iterations / max(other.record.iterations, 1),
           "time_ratio": (base.online_time + base.offline_time)
           / max(other.online_time + other.offline_time, 1e-12),
           "both_converged": base.record.converged and other.record.converged,
           "r": other.r, "restart": other.restart}
    _write_json(out / "bench.json", res)
    _manifest(cfg, "bench", out, {"bench": res})
    print(json.dumps(res))
    return EXIT_OK if res["both_converged"] else EXIT_NOCONV


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="die-scatter", description="2D domain integral equation scattering solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "spectrum", "plan", "validate", "bench"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--deterministic", action="store_true", help="single-threaded FFTs and BLAS")
        p.add_argument("--pipeline", choices=PIPELINES)
        p.add_argument("--restart", type=int)
        p.add_argument("--r", type=int)
        p.add_argument("--eigs-tol", type=float)
        if name == "validate":
            p.add_argument("--corrupt-kernel", action="store_true", help=argparse.SUPPRESS)
            p.add_argument("--no-oracle", action="store_true", help="skip the cylinder refinement runs")
    return ap


def _single_thread() -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.deterministic:
        _single_thread()
    try:
        raw = load_config(args.config)
        if args.deterministic:
            raw["deterministic"] = True
        if args.pipeline:
            raw["pipeline"] = args.pipeline
        if args.restart is not None:
            raw.setdefault("krylov", {})["restart"] = args.restart
        if args.r is not None:
            raw["r"] = args.r
        if args.eigs_tol is not None:
            raw["eigs_tol"] = args.eigs_tol
        out = args.out or raw.get("output_dir", "out")
        raw["output_dir"] = out
        if args.command == "plan":
            return cmd_plan(raw, out)
        if args.command == "validate":
            if args.no_oracle:
                raw.setdefault("validate", {})["oracle"] = False
            factory = validation.corrupted_factory if args.corrupt_kernel else validation.default_factory
            return cmd_validate(raw, out, factory)
        cfg = config_from_dict(raw)
        return {"solve": cmd_solve, "spectrum": cmd_spectrum, "bench": cmd_bench}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except BreakdownError as exc:
        print(f"breakdown: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except InvalidParameterError as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
