"""Experiment orchestration: config parsing, pipelines, manifests, reports.

One YAML config file describes an experiment; subcommands run slices of it:

    init       write a documented config template
    norm       Orlicz/L^p norms of the initial datum
    formbound  drift construction and the (delta_hat, c) certificate sweep
    mollify    heat-mollified drift family and its L2 convergence table
    solve      time integration with the finest mollified drift
    verify     full pipeline: drift -> certificate -> mollify -> solve ->
               all selected inequality checks; exit 0 iff everything passes
    sde        hitting-probability sweep of the radial SDE probe
    all        verify + sde

Every run writes a manifest.json listing each emitted file with its sha256
digest, the config digest, tool version and timestamps.  Report files
themselves carry no timestamps, so identical configs and seeds produce
byte-identical reports.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .drift import (
    DriftSpec,
    build_drift,
    form_bound_estimate,
    mollify_drift,
    zeroth_order_constant,
)
from .grid import ScalarField, TorusGrid, lp_norm, read_field, write_field
from .orlicz import modular, orlicz_norm
from .solver import SolverConfig, solve
from .verify import (
    ANALYTIC_TOL,
    SINGULAR_TOL,
    check_cauchy_convergence,
    check_cosh_energy,
    check_exp_energy,
    check_gradient_bound,
    check_lp_contraction,
    check_orlicz_contraction,
    lp_threshold,
    render_reports,
)

INEQUALITY_IDS = (
    "orlicz_contraction",
    "lp_contraction",
    "cosh_energy",
    "exp_energy",
    "gradient_bound",
    "cauchy_convergence",
)

TEMPLATE = """\
# driftbound experiment configuration (all defaults shown)

experiment:
  seed: 0                     # master seed: trials, estimator noise, SDE
  output_dir: runs/demo       # artifacts land here; manifest.json lists them
  tolerance_tier: singular    # singular (5e-2) | analytic (1e-6) slack floor

grid:
  dim: 3                      # 1, 2 or 3
  n: 32                       # even, >= 8; grid is n^dim over [-1/2, 1/2)^dim

drift:
  kind: hardy                 # hardy | constant | trig | file
  delta: 4.0                  # hardy: nominal form-bound of the singularity
  sign: -1                    # hardy: -1 attracts the flow to the origin
  core_radius: null           # hardy: null -> two grid spacings
  cutoff_radius: 0.4          # hardy: smooth cutoff support radius (< 1/2)
  # vector: [0.5, 0.0, 0.0]   # constant drifts
  # components: [[[0.5, [1, 0, 0]]], [], []]   # trig: amp * cos(2 pi k.x)
  # path: drift.bin           # file drifts (binary or csv field format)

mollification:
  schedule: [1.0e-2, 2.5e-3, 6.25e-4, 1.5625e-4]   # strictly decreasing eps
  schedule_b: null            # second schedule for the independence check;
                              # null -> half of each schedule entry

formbound:
  c_values: null              # null -> [1.2, 2, 4, 8] * <|b|^2>
  max_iter: 5000
  rq_tol: 1.0e-10

initial:
  kind: trig                  # trig | constant | file
  terms: [[0.5, [1, 0, 0]], [0.25, [0, 1, 1]]]   # amp * cos(2 pi k.x)
  # value: 0.5                # constant datum
  # path: initial.bin         # file datum

solver:
  dt: 5.0e-4
  t_final: 0.05               # must be a whole number of steps
  shift: auto                 # auto -> c_delta / sqrt(delta)
  snapshot_stride: 20
  scheme: if_rk2              # if_rk2 | if_euler
  cfl_safety: 0.5
  p_list: [2, 4]              # even powers tracked for the energy checks

verifier:
  inequalities: [orlicz_contraction, lp_contraction, cosh_energy, exp_energy,
                 gradient_bound, cauchy_convergence]
  delta: auto                 # auto -> hardy's nominal delta, else 4.0
  c_delta: auto               # auto -> top eigenvalue of (|b|^2 - delta L)
  lp_p: auto                  # auto -> smallest even integer above threshold

sde:
  dim: 3
  delta: 0.0                  # baseline; deltas below drive the sweep
  deltas: [0.5, 4.0, 36.0, 100.0]
  x0: [0.45, 0.0, 0.0]
  t_final: 0.02
  dt: 2.0e-5
  n_paths: 20000
  r_hit: 0.3
  r_core: 0.03
"""


class ConfigError(ValueError):
    """Configuration problem with a dotted field path for context."""


def _require(section, key, path, expected=None):
    if key not in section or section[key] is None:
        raise ConfigError(f"{path}.{key} is required")
    value = section[key]
    if expected is not None and not isinstance(value, expected):
        raise ConfigError(f"{path}.{key} has type {type(value).__name__}")
    return value


def load_config(path):
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark else ""
        raise ConfigError(f"YAML parse error in {path}{where}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return data


class Experiment:
    """Validated experiment state shared by the pipelines."""

    def __init__(self, data, output_dir=None, seed=None, tier=None, parallel=False):
        exp = data.get("experiment", {})
        self.seed = int(seed if seed is not None else exp.get("seed", 0))
        self.output_dir = Path(output_dir or exp.get("output_dir", "runs/out"))
        tier = tier or exp.get("tolerance_tier", "singular")
        if tier not in ("analytic", "singular"):
            raise ConfigError(f"experiment.tolerance_tier must be analytic|singular, got {tier!r}")
        self.tier = tier
        self.tol_rel = ANALYTIC_TOL if tier == "analytic" else SINGULAR_TOL
        self.parallel = parallel

        grid_cfg = data.get("grid", {})
        self.grid = TorusGrid(
            int(_require(grid_cfg, "dim", "grid")), int(_require(grid_cfg, "n", "grid"))
        )

        self.drift_spec = self._parse_drift(data.get("drift", {}))
        self.schedule = self._parse_schedule(data.get("mollification", {}))
        self.schedule_b = self._parse_schedule_b(data.get("mollification", {}))
        self.formbound = data.get("formbound", {}) or {}
        self.initial_cfg = data.get("initial", {})
        self.solver_cfg = data.get("solver", {})
        self.verifier_cfg = data.get("verifier", {})
        self.sde_cfg = data.get("sde", None)
        self.config_digest = hashlib.sha256(
            json.dumps(data, sort_keys=True, default=str).encode()
        ).hexdigest()
        self._artifacts = {}
        self._t_started = time.time()

    @staticmethod
    def _parse_drift(cfg):
        kind = _require(cfg, "kind", "drift", str)
        try:
            return DriftSpec(
                kind=kind,
                delta=float(cfg.get("delta", 4.0)),
                sign=int(cfg.get("sign", -1)),
                core_radius=cfg.get("core_radius"),
                cutoff_radius=float(cfg.get("cutoff_radius", 0.4)),
                vector=cfg.get("vector"),
                components=cfg.get("components"),
                path=cfg.get("path"),
            )
        except ValueError as exc:
            raise ConfigError(f"drift: {exc}") from exc

    @staticmethod
    def _parse_schedule(cfg):
        schedule = cfg.get("schedule", [1e-2, 2.5e-3, 6.25e-4, 1.5625e-4])
        schedule = [float(e) for e in schedule]
        if any(b >= a for a, b in zip(schedule, schedule[1:])) or schedule[-1] <= 0:
            raise ConfigError(
                f"mollification.schedule must be strictly decreasing and positive: {schedule}"
            )
        return schedule

    def _parse_schedule_b(self, cfg):
        second = cfg.get("schedule_b")
        if second is None:
            return [0.5 * e for e in self.schedule]
        second = [float(e) for e in second]
        if any(b >= a for a, b in zip(second, second[1:])) or second[-1] <= 0:
            raise ConfigError(
                f"mollification.schedule_b must be strictly decreasing and positive: {second}"
            )
        return second

    # -- building blocks -------------------------------------------------

    def build_drift(self):
        try:
            return build_drift(self.drift_spec, self.grid)
        except ValueError as exc:
            raise ConfigError(f"drift: {exc}") from exc

    def build_initial(self):
        cfg = self.initial_cfg
        kind = cfg.get("kind", "trig")
        if kind == "constant":
            return ScalarField.full(self.grid, float(_require(cfg, "value", "initial")))
        if kind == "file":
            field = read_field(_require(cfg, "path", "initial", str))
            if not isinstance(field, ScalarField) or field.grid != self.grid:
                raise ConfigError("initial.path must hold a scalar field on the run grid")
            return field
        if kind != "trig":
            raise ConfigError(f"initial.kind must be trig|constant|file, got {kind!r}")
        terms = cfg.get("terms", [[0.5, [1] + [0] * (self.grid.dim - 1)]])
        values = np.zeros(self.grid.shape)
        coords = self.grid.coordinates
        for amplitude, wavevector in terms:
            if len(wavevector) != self.grid.dim:
                raise ConfigError(f"initial.terms wavevector {wavevector} has wrong length")
            arg = sum(
                2 * np.pi * k * np.broadcast_to(x, self.grid.shape)
                for k, x in zip(wavevector, coords)
            )
            values += float(amplitude) * np.cos(arg)
        return ScalarField(self.grid, values)

    def certificate_parameters(self, b):
        """(delta, c_delta) used by the inequality checks.

        Zero drifts take the vanishing-budget surrogate; otherwise delta is
        the drift's nominal value (hardy) or the critical budget 4, and
        c_delta the smallest constant valid for every grid field at that
        delta.  Explicit verifier.delta / verifier.c_delta override.
        """
        if b.max_magnitude() == 0.0:
            return 4.0, 1e-8
        delta = self.verifier_cfg.get("delta", "auto")
        if delta == "auto":
            delta = self.drift_spec.delta if self.drift_spec.kind == "hardy" else 4.0
        delta = float(delta)
        c_delta = self.verifier_cfg.get("c_delta", "auto")
        if c_delta == "auto":
            c_delta = zeroth_order_constant(b, delta)
        return delta, float(c_delta)

    def solver_config(self, shift):
        cfg = self.solver_cfg
        try:
            return SolverConfig(
                dt=float(_require(cfg, "dt", "solver")),
                t_final=float(_require(cfg, "t_final", "solver")),
                shift=shift,
                snapshot_stride=int(cfg.get("snapshot_stride", 20)),
                scheme=cfg.get("scheme", "if_rk2"),
                cfl_safety=float(cfg.get("cfl_safety", 0.5)),
                p_list=tuple(cfg.get("p_list", (2, 4))),
            )
        except ValueError as exc:
            raise ConfigError(f"solver: {exc}") from exc

    def resolve_shift(self, delta, c_delta):
        shift = self.solver_cfg.get("shift", "auto")
        if shift == "auto":
            return c_delta / math.sqrt(delta)
        return float(shift)

    # -- artifact bookkeeping --------------------------------------------

    def ensure_outdir(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def emit_json(self, name, payload):
        self.ensure_outdir()
        path = self.output_dir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def emit_text(self, name, text):
        self.ensure_outdir()
        path = self.output_dir / name
        path.write_text(text)
        return path

    def write_manifest(self, passed):
        files = {}
        for path in sorted(self.output_dir.rglob("*")):
            if path.is_file() and path.name != "manifest.json":
                digest = hashlib.sha256(path.read_bytes()).hexdigest()
                files[str(path.relative_to(self.output_dir))] = digest
        manifest = {
            "tool": "driftbound",
            "version": __version__,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "started": self._t_started,
            "finished": time.time(),
            "passed": bool(passed),
            "artifacts": files,
        }
        path = self.output_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    def map_jobs(self, fn, items):
        if self.parallel and len(items) > 1:
            with ThreadPoolExecutor(max_workers=min(4, len(items))) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]


# -- pipelines ------------------------------------------------------------


def pipeline_norm(exp):
    f = exp.build_initial()
    result = orlicz_norm(f)
    payload = {
        "orlicz": result.value,
        "modular_at_norm": result.modular_at_value,
        "modular_at_1": modular(f, 1.0) if lp_norm(f, np.inf) > 0 else 0.0,
        "l1": lp_norm(f, 1),
        "l2": lp_norm(f, 2),
        "l4": lp_norm(f, 4),
        "linf": lp_norm(f, np.inf),
    }
    exp.emit_json("norms.json", payload)
    return True


def pipeline_formbound(exp):
    b = exp.build_drift()
    mean_sq = exp.grid.cell_volume * float(b.magnitude_squared().sum())
    c_values = exp.formbound.get("c_values")
    if c_values is None:
        c_values = [k * mean_sq for k in (1.2, 2.0, 4.0, 8.0)]
    certs = form_bound_estimate(
        b,
        [float(c) for c in c_values],
        max_iter=int(exp.formbound.get("max_iter", 5000)),
        rq_tol=float(exp.formbound.get("rq_tol", 1e-10)),
        seed=exp.seed,
    )
    payload = {
        "mean_square_drift": mean_sq,
        "certificates": [c.to_json() for c in certs],
    }
    exp.emit_json("certificates.json", payload)
    return all(c.feasible for c in certs), certs, b


def pipeline_mollify(exp):
    b = exp.build_drift()
    rows = []
    for i, eps in enumerate(exp.schedule):
        b_eps = mollify_drift(b, eps)
        path = exp.output_dir
        exp.ensure_outdir()
        field_path = path / f"drift_eps_{i}.bin"
        write_field(field_path, b_eps)
        gap_sq = sum(
            float(((m.values - t.values) ** 2).sum())
            for m, t in zip(b.components, b_eps.components)
        )
        rows.append(
            {
                "eps": eps,
                "l2_gap_to_parent": math.sqrt(exp.grid.cell_volume * gap_sq),
                "max_magnitude": b_eps.max_magnitude(),
                "file": field_path.name,
            }
        )
    exp.emit_json("mollify.json", {"schedule": rows})
    return True


def pipeline_solve(exp):
    b = exp.build_drift()
    delta, c_delta = exp.certificate_parameters(b)
    shift = exp.resolve_shift(delta, c_delta)
    config = exp.solver_config(shift)
    b_run = mollify_drift(b, exp.schedule[-1]) if b.max_magnitude() > 0 else b
    traj = solve(b_run, exp.build_initial(), config)
    exp.ensure_outdir()
    traj.to_csv(exp.output_dir / "diagnostics.csv")
    for i, snap_idx in enumerate(traj.snapshot_indices):
        write_field(exp.output_dir / f"snapshot_{i:04d}.bin", traj.snapshots[i])
    exp.emit_json(
        "solve.json",
        {
            "aborted": traj.aborted,
            "abort_message": traj.abort_message,
            "shift": shift,
            "eps": exp.schedule[-1],
            "snapshots": len(traj.snapshots),
            "final_time": float(traj.times[-1]),
        },
    )
    return not traj.aborted


def pipeline_verify(exp):
    selected = list(exp.verifier_cfg.get("inequalities", INEQUALITY_IDS))
    unknown = [name for name in selected if name not in INEQUALITY_IDS]
    if unknown:
        raise ConfigError(f"verifier.inequalities contains unknown ids {unknown}")

    _, certs, b = pipeline_formbound(exp)
    delta, c_delta = exp.certificate_parameters(b)
    shift = exp.resolve_shift(delta, c_delta)
    config = exp.solver_config(shift)
    f = exp.build_initial()
    singular_drift = b.max_magnitude() > 0

    members = exp.schedule if singular_drift else [0.0]
    drifts = exp.map_jobs(lambda eps: mollify_drift(b, eps), members)
    trajs = exp.map_jobs(lambda b_eps: solve(b_eps, f, config), drifts)
    for traj, eps in zip(trajs, members):
        if traj.aborted:
            raise RuntimeError(f"solve aborted for eps={eps}: {traj.abort_message}")
    finest = trajs[-1]
    exp.ensure_outdir()
    finest.to_csv(exp.output_dir / "diagnostics.csv")

    reports = []
    if "orlicz_contraction" in selected:
        reports.append(check_orlicz_contraction(finest, delta, c_delta, tol_rel=exp.tol_rel))
    if "lp_contraction" in selected:
        if delta < 4.0:
            p = exp.verifier_cfg.get("lp_p", "auto")
            if p == "auto":
                p = max(2, 2 * math.ceil(lp_threshold(delta) / 2))
            reports.append(
                check_lp_contraction(finest, int(p), delta, c_delta, tol_rel=exp.tol_rel)
            )
    if "cosh_energy" in selected and shift > 0:
        reports.append(check_cosh_energy(finest, delta, c_delta, tol_rel=exp.tol_rel))
    if "exp_energy" in selected:
        plain_cfg = exp.solver_config(0.0)
        plain = solve(drifts[-1], f, plain_cfg)
        for p in config.p_list:
            reports.append(check_exp_energy(plain, p, delta, c_delta, tol_rel=exp.tol_rel))
    if "gradient_bound" in selected:
        c0 = config.t_final * max(
            exp.grid.cell_volume * float(d.magnitude_squared().sum()) for d in drifts
        )
        reports.append(check_gradient_bound(trajs, f, c0, tol_rel=exp.tol_rel))
    if "cauchy_convergence" in selected and singular_drift:
        reports.append(
            check_cauchy_convergence(
                b, exp.schedule, exp.schedule_b, f, config, tol_rel=exp.tol_rel
            )
        )

    exp.emit_json("reports.json", {"reports": [r.to_json() for r in reports]})
    exp.emit_text("reports.txt", render_reports(reports) + "\n")
    return all(r.passed for r in reports)


def pipeline_sde(exp):
    from .sde import SdeConfig, delta_sweep

    cfg = exp.sde_cfg
    if not cfg:
        raise ConfigError("sde section missing")
    try:
        base = SdeConfig(
            dim=int(cfg.get("dim", 3)),
            delta=float(cfg.get("delta", 0.0)),
            x0=tuple(cfg.get("x0", (0.45, 0.0, 0.0))),
            t_final=float(cfg.get("t_final", 0.02)),
            dt=float(cfg.get("dt", 2e-5)),
            n_paths=int(cfg.get("n_paths", 20000)),
            seed=int(cfg.get("seed", exp.seed)),
            r_hit=float(cfg.get("r_hit", 0.3)),
            r_core=float(cfg.get("r_core", 0.03)),
            sign=int(cfg.get("sign", -1)),
        )
    except ValueError as exc:
        raise ConfigError(f"sde: {exc}") from exc
    deltas = [float(d) for d in cfg.get("deltas", [base.delta])]
    results = delta_sweep(base, deltas)
    exp.emit_json("sde.json", {"sweep": [s.to_json() for s in results]})
    lines = [f"{'delta':>8s} {'hit_fraction':>13s} {'ci':>9s} {'mean_hit_time':>14s}"]
    for s in results:
        mean = "nan" if math.isnan(s.mean_hit_time) else f"{s.mean_hit_time:.5f}"
        lines.append(f"{s.delta:8.2f} {s.hit_fraction:13.5f} {s.confidence_halfwidth:9.5f} {mean:>14s}")
    exp.emit_text("sde.txt", "\n".join(lines) + "\n")
    fractions = [s.hit_fraction for s in results]
    budgets = [
        results[i].confidence_halfwidth + results[i + 1].confidence_halfwidth
        for i in range(len(results) - 1)
    ]
    monotone = all(
        fractions[i + 1] >= fractions[i] - budgets[i] for i in range(len(results) - 1)
    )
    return monotone


PIPELINES = {
    "norm": pipeline_norm,
    "formbound": lambda exp: pipeline_formbound(exp)[0],
    "mollify": pipeline_mollify,
    "solve": pipeline_solve,
    "verify": pipeline_verify,
    "sde": pipeline_sde,
}


def run(subcommand, config_data, output_dir=None, seed=None, tier=None, parallel=False):
    """Execute a pipeline; returns the process exit status."""
    try:
        exp = Experiment(config_data, output_dir=output_dir, seed=seed, tier=tier, parallel=parallel)
        if subcommand == "all":
            ok = pipeline_verify(exp)
            ok = pipeline_sde(exp) and ok
        else:
            ok = PIPELINES[subcommand](exp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    exp.write_manifest(ok)
    return 0 if ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="driftbound",
        description="Spectral verification toolkit for critical-drift advection-diffusion",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    init = sub.add_parser("init", help="write a documented config template")
    init.add_argument("--config", required=True, help="path to write")
    init.add_argument("--force", action="store_true", help="overwrite an existing file")
    for name in ("norm", "formbound", "mollify", "solve", "verify", "sde", "all"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--output", default=None, help="override experiment.output_dir")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--parallel", action="store_true")
        p.add_argument("--tolerance-tier", choices=("analytic", "singular"), default=None)
    args = parser.parse_args(argv)

    if args.subcommand == "init":
        target = Path(args.config)
        if target.exists() and not args.force:
            print(f"{target} exists; use --force to overwrite", file=sys.stderr)
            return 2
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(TEMPLATE)
        print(f"wrote {target}")
        return 0

    try:
        data = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(
        args.subcommand,
        data,
        output_dir=args.output,
        seed=args.seed,
        tier=args.tolerance_tier,
        parallel=args.parallel,
    )


if __name__ == "__main__":
    sys.exit(main())
