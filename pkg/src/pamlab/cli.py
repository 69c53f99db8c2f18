"""Experiment harness: configuration, orchestration, persistence, CLI.

A run is (config file, seed) -> CSV outputs plus a manifest; outputs are
byte-identical across repeated runs and across thread counts.  All
numeric CSV fields are written with repr(), so full double precision
round-trips and formatting is locale-independent.
"""

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

import pamlab
from pamlab.blocks import BlockSpec, mixing_event_frequency
from pamlab.environments import EnvModelSpec, EnvTrace, sample_env
from pamlab.feynman_kac import fk_estimate
from pamlab.lattice import LatticeTorus
from pamlab.lyapunov import check_lattice_size, kappa_sweep
from pamlab.percolation import percolation_profile
from pamlab.solver import SolverConfig, solve_pam

KINDS = ("env-sample", "solve", "fk", "lyapunov-sweep", "diagnostics", "percolation")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; loadable from a YAML file."""

    kind: str
    lattice: LatticeTorus
    env: EnvModelSpec
    horizon: float
    seed: int = 0
    out: str = "run-out"
    threads: int = 1
    kappa: float = 1.0
    kappa_grid: tuple = (0.0,)
    p_list: tuple = ()
    t_grid: tuple = (1.0,)
    alpha_grid: tuple = ()
    T: float = 1.0
    u0: str = "delta_0"
    n_replicas: int = 4
    n_samples: int = 1000
    n_env: int = 4
    blocks_per_env: int = 16
    block: BlockSpec | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    override_size_guard: bool = False

    def validate(self):
        """List of violations, each naming the offending field; empty iff runnable."""
        out = []
        if self.kind not in KINDS:
            out.append(f"kind: unknown experiment kind {self.kind!r}")
        if self.lattice.d < 1:
            out.append(f"lattice.d: dimension must be >= 1, got {self.lattice.d}")
        if self.lattice.L < 3:
            out.append(f"lattice.L: side must be >= 3, got {self.lattice.L}")
        out.extend(f"env.{v}" for v in self.env.validate())
        if self.horizon <= 0:
            out.append(f"horizon: must be > 0, got {self.horizon}")
        if self.seed < 0:
            out.append(f"seed: must be >= 0, got {self.seed}")
        if self.threads < 1:
            out.append(f"threads: must be >= 1, got {self.threads}")
        if not self.t_grid:
            out.append("t_grid: must be nonempty")
        elif list(self.t_grid) != sorted(self.t_grid):
            out.append("t_grid: must be sorted")
        elif max(self.t_grid) > self.horizon:
            out.append(f"t_grid: max {max(self.t_grid)} exceeds horizon {self.horizon}")
        if self.kind in ("solve", "fk") and self.kappa < 0:
            out.append(f"kappa: must be >= 0, got {self.kappa}")
        if self.kind == "lyapunov-sweep":
            if not self.kappa_grid:
                out.append("kappa_grid: must be nonempty")
            elif min(self.kappa_grid) < 0:
                out.append(f"kappa_grid: entries must be >= 0, got min {min(self.kappa_grid)}")
            elif self.t_grid and not self.override_size_guard:
                import math
                k_max, t_max = max(self.kappa_grid), max(self.t_grid)
                needed = 4.0 * math.sqrt(2 * self.lattice.d * k_max * t_max)
                if self.lattice.L < needed:
                    out.append(
                        f"lattice.L: {self.lattice.L} below recommended {needed:.0f} for "
                        f"kappa={k_max}, t={t_max} (set override_size_guard to accept)"
                    )
            if self.n_replicas < 2 and self.p_list:
                out.append(f"n_replicas: annealed points need >= 2, got {self.n_replicas}")
        if self.kind == "percolation":
            if not self.alpha_grid:
                out.append("alpha_grid: must be nonempty")
            if not 0.0 < self.T <= self.horizon:
                out.append(f"T: must be in (0, horizon], got {self.T}")
        if self.kind == "diagnostics" and self.block is None:
            out.append("block: diagnostics needs block parameters (A, R, C, b, c)")
        if self.kind == "fk" and self.n_samples < 1:
            out.append(f"n_samples: must be >= 1, got {self.n_samples}")
        if self.n_replicas < 1:
            out.append(f"n_replicas: must be >= 1, got {self.n_replicas}")
        return out

    def require_valid(self):
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))


def _as_tuple(v):
    if v is None:
        return ()
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a parsed YAML tree; unknown keys are an error."""
    data = dict(data)
    lat = data.pop("lattice", {})
    lattice = LatticeTorus(int(lat.get("d", 1)), int(lat.get("L", 8)))
    env_data = dict(data.pop("env", {}))
    for key in ("state_values", "flip_rates"):
        if key in env_data:
            env_data[key] = tuple(env_data[key])
    env = EnvModelSpec(**env_data)
    solver = SolverConfig(**data.pop("solver", {}))
    block_data = data.pop("block", None)
    block = BlockSpec(**block_data) if block_data else None
    for key in ("kappa_grid", "p_list", "t_grid", "alpha_grid"):
        if key in data:
            data[key] = _as_tuple(data[key])
    allowed = {
        "kind", "horizon", "seed", "out", "threads", "kappa", "kappa_grid",
        "p_list", "t_grid", "alpha_grid", "T", "u0", "n_replicas", "n_samples",
        "n_env", "blocks_per_env", "override_size_guard",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(lattice=lattice, env=env, solver=solver, block=block, **data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} is not a mapping")
    return config_from_dict(data)


# -- persistence -----------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header, rows):
    """Comma-separated, '\\n' newlines, repr() floats: byte-stable output."""
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written next to the outputs."""

    kind: str
    version: str
    seed: int
    stream_labels: tuple
    config: dict
    outputs: dict  # filename -> sha256 of the file body
    wall_time_s: float
    extra: dict = field(default_factory=dict)

    def write(self, path: Path):
        path.write_text(json.dumps(asdict(self), indent=2, default=str) + "\n")


def _config_echo(config: ExperimentConfig) -> dict:
    echo = asdict(config)
    echo["lattice"] = {"d": config.lattice.d, "L": config.lattice.L}
    return echo


# -- experiment kinds ------------------------------------------------------

def _trace_rows(trace: EnvTrace):
    for i in range(trace.n_events):
        yield (
            repr(float(trace.event_times[i])),
            int(trace.event_sites[i]),
            repr(float(trace.event_values[i])),
        )


def _run_env_sample(config, out_dir):
    trace = sample_env(config.env, config.lattice, config.horizon, config.seed)
    write_csv(out_dir / "events.csv", ("time", "site", "new_value"), _trace_rows(trace))
    init_rows = [(i, repr(float(v))) for i, v in enumerate(trace.initial)]
    write_csv(out_dir / "initial.csv", ("site", "value"), init_rows)
    return {"n_events": trace.n_events, "total_particles": trace.total_particles()}, ("env:" + config.env.model,)


def _run_solve(config, out_dir):
    trace = sample_env(config.env, config.lattice, config.horizon, config.seed).center_field()
    sol = solve_pam(trace, config.kappa, config.u0, config.t_grid, config.solver)
    rows = [
        (repr(float(t)), repr(float(lu)))
        for t, lu in zip(sol.sample_times, sol.log_u_origin)
    ]
    write_csv(out_dir / "solution.csv", ("t", "log_u_origin"), rows)
    return {}, ("env:" + config.env.model,)


def _run_fk(config, out_dir):
    trace = sample_env(config.env, config.lattice, config.horizon, config.seed).center_field()
    rows = []
    for t in config.t_grid:
        est = fk_estimate(trace, config.kappa, config.u0, 0, float(t), config.n_samples, config.seed)
        rows.append((
            repr(float(config.kappa)), repr(float(t)), config.u0,
            repr(est.mean), repr(est.std_error), est.n_samples,
            est.n_effective, _fmt(est.degenerate),
        ))
    write_csv(
        out_dir / "fk.csv",
        ("kappa", "t", "u0", "estimate", "std_error", "n_samples", "n_effective", "degenerate"),
        rows,
    )
    return {}, ("env:" + config.env.model, "fk-walks")


def _run_lyapunov(config, out_dir):
    t = float(max(config.t_grid))
    points = kappa_sweep(
        config.env, config.lattice, config.kappa_grid, config.p_list, t,
        config.n_replicas, config.seed, config.u0, config.solver,
        threads=config.threads, override_size_guard=config.override_size_guard,
    )
    rows = [
        (repr(p.kappa), p.p, repr(p.t), p.u0_kind, repr(p.estimate),
         repr(p.ci_half_width), p.n_replicas, p.seed, config.env.model)
        for p in points
    ]
    write_csv(
        out_dir / "sweep.csv",
        ("kappa", "p", "t", "u0", "estimate", "ci_half_width", "n_replicas", "seed", "model"),
        rows,
    )
    return {}, ("env-replica",)


def _run_diagnostics(config, out_dir):
    row = mixing_event_frequency(
        config.block, config.env, config.lattice, config.horizon,
        config.n_env, config.blocks_per_env, config.seed,
    )
    write_csv(
        out_dir / "diagnostics.csv",
        ("A", "R", "C", "b", "c", "n_env", "frequency", "ci_low", "ci_high", "reference_bound"),
        [(repr(row.A), row.R, repr(row.C), row.b, row.c, row.n_env,
          repr(row.frequency), repr(row.ci_low), repr(row.ci_high), repr(row.reference_bound))],
    )
    return {}, ("env-replica", "mixing-block-choice")


def _run_percolation(config, out_dir):
    trace = sample_env(config.env, config.lattice, config.horizon, config.seed)
    reports, alpha_star = percolation_profile(trace, config.T, config.alpha_grid)
    rows = [
        (repr(r.alpha), repr(r.largest_fraction), r.n_components, _fmt(r.spanning))
        for r in reports
    ]
    write_csv(
        out_dir / "percolation.csv",
        ("alpha", "largest_fraction", "n_components", "spanning"),
        rows,
    )
    extra = {"alpha_star": alpha_star}
    return extra, ("env:" + config.env.model,)


_RUNNERS = {
    "env-sample": _run_env_sample,
    "solve": _run_solve,
    "fk": _run_fk,
    "lyapunov-sweep": _run_lyapunov,
    "diagnostics": _run_diagnostics,
    "percolation": _run_percolation,
}


def run(config: ExperimentConfig) -> RunManifest:
    """Execute the experiment; writes outputs plus manifest.json under config.out.

    On runtime failure, partial outputs are removed before re-raising.
    """
    config.require_valid()
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    before = set(out_dir.iterdir())
    try:
        extra, labels = _RUNNERS[config.kind](config, out_dir)
    except Exception:
        for p in set(out_dir.iterdir()) - before:
            p.unlink(missing_ok=True)
        raise
    outputs = {
        p.name: _checksum(p)
        for p in sorted(out_dir.glob("*.csv"))
    }
    manifest = RunManifest(
        kind=config.kind,
        version=pamlab.__version__,
        seed=config.seed,
        stream_labels=labels,
        config=_config_echo(config),
        outputs=outputs,
        wall_time_s=time.monotonic() - started,
        extra=extra,
    )
    manifest.write(out_dir / "manifest.json")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pamlab",
        description="Parabolic Anderson model laboratory: simulate, estimate, diagnose.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    overrides = {"kind": args.kind}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    config = replace(config, **overrides)
    problems = config.validate()
    if problems:
        for p in problems:
            print(f"invalid config: {p}", file=sys.stderr)
        return 2
    try:
        run(config)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
