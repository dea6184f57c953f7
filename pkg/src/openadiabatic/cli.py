"""Command-line front end.

Exit codes: 0 success, 1 configuration or model-file error, 2 Jordan
decomposition failure, 3 tracking failure (structure change or eigenvalue
crossing).
"""
from __future__ import annotations

import argparse
import io
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .conditions import DEFAULT_MARGIN, open_condition
from .errors import JordanError, ModelError, TrackingError
from .evolution import (
    DEFAULT_GRID,
    DEFAULT_STEPS,
    MIN_STEPS,
    Trajectory,
    attach_blocks,
    integrate_exact,
    integrate_r_adiabatic,
    reconstruct_state,
)
from .jordan import TOL_CLUSTER, TOL_RANK, jordan_decompose, track_decomposition
from .lindblad import TimeDependentSuperoperator, supermatrix
from .models import FIG1_SLOPES, build_two_level, fig1_model, load_model
from .operator_space import from_bloch

COMMANDS = ("evolve", "evolve-adiabatic", "jordan", "conditions", "sweep")
SWEEP_KEYS = ("a", "T", "steps")
EXIT_OK, EXIT_CONFIG, EXIT_JORDAN, EXIT_TRACKING = 0, 1, 2, 3


class ConfigError(ModelError):
    """Invalid command-line configuration."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str = None
    grid: int = DEFAULT_GRID
    steps: int = DEFAULT_STEPS
    total_time: float = None
    out: str = None
    margin: float = DEFAULT_MARGIN
    tol_cluster: float = TOL_CLUSTER
    tol_rank: float = TOL_RANK
    sweep: str = None
    adiabatic: bool = False
    fig1: bool = False
    bloch: tuple = None
    r0: tuple = None
    workers: int = 1
    s: float = 0.0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.grid < 2:
            raise ConfigError("--grid must be at least 2")
        if self.steps < MIN_STEPS:
            raise ConfigError(f"--steps must be at least {MIN_STEPS}")
        if self.tol_cluster <= 0 or self.tol_rank <= 0:
            raise ConfigError("tolerances must be positive")
        if self.margin <= 0:
            raise ConfigError("--margin must be positive")
        if self.total_time is not None and not self.total_time > 0:
            raise ConfigError("--total-time must be positive")
        if self.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if not 0 <= self.s <= 1:
            raise ConfigError("--s must lie in [0, 1]")
        if self.bloch is not None and self.r0 is not None:
            raise ConfigError("give at most one of --bloch and --r0")
        if self.model is None and not (self.command == "evolve" and self.fig1) and not (
            self.command == "sweep" and (self.sweep or "").split("=")[0] == "a"
        ):
            raise ConfigError("a model name or file is required")
        if self.command == "sweep" and not self.sweep:
            raise ConfigError("sweep needs --sweep key=v1,v2,...")

    @property
    def node_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid)


# ------------------------------------------------------------------ output


def fmt(x) -> str:
    return format(float(x), ".17g")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def chain_labels(tracked_or_dec) -> list:
    return [f"r{a + 1}_{j}" for a, b in enumerate(tracked_or_dec.blocks) for j in range(b.size)]


def trajectory_csv(traj: Trajectory, labels) -> str:
    n = traj.states.shape[1]
    header = ["s", "t"] + [f"rho_{k}" for k in range(n)]
    if traj.r is not None:
        for lab in labels:
            header += [f"{lab}_re", f"{lab}_im"]
        header.append("residual")
    rows = []
    for k in range(len(traj.grid)):
        row = [traj.grid[k], traj.times[k], *traj.states[k]]
        if traj.r is not None:
            for z in traj.r[k]:
                row += [z.real, z.imag]
            row.append(traj.residuals[k])
        rows.append(row)
    return csv_text(header, rows)


# ------------------------------------------------------------------- setup


def load_generator(cfg: RunConfig) -> TimeDependentSuperoperator:
    gen = load_model(cfg.model)
    if cfg.total_time is not None:
        gen = gen.with_total_time(cfg.total_time)
    return gen


def initial_r(cfg: RunConfig, tracked) -> np.ndarray:
    """Initial block coefficients from --r0, --bloch, or the default.

    The default puts 1 on the eigenvector coefficients of the first and the
    last block.
    """
    n = tracked.S.shape[1]
    dec = tracked.decompositions[0]
    if cfg.r0 is not None:
        if len(cfg.r0) != n:
            raise ConfigError(f"--r0 needs {n} values, got {len(cfg.r0)}")
        r0 = np.array(cfg.r0, dtype=complex)
    elif cfg.bloch is not None:
        if n != 4:
            raise ConfigError("--bloch needs a two-level model")
        v = np.array(cfg.bloch, dtype=float)
        if len(v) != 3:
            raise ConfigError("--bloch needs three components")
        if np.linalg.norm(v) > 1 + 1e-12:
            raise ConfigError(f"Bloch vector norm {np.linalg.norm(v):.6g} exceeds 1: not a physical state")
        r0 = 2.0 * dec.S_inv @ from_bloch(v)
    else:
        r0 = np.zeros(n, dtype=complex)
        r0[dec.blocks[0].start] = 1.0
        r0[dec.blocks[-1].start] = 1.0
    state = reconstruct_state(r0, dec)
    if np.abs(state.imag).max() > 1e-10:
        raise ConfigError("initial coefficients do not describe a Hermitian state")
    return r0


def run_pair(gen, cfg: RunConfig, r0=None):
    """Tracked decomposition plus exact and adiabatic runs from the same start."""
    tracked = track_decomposition(gen, cfg.node_grid, cfg.tol_cluster, cfg.tol_rank)
    if r0 is None:
        r0 = initial_r(cfg, tracked)
    state0 = reconstruct_state(r0, tracked.decompositions[0]).real
    exact = attach_blocks(integrate_exact(gen, state0, cfg.steps, tracked.grid), tracked)
    adiabatic = integrate_r_adiabatic(gen, tracked, r0, cfg.steps)
    return tracked, exact, adiabatic


# ---------------------------------------------------------------- commands


def cmd_jordan(cfg: RunConfig, stdout) -> int:
    gen = load_generator(cfg)
    L = supermatrix(gen, cfg.s)
    dec = jordan_decompose(L, cfg.tol_cluster, cfg.tol_rank)
    np.set_printoptions(precision=6, suppress=True, linewidth=160)
    lines = [f"s = {cfg.s:g}", f"block sizes: {dec.block_sizes}"]
    for a, b in enumerate(dec.blocks):
        lines.append(f"block {a + 1}: eigenvalue {b.eigenvalue.real:.12g}{b.eigenvalue.imag:+.12g}j size {b.size}")
    lines += ["Jordan matrix:", str(_real_if_close(dec.jordan_matrix())), "S:", str(_real_if_close(dec.S))]
    lines += ["S^-1:", str(_real_if_close(dec.S_inv))]
    lines += [f"residual {k}: {v:.3e}" for k, v in dec.residuals.items()]
    text = "\n".join(lines) + "\n"
    stdout.write(text)
    if cfg.out:
        out = Path(cfg.out)
        write_atomic(out / "jordan.txt", text)
        rows = [[a + 1, b.size, b.eigenvalue.real, b.eigenvalue.imag] for a, b in enumerate(dec.blocks)]
        write_atomic(out / "jordan_blocks.csv", csv_text(["block", "size", "eig_re", "eig_im"], rows))
        for name, M in (("S", dec.S), ("S_inv", dec.S_inv)):
            header = [f"{part}_{k}" for k in range(M.shape[1]) for part in ("re", "im")]
            rows = [[x for z in row for x in (z.real, z.imag)] for row in M]
            write_atomic(out / f"jordan_{name}.csv", csv_text(header, rows))
    return EXIT_OK


def _real_if_close(M):
    return M.real if np.abs(M.imag).max(initial=0.0) < 1e-12 else M


def fig1_rows(cfg: RunConfig) -> list:
    rows = []
    for a in FIG1_SLOPES:
        T = cfg.total_time or 1.0
        gen = build_two_level(fig1_model(a, T))
        tracked, exact, adia = run_pair(gen, replace(cfg, r0=None, bloch=None), np.array([1, 0, 0, 1], dtype=complex))
        for k, s in enumerate(tracked.grid):
            rows.append([a, s, T * s, exact.r[k, 3].real, exact.r[k, 0].real, adia.r[k, 3].real, adia.r[k, 0].real])
    return rows


FIG1_HEADER = ["a", "s", "t", "r3_exact", "r1_exact", "r3_adiabatic", "r1_adiabatic"]


def cmd_evolve(cfg: RunConfig, stdout) -> int:
    out = Path(cfg.out or ".")
    if cfg.fig1:
        write_atomic(out / "fig1.csv", csv_text(FIG1_HEADER, fig1_rows(cfg)))
        stdout.write(f"wrote {out / 'fig1.csv'}\n")
        return EXIT_OK
    gen = load_generator(cfg)
    tracked, exact, adia = run_pair(gen, cfg)
    labels = chain_labels(tracked)
    files = []
    if cfg.command == "evolve":
        write_atomic(out / "trajectory.csv", trajectory_csv(exact, labels))
        files.append("trajectory.csv")
    if cfg.command == "evolve-adiabatic" or cfg.adiabatic:
        write_atomic(out / "trajectory_adiabatic.csv", trajectory_csv(adia, labels))
        files.append("trajectory_adiabatic.csv")
    main = exact if cfg.command == "evolve" else adia
    stdout.write(f"T = {gen.total_time:g}, steps = {main.meta['steps']}, blocks = {tracked.block_sizes}\n")
    stdout.write("final state: " + " ".join(fmt(x) for x in main.states[-1]) + "\n")
    for lab, z in zip(labels, main.r[-1]):
        stdout.write(f"final {lab}: {fmt(z.real)} {fmt(z.imag)}j\n")
    stdout.write("wrote " + ", ".join(str(out / f) for f in files) + "\n")
    return EXIT_OK


def cmd_conditions(cfg: RunConfig, stdout) -> int:
    gen = load_generator(cfg)
    tracked = track_decomposition(gen, cfg.node_grid, cfg.tol_cluster, cfg.tol_rank)
    r0 = initial_r(cfg, tracked)
    report = open_condition(tracked, cfg.margin, r0=r0)
    text = report.summary() + "\n"
    stdout.write(text)
    if cfg.out:
        out = Path(cfg.out)
        write_atomic(out / "summary.txt", text)
        rows = []
        for pc in report.pairs:
            w = np.abs(pc.omega).min()
            Om = report.Omega[(pc.beta, pc.alpha)]
            rows.append([pc.alpha + 1, pc.i, pc.beta + 1, pc.j, pc.count, pc.eta, w, Om[-1].real, Om[-1].imag])
        header = ["alpha", "i", "beta", "j", "terms", "eta", "min_abs_omega", "Omega_end_re", "Omega_end_im"]
        write_atomic(out / "conditions.csv", csv_text(header, rows))
        rows = []
        for tc in report.time:
            rows.append(
                [tc.alpha + 1, tc.i, tc.total_time, tc.rhs, tc.boundary, tc.integral, tc.count_M,
                 tc.count_bound, int(tc.breakdown), int(tc.overflow)]
            )
        header = ["alpha", "i", "T", "rhs", "boundary", "integral", "M", "count_bound", "breakdown", "overflow"]
        write_atomic(out / "time_conditions.csv", csv_text(header, rows))
        rows = [[h.alpha + 1, h.i, h.beta + 1, h.j, h.lhs, h.min_gap, h.ratio] for h in report.heuristic]
        write_atomic(out / "heuristic.csv", csv_text(["alpha", "i", "beta", "j", "lhs", "min_gap", "ratio"], rows))
    return EXIT_OK


def parse_sweep(spec: str):
    if "=" not in spec:
        raise ConfigError("--sweep expects key=v1,v2,...")
    key, vals = spec.split("=", 1)
    if key not in SWEEP_KEYS:
        raise ConfigError(f"unknown sweep key {key!r}; choose from {', '.join(SWEEP_KEYS)}")
    try:
        values = [float(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {vals!r}") from None
    if not values:
        raise ConfigError("--sweep needs at least one value")
    if key == "steps":
        if any(v != int(v) or v < MIN_STEPS for v in values):
            raise ConfigError(f"steps values must be integers >= {MIN_STEPS}")
    if key == "T" and any(v <= 0 for v in values):
        raise ConfigError("T values must be positive")
    return key, values


SWEEP_HEADER = [
    "key", "value", "r1_exact_end", "r1_deviation", "r1_adiabatic_deviation", "state_gap_exact_adiabatic",
    "endpoint_error", "eta_max", "time_rhs_max", "breakdown",
]


def sweep_entry(args) -> list:
    """One sweep row; top-level so worker processes can import it."""
    cfg, key, value = args
    if key == "a":
        gen = build_two_level(fig1_model(value, cfg.total_time or 1.0))
    else:
        gen = load_generator(cfg)
        if key == "T":
            gen = gen.with_total_time(value)
    if key == "steps":
        cfg = replace(cfg, steps=int(value))
    tracked, exact, adia = run_pair(gen, cfg)
    r1 = exact.r[:, 0]
    if gen.is_constant:
        L = gen.total_time * supermatrix(gen, 0.0)
        ref = sla.expm(L * (tracked.grid[-1] - tracked.grid[0])) @ exact.states[0]
        err = float(np.abs(exact.states[-1] - ref).max())
    else:
        ref = integrate_exact(gen, exact.states[0], 4 * cfg.steps, tracked.grid)
        err = float(np.abs(exact.states[-1] - ref.states[-1]).max())
    report = open_condition(tracked, cfg.margin, r0=exact.r[0])
    rhs = max((tc.rhs for tc in report.time), default=0.0)
    row = [
        key, value, r1[-1].real, abs(r1[-1] - r1[0]), abs(adia.r[-1, 0] - adia.r[0, 0]),
        float(np.abs(exact.states - adia.states).max()), err, report.eta_max, rhs, int(bool(report.breakdown_pairs)),
    ]
    if cfg.out:
        labels = chain_labels(tracked)
        write_atomic(Path(cfg.out) / f"sweep_{key}_{fmt(value)}.csv", trajectory_csv(exact, labels))
    return row


def cmd_sweep(cfg: RunConfig, stdout) -> int:
    key, values = parse_sweep(cfg.sweep)
    jobs = [(cfg, key, v) for v in values]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(sweep_entry, jobs))
    else:
        rows = [sweep_entry(j) for j in jobs]
    text = csv_text(SWEEP_HEADER, rows)
    if cfg.out:
        write_atomic(Path(cfg.out) / "sweep.csv", text)
    stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="openadiabatic", description="Jordan structure and adiabaticity of Lindblad generators.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("model_name", nargs="?", help="bundled model name or model file")
    p.add_argument("--model", help="bundled model name or model file")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID, help="number of nodes on [0, 1]")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="RK4 steps over [0, 1]")
    p.add_argument("--total-time", type=float, help="override the model's total time T")
    p.add_argument("--margin", type=float, default=DEFAULT_MARGIN, help="ratio counted as much smaller")
    p.add_argument("--tol-cluster", type=float, default=TOL_CLUSTER)
    p.add_argument("--tol-rank", type=float, default=TOL_RANK)
    p.add_argument("--out", help="output directory")
    p.add_argument("--sweep", help="key=v1,v2,... with key in a, T, steps")
    p.add_argument("--adiabatic", action="store_true", help="also write the block-decoupled run")
    p.add_argument("--fig1", action="store_true", help="write fig1.csv for the two-level slope family")
    p.add_argument("--bloch", type=_floats, help="initial Bloch vector vx,vy,vz (two-level models)")
    p.add_argument("--r0", type=_floats, help="initial block coefficients")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep entries")
    p.add_argument("--s", type=float, default=0.0, help="normalized time for the jordan command")
    return p


def config_from_args(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    if ns.model and ns.model_name and ns.model != ns.model_name:
        raise ConfigError("model given twice with different values")
    return RunConfig(
        command=ns.command, model=ns.model or ns.model_name, grid=ns.grid, steps=ns.steps,
        total_time=ns.total_time, out=ns.out, margin=ns.margin, tol_cluster=ns.tol_cluster,
        tol_rank=ns.tol_rank, sweep=ns.sweep, adiabatic=ns.adiabatic, fig1=ns.fig1, bloch=ns.bloch,
        r0=ns.r0, workers=ns.workers, s=ns.s,
    )


HANDLERS = {
    "jordan": cmd_jordan,
    "evolve": cmd_evolve,
    "evolve-adiabatic": cmd_evolve,
    "conditions": cmd_conditions,
    "sweep": cmd_sweep,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return HANDLERS[cfg.command](cfg, stdout)
    except (ModelError, ValueError) as err:
        stderr.write(f"error: {err}\n")
        return EXIT_CONFIG
    except JordanError as err:
        stderr.write(f"decomposition error: {err}\n")
        return EXIT_JORDAN
    except TrackingError as err:
        stderr.write(f"tracking error: {err}\n")
        return EXIT_TRACKING


if __name__ == "__main__":
    sys.exit(main())
