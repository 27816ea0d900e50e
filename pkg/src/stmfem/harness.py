"""Experiment driver: level sweeps, table emission, and mesh dumps.

run_convergence reproduces the uniform and distorted convergence studies:
per level it builds the mesh (distorting interior vertices when requested),
runs the time-marching solver, and accumulates both space-time error norms
together with their experimental orders.
"""

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, fields

from . import mesh as meshmod
from .assembly import CoefficientField
from .mms import ErrorReport, error_q_V, error_u, mms_standard
from .spaces import build_pair
from .timeloop import ProblemData, run

DEFAULT_OMEGA = 10.0 * math.pi


@dataclass
class ExperimentConfig:
    """Configuration of one convergence experiment."""

    r: int = 2
    p: int = 2
    level_min: int = 0
    level_max: int = 4
    n_steps_base: int = 10       # time intervals on level 0; doubles per level
    final_time: float = 1.0
    omega: float = DEFAULT_OMEGA
    distortion: float = 0.0
    seed: int = 20250808
    solver: str = "direct"
    out_dir: str = "."

    def __post_init__(self):
        if self.level_min < 0 or self.level_max < self.level_min:
            raise ValueError("need 0 <= level_min <= level_max")
        if self.solver not in ("direct", "schur"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not 0.0 <= self.distortion < 0.5:
            raise ValueError("distortion factor must be in [0, 0.5)")

    def levels(self):
        return range(self.level_min, self.level_max + 1)

    def n_steps(self, level):
        return self.n_steps_base * 2**level

    def reproducibility_hash(self):
        payload = json.dumps(
            {f.name: getattr(self, f.name) for f in fields(self)
             if f.name != "out_dir"},
            sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    """Results of one run_convergence call."""

    config: ExperimentConfig
    report: ErrorReport
    wall_clock: list = field(default_factory=list)
    config_hash: str = ""


def build_level_mesh(config, level):
    """The (possibly distorted) mesh of one level of the sweep."""
    m = meshmod.unit_square_mesh(level)
    if config.distortion > 0.0:
        m = meshmod.distort(m, config.distortion,
                            meshmod.level_seed(config.seed, level))
    return m


def run_convergence(config, progress=None):
    """Run the level sweep of a config and collect the error report."""
    coefficient = CoefficientField.identity()
    exact = mms_standard(coefficient, config.omega)
    data = ProblemData(
        diffusion=coefficient,
        initial_scalar=exact.initial_scalar(),
        source=exact.source,
        final_time=config.final_time,
        initial_flux=exact.initial_flux(),
    )
    levels, steps, taus, cells, hs, ndofs = [], [], [], [], [], []
    err_us, err_qs, walls = [], [], []
    for level in config.levels():
        t0 = time.perf_counter()
        m = build_level_mesh(config, level)
        scalar, flux = build_pair(m, config.p)
        n = config.n_steps(level)
        solution = run(data, m, p=config.p, r=config.r, n_steps=n,
                       solver=config.solver)
        eu = error_u(solution, exact)
        eq = error_q_V(solution, exact)
        levels.append(level)
        steps.append(n)
        taus.append(config.final_time / n)
        cells.append(m.n_cells)
        hs.append(meshmod.h_max(m))
        ndofs.append(scalar.n_dofs + flux.n_dofs)
        err_us.append(eu)
        err_qs.append(eq)
        walls.append(time.perf_counter() - t0)
        if progress is not None:
            progress(level, eu, eq, walls[-1])
    report = ErrorReport.from_errors(levels, steps, taus, cells, hs, ndofs,
                                     err_us, err_qs)
    return RunRecord(config=config, report=report, wall_clock=walls,
                     config_hash=config.reproducibility_hash())


def _fmt(x):
    return f"{x:.4e}"


def _fmt_eoc(x):
    return "" if x is None else f"{x:.2f}"


CSV_HEADER = "level,N,tau,cells,h,ndof,err_u,eoc_u,err_q_V,eoc_q"


def to_csv(record):
    """CSV table, one row per level, 5 significant digits for reals."""
    rep = record.report
    lines = [CSV_HEADER]
    for i, lvl in enumerate(rep.levels):
        lines.append(",".join([
            str(lvl), str(rep.n_steps[i]), _fmt(rep.tau[i]),
            str(rep.n_cells[i]), _fmt(rep.h[i]), str(rep.n_dofs[i]),
            _fmt(rep.err_u[i]), _fmt_eoc(rep.eoc_u[i]),
            _fmt(rep.err_q[i]), _fmt_eoc(rep.eoc_q[i]),
        ]))
    return "\n".join(lines) + "\n"


def parse_csv(text):
    """Parse a to_csv table back into a dict of column lists."""
    lines = [l for l in text.strip().splitlines() if l]
    header = lines[0].split(",")
    out = {h: [] for h in header}
    for line in lines[1:]:
        for h, tok in zip(header, line.split(",")):
            if h in ("level", "N", "cells", "ndof"):
                out[h].append(int(tok))
            elif h.startswith("eoc"):
                out[h].append(None if tok == "" else float(tok))
            else:
                out[h].append(float(tok))
    return out


def to_markdown(record):
    """Markdown table mirroring the convergence-table layout."""
    rep = record.report
    lines = [
        "| level | N | tau | cells | h | ndof | err_u | EOC | err_q_V | EOC |",
        "|---|---|---|---|---|---|---|---|---|---|",
    ]
    for i, lvl in enumerate(rep.levels):
        lines.append(
            f"| {lvl} | {rep.n_steps[i]} | {_fmt(rep.tau[i])} | "
            f"{rep.n_cells[i]} | {_fmt(rep.h[i])} | {rep.n_dofs[i]} | "
            f"{_fmt(rep.err_u[i])} | {_fmt_eoc(rep.eoc_u[i])} | "
            f"{_fmt(rep.err_q[i])} | {_fmt_eoc(rep.eoc_q[i])} |")
    return "\n".join(lines) + "\n"


def to_plot_data(record):
    """(h, error) pairs per norm for log-log plotting."""
    rep = record.report
    lines = ["# h err_u err_q_V"]
    for i in range(len(rep.levels)):
        lines.append(f"{rep.h[i]!r} {rep.err_u[i]!r} {rep.err_q[i]!r}")
    return "\n".join(lines) + "\n"


def emit_tables(record, fmt, path):
    """Write a record in one of the supported formats; returns the path."""
    writers = {"csv": to_csv, "markdown": to_markdown, "plot-data": to_plot_data}
    if fmt not in writers:
        raise ValueError(f"unknown format {fmt!r}")
    text = writers[fmt](record)
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write table to {path}: {exc}") from exc
    return path
