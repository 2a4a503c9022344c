"""Experiment grid over scenarios x discretization schemes x MPC variants."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .closed_loop import ScenarioSpec, simulate
from .discretization import SCHEMES, normalize_scheme
from .exceptions import AgcBenchError
from .metrics import evaluate, tie_flows
from .network import N_STATES, STATE_NAMES
from .qp import DEFAULT_TOL
from .scenarios import REFERENCE_ETA, REFERENCE_PHI, builtin_scenario
from .terminal import VARIANT_LABELS, VARIANTS, normalize_variant

log = logging.getLogger(__name__)

SUMMARY_KEYS = ("scenario", "scheme", "variant", "eta", "phi")


@dataclass
class ExperimentGrid:
    scenarios: list = field(default_factory=lambda: [1, 2, 3])
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    variants: list = field(default_factory=lambda: list(VARIANTS))
    horizon: int = 15
    tol: float = DEFAULT_TOL
    T_sim: int | None = None
    jobs: int = 1

    def __post_init__(self):
        self.schemes = [normalize_scheme(s) for s in self.schemes]
        self.variants = [normalize_variant(v) for v in self.variants]

    def resolved_scenarios(self):
        out = []
        for s in self.scenarios:
            if isinstance(s, ScenarioSpec):
                out.append(s)
            elif self.T_sim is not None:
                out.append(builtin_scenario(s, T_sim=self.T_sim))
            else:
                out.append(builtin_scenario(s))
        return out

    def cells(self):
        return [
            (spec, scheme, variant)
            for spec in self.resolved_scenarios()
            for scheme in self.schemes
            for variant in self.variants
        ]


@dataclass
class CellResult:
    scenario: str
    scheme: str
    variant: str
    spec: ScenarioSpec = field(repr=False)
    eta: float | None = None
    phi: float | None = None
    trajectory: object = field(default=None, repr=False)
    report: object = field(default=None, repr=False)
    error: str | None = None

    @property
    def ok(self):
        return self.error is None

    def record(self):
        rec = {
            "scenario": self.scenario,
            "scheme": self.scheme,
            "variant": VARIANT_LABELS[self.variant],
            "eta": self.eta,
            "phi": self.phi,
        }
        if self.error is not None:
            rec["error"] = self.error
        return rec


def run_cell(spec: ScenarioSpec, scheme, variant, horizon=15, tol=DEFAULT_TOL) -> CellResult:
    cell = CellResult(spec.name, normalize_scheme(scheme), normalize_variant(variant), spec)
    try:
        traj = simulate(spec, cell.scheme, cell.variant, horizon=horizon, tol=tol)
        report = evaluate(traj, spec.topology)
    except AgcBenchError as exc:
        log.warning("cell %s/%s/%s failed: %s", spec.name, cell.scheme, cell.variant, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
        return cell
    cell.trajectory, cell.report = traj, report
    cell.eta, cell.phi = report.eta, report.phi
    return cell


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment_grid(grid: ExperimentGrid) -> list:
    """One ``CellResult`` per grid cell, in grid order.

    Failures are captured in ``CellResult.error``; other cells still run.
    """
    tasks = [(spec, scheme, variant, grid.horizon, grid.tol) for spec, scheme, variant in grid.cells()]
    if grid.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=grid.jobs) as pool:
            return list(pool.map(_run_cell_args, tasks))
    return [run_cell(*t) for t in tasks]


def _atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    return repr(float(x))


def trajectory_columns(traj, topology):
    cols = ["t"]
    for a in traj.area_ids:
        cols += [f"{s}_{a}" for s in STATE_NAMES] + [f"Pref_{a}", f"PL_{a}"]
    cols += [f"tie_{t.i}_{t.j}" for t in topology.ties]
    return cols


def trajectory_csv(traj, topology) -> str:
    """CSV text: samples 0..T_sim; input and load are blank on the final row."""
    _, flows = tie_flows(traj, topology)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_columns(traj, topology))
    T, M = traj.T_sim, traj.n_areas
    for t in range(T + 1):
        row = [str(t)]
        for k in range(M):
            row += [_num(v) for v in traj.x[t, N_STATES * k:N_STATES * (k + 1)]]
            if t < T:
                row += [_num(traj.u[t, k]), _num(traj.load[t, k])]
            else:
                row += ["", ""]
        row += [_num(v) for v in flows[t]]
        w.writerow(row)
    return buf.getvalue()


def cell_filename(cell):
    return f"{cell.scenario}_{cell.scheme}_{VARIANT_LABELS[cell.variant]}.csv"


def summary_json(results) -> str:
    return json.dumps([c.record() for c in results], indent=2) + "\n"


def export_results(results, format, path):
    """Write trajectories (``csv``: one file per cell under directory ``path``)
    or the summary (``json``: a single file at ``path``). Returns the written paths."""
    path = Path(path)
    written = []
    try:
        if format == "json":
            _atomic_write(path, summary_json(results))
            written.append(path)
        elif format == "csv":
            for cell in results:
                if cell.trajectory is None:
                    continue
                target = path / cell_filename(cell)
                _atomic_write(target, trajectory_csv(cell.trajectory, cell.spec.topology))
                written.append(target)
        else:
            raise ValueError(f"unknown export format {format!r}; expected 'csv' or 'json'")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return written


def load_summary(path):
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError(f"{path}: summary must be a JSON list of records")
    for r in records:
        missing = [k for k in SUMMARY_KEYS[:3] if k not in r]
        if missing:
            raise ValueError(f"{path}: record {r!r} lacks {missing}")
    return records


def _key(rec):
    return (str(rec["scenario"]), normalize_scheme(rec["scheme"]), normalize_variant(rec["variant"]))


def reference_records():
    return [
        {"scenario": f"scenario{s}", "scheme": scheme, "variant": VARIANT_LABELS[v],
         "eta": REFERENCE_ETA[(s, scheme, v)], "phi": REFERENCE_PHI[(s, scheme, v)]}
        for (s, scheme, v) in sorted(REFERENCE_ETA)
    ]


def compare_summaries(a, b):
    """Element-wise ``a - b`` for eta and phi on matching cells.

    Cells present in only one summary are returned with ``None`` deltas.
    """
    ia = {_key(r): r for r in a}
    ib = {_key(r): r for r in b}
    rows = []
    for key in list(ia) + [k for k in ib if k not in ia]:
        ra, rb = ia.get(key), ib.get(key)
        row = {"scenario": key[0], "scheme": key[1], "variant": VARIANT_LABELS[key[2]]}
        for m in ("eta", "phi"):
            va = None if ra is None else ra.get(m)
            vb = None if rb is None else rb.get(m)
            row[f"{m}_a"], row[f"{m}_b"] = va, vb
            row[f"d_{m}"] = None if va is None or vb is None else va - vb
        rows.append(row)
    return rows


def _g6(x):
    return "-" if x is None else f"{x:.6g}"


def format_tables(records) -> str:
    """Scenario/scheme columns by variant rows, one block per index."""
    cols = []
    for r in records:
        c = (str(r["scenario"]), normalize_scheme(r["scheme"]))
        if c not in cols:
            cols.append(c)
    variants = []
    for r in records:
        v = normalize_variant(r["variant"])
        if v not in variants:
            variants.append(v)
    index = {_key(r): r for r in records}
    out = []
    for metric in ("eta", "phi"):
        head = [metric.ljust(9)] + [f"{s}/{sch}".rjust(16) for s, sch in cols]
        out.append(" ".join(head))
        for v in variants:
            line = [VARIANT_LABELS[v].ljust(9)]
            for s, sch in cols:
                rec = index.get((s, sch, v))
                line.append(_g6(None if rec is None else rec.get(metric)).rjust(16))
            out.append(" ".join(line))
        out.append("")
    return "\n".join(out)


def format_comparison(rows) -> str:
    lines = [f"{'cell':32} {'eta_a':>12} {'eta_b':>12} {'d_eta':>12} {'phi_a':>12} {'phi_b':>12} {'d_phi':>12}"]
    for r in rows:
        cell = f"{r['scenario']}/{r['scheme']}/{r['variant']}"
        lines.append(
            f"{cell:32} {_g6(r['eta_a']):>12} {_g6(r['eta_b']):>12} {_g6(r['d_eta']):>12} "
            f"{_g6(r['phi_a']):>12} {_g6(r['phi_b']):>12} {_g6(r['d_phi']):>12}"
        )
    return "\n".join(lines) + "\n"
