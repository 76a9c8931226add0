"""Grid experiments: simulate, discover, score, summarize.

Each grid cell ``(n_observed, n)`` runs ``repetitions`` independent graphs.
Per-run artefacts and a per-cell result file are written atomically, so an
interrupted run resumes by skipping cells whose result file is complete.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .citest import DataProvider, OracleProvider
from .engine import Options, dump_trace, f_fci
from .graph import ContractViolation
from .metrics import evaluate
from .simulator import DegenerateSelectionError, SimConfig, random_structure, sample_all

BACKENDS = ("oracle", "data")
METRICS = ("selection_accuracy", "dag_precision", "dag_recall", "dag_f1", "dag_shd")
SUMMARY_COLUMNS = (
    ["n_observed", "n", "backend", "repetitions", "completed"]
    + [f"{m}_{s}" for m in METRICS for s in ("mean", "var")]
)


@dataclass
class ExperimentPlan:
    base: SimConfig = field(default_factory=SimConfig.linear_gaussian)
    n_observed: tuple[int, ...] = (10, 15, 20, 25)
    n_samples: tuple[int, ...] = (500, 1000, 1500, 2000)
    repetitions: int = 10
    backend: str = "data"
    out: str = "results"
    alpha: float = 0.05
    refine: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        self.n_observed = tuple(int(x) for x in self.n_observed)
        self.n_samples = tuple(int(x) for x in self.n_samples)
        if not self.n_observed or not self.n_samples:
            raise ContractViolation("experiment grid is empty")
        if self.repetitions < 1:
            raise ContractViolation("repetitions must be positive")
        if self.backend not in BACKENDS:
            raise ContractViolation(f"backend must be one of {BACKENDS}")

    def cells(self) -> list[tuple[int, int]]:
        return [(p, n) for p in self.n_observed for n in self.n_samples]

    def run_config(self, n_observed: int, rep: int) -> SimConfig:
        # The graph depends on (n_observed, rep) only, so cells along n share graphs.
        d = self.base.to_dict()
        d.update(n_observed=n_observed, seed=self.base.seed + rep)
        return SimConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"] = self.base.to_dict()
        d["n_observed"] = list(self.n_observed)
        d["n_samples"] = list(self.n_samples)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        base = d.pop("base", None)
        if isinstance(base, str):
            if base != "linear_gaussian":
                raise ContractViolation(f"unknown preset {base!r}")
            base = SimConfig.linear_gaussian()
        elif isinstance(base, dict):
            base = SimConfig.from_dict(base)
        else:
            base = SimConfig.linear_gaussian()
        return cls(base=base, **d)


@dataclass
class ExperimentResult:
    rows: list[dict]
    summary_path: Path
    computed_cells: list[tuple[int, int]]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _cell_dir(plan: ExperimentPlan, p: int, n: int) -> Path:
    return Path(plan.out) / f"cell_p{p}_n{n}"


def _load_cell(plan: ExperimentPlan, p: int, n: int) -> dict | None:
    path = _cell_dir(plan, p, n) / "cell.json"
    try:
        rec = json.loads(path.read_text())
    except (OSError, ValueError):
        return None
    if not isinstance(rec, dict) or len(rec.get("runs", [])) != plan.repetitions:
        return None
    return rec


def run_once(plan: ExperimentPlan, p: int, n: int, rep: int) -> dict:
    """One repetition of one cell; writes truth, graph and trace under the cell directory."""
    cfg = plan.run_config(p, rep)
    spec = random_structure(cfg)
    if plan.backend == "oracle":
        provider = OracleProvider(spec.graph, plan.alpha)
    else:
        try:
            provider = DataProvider(sample_all(spec, n), plan.alpha)
        except DegenerateSelectionError as exc:
            return {"rep": rep, "seed": cfg.seed, "failed": str(exc)}
    pag, trace = f_fci(provider, Options(refine=plan.refine))
    report = evaluate(pag, spec.graph)
    rdir = _cell_dir(plan, p, n) / f"rep_{rep}"
    _atomic_write(rdir / "truth.json", json.dumps(spec.to_dict(), sort_keys=True, default=float))
    _atomic_write(rdir / "graph.json", pag.to_json())
    _atomic_write(rdir / "trace.jsonl", dump_trace(trace))
    return {"rep": rep, "seed": cfg.seed, **report.as_row()}


def _run_cell(plan: ExperimentPlan, p: int, n: int) -> dict:
    runs = [run_once(plan, p, n, r) for r in range(plan.repetitions)]
    rec = {"n_observed": p, "n": n, "backend": plan.backend, "runs": runs}
    _atomic_write(_cell_dir(plan, p, n) / "cell.json", json.dumps(rec, sort_keys=True))
    return rec


def summarize(rec: dict, repetitions: int) -> dict:
    """Mean and population variance of each metric over the successful runs."""
    ok = [r for r in rec["runs"] if "failed" not in r]
    row = {"n_observed": rec["n_observed"], "n": rec["n"], "backend": rec["backend"],
           "repetitions": repetitions, "completed": len(ok)}
    for m in METRICS:
        vals = np.array([r[m] for r in ok if r.get(m) is not None], dtype=float)
        row[f"{m}_mean"] = float(vals.mean()) if vals.size else float("nan")
        row[f"{m}_var"] = float(vals.var()) if vals.size else float("nan")
    return row


def _summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def run_experiment(plan: ExperimentPlan) -> ExperimentResult:
    """Run every incomplete cell of ``plan`` and rewrite ``summary.csv``."""
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "plan.json", json.dumps(plan.to_dict(), sort_keys=True))
    records = {c: _load_cell(plan, *c) for c in plan.cells()}
    todo = [c for c, r in records.items() if r is None]
    if plan.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            futs = {c: pool.submit(_run_cell, plan, *c) for c in todo}
            for c, f in futs.items():
                records[c] = f.result()
    else:
        for c in todo:
            records[c] = _run_cell(plan, *c)
    rows = [summarize(records[c], plan.repetitions) for c in plan.cells()]
    manifest = {"completed": [list(c) for c in plan.cells()]}
    _atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True))
    summary = out / "summary.csv"
    _atomic_write(summary, _summary_csv(rows))
    return ExperimentResult(rows, summary, todo)
