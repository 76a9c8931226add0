"""Ground-truth structures and selection-filtered datasets.

Observed and latent variables follow additive-noise models
``X = sum_k f_k(z_k) + eps`` where ``z_k`` is the standardized value of parent
``k`` and each ``f_k`` is ``w * h(z_k)`` with ``h`` drawn from the mechanism
set. Selection vertices score their parents the same way and keep a sample
only when every score falls inside that vertex's acceptance interval.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import (
    AugmentedDag, ContractViolation, InterventionKind, MixedGraph, VertexKind, augment, graph_from_dict,
    topological_order,
)


class Mechanism(str, Enum):
    LINEAR = "linear"
    SQUARE = "square"
    SIN = "sin"
    TANH = "tanh"


# Mean and sd of h(z) for z ~ N(0, 1), used to keep nonlinear terms centred.
_CENTRE = {
    Mechanism.LINEAR: (0.0, 1.0),
    Mechanism.SQUARE: (1.0, float(np.sqrt(2.0))),
    Mechanism.SIN: (0.0, float(np.sqrt((1 - np.exp(-2.0)) / 2))),
    Mechanism.TANH: (0.0, 0.6279),
}


def apply_mechanism(m: Mechanism, z: np.ndarray) -> np.ndarray:
    if m is Mechanism.LINEAR:
        h = z
    elif m is Mechanism.SQUARE:
        h = z * z
    elif m is Mechanism.SIN:
        h = np.sin(z)
    else:
        h = np.tanh(z)
    mu, sd = _CENTRE[m]
    return (h - mu) / sd


class ConfigError(ValueError):
    pass


class DegenerateSelectionError(RuntimeError):
    """The acceptance region keeps too few samples."""


@dataclass
class SimConfig:
    n_observed: int = 10
    avg_degree: float = 2.0
    n_latent: tuple[int, int] = (2, 3)
    n_selection: tuple[int, int] = (2, 3)
    mechanisms: tuple[str, ...] = ("linear", "square", "sin", "tanh")
    noise: str = "uniform_mixture"  # or "gaussian"
    noise_low: tuple[float, float] = (0.0, 2.0)
    noise_high: tuple[float, float] = (2.0, 4.0)
    weight_range: tuple[float, float] = (0.5, 1.5)
    selection_keep_quantile: tuple[float, float] = (0.2, 0.8)
    samples_per_regime: int = 1000
    intervention_kind: str = "hard"
    targets: str | list[list[int]] = "all"
    seed: int = 0
    soft_shift: float = 2.0
    hard_range: tuple[float, float] = (-1.0, 1.0)
    n_pilot: int = 20000
    block_size: int = 4096

    def __post_init__(self) -> None:
        lo, hi = self.selection_keep_quantile
        if not 0 <= lo <= hi <= 1:
            raise ConfigError("selection quantiles must satisfy 0 <= lo <= hi <= 1")
        if self.n_observed < 1 or self.samples_per_regime < 1:
            raise ConfigError("counts must be positive")
        for r in (self.n_latent, self.n_selection):
            if len(r) != 2 or r[0] < 0 or r[0] > r[1]:
                raise ConfigError(f"bad count range {r}")
        for m in self.mechanisms:
            Mechanism(m)
        InterventionKind(self.intervention_kind)
        if self.noise not in ("uniform_mixture", "gaussian"):
            raise ConfigError(f"unknown noise model {self.noise!r}")

    @classmethod
    def linear_gaussian(cls, **kw) -> "SimConfig":
        """Linear mechanisms with Gaussian noise (mean 2, sd 1); exact for partial-correlation tests."""
        base = dict(mechanisms=("linear",), noise="gaussian")
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        for k in ("n_latent", "n_selection", "noise_low", "noise_high", "weight_range",
                  "selection_keep_quantile", "hard_range", "mechanisms"):
            if k in d and isinstance(d[k], list):
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Term:
    parent: int
    mechanism: Mechanism
    weight: float


@dataclass
class StructureSpec:
    """Augmented DAG plus mechanisms.

    ``terms[v]`` lists the parent contributions of an observed, latent or
    selection vertex; ``scale[v]`` holds the (mean, sd) used to standardize
    ``v`` when it feeds a child; ``interval[s]`` is the acceptance interval of
    selection vertex ``s``.
    """

    graph: AugmentedDag
    terms: dict[int, list[Term]]
    scale: dict[int, tuple[float, float]] = field(default_factory=dict)
    interval: dict[int, tuple[float, float]] = field(default_factory=dict)
    config: SimConfig = field(default_factory=SimConfig)

    def to_dict(self) -> dict:
        g = self.graph
        return {
            "graph": g.to_dict(),
            "mechanisms": {
                g.name(v): [{"parent": g.name(t.parent), "mechanism": t.mechanism.value, "weight": t.weight}
                            for t in ts]
                for v, ts in sorted(self.terms.items())
            },
            "scale": {g.name(v): list(s) for v, s in sorted(self.scale.items())},
            "interval": {g.name(v): list(s) for v, s in sorted(self.interval.items())},
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructureSpec":
        g = graph_from_dict(d["graph"])
        if not isinstance(g, AugmentedDag):
            g = AugmentedDag.from_graph(g)
        terms = {
            g.id_of(v): [Term(g.id_of(t["parent"]), Mechanism(t["mechanism"]), float(t["weight"])) for t in ts]
            for v, ts in d["mechanisms"].items()
        }
        scale = {g.id_of(v): tuple(s) for v, s in d.get("scale", {}).items()}
        interval = {g.id_of(v): tuple(s) for v, s in d.get("interval", {}).items()}
        cfg = SimConfig.from_dict(d["config"]) if "config" in d else SimConfig()
        return cls(g, terms, scale, interval, cfg)


@dataclass
class Dataset:
    regime: int
    targets: tuple[str, ...]
    columns: list[str]
    data: np.ndarray
    pre_selection_n: int
    kind: str = "hard"

    def __post_init__(self) -> None:
        if self.data.shape[0] > self.pre_selection_n:
            raise ValueError("more rows than pre-selection draws")
        if self.data.shape[1] != len(self.columns):
            raise ValueError("column count mismatch")


def _resolve_targets(cfg: SimConfig, n: int) -> list[list[int]]:
    if cfg.targets == "all":
        return [[k] for k in range(n)]
    if cfg.targets in ("none", None):
        return []
    return [list(t) for t in cfg.targets]


def random_structure(cfg: SimConfig, rng: np.random.Generator | int | None = None) -> StructureSpec:
    """Erdos-Renyi DAG over the observed variables with latent and selection vertices attached."""
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    n = cfg.n_observed
    n_lat = int(rng.integers(cfg.n_latent[0], cfg.n_latent[1] + 1))
    n_sel = int(rng.integers(cfg.n_selection[0], cfg.n_selection[1] + 1))
    if (n_lat or n_sel) and n < 2:
        raise ConfigError("latent or selection vertices need at least two observed variables")
    g = MixedGraph()
    for k in range(n):
        g.add_vertex(VertexKind.OBSERVED, f"X{k + 1}", vid=k)
    order = rng.permutation(n)
    p = cfg.avg_degree / (n - 1) if n > 1 else 0.0
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                g.add_directed(int(order[a]), int(order[b]))
    for k in range(n_lat):
        lv = g.add_vertex(VertexKind.LATENT, f"L{k + 1}")
        for c in sorted(rng.choice(n, size=2, replace=False)):
            g.add_directed(lv, int(c))
    for k in range(n_sel):
        sv = g.add_vertex(VertexKind.SELECTION, f"S{k + 1}")
        for c in sorted(rng.choice(n, size=2, replace=False)):
            g.add_directed(int(c), sv)
    aug = augment(g, _resolve_targets(cfg, n), [cfg.intervention_kind] * len(_resolve_targets(cfg, n)))
    return structure_for(aug, cfg, rng)


def structure_for(aug: AugmentedDag, cfg: SimConfig, rng: np.random.Generator | int | None = None) -> StructureSpec:
    """Draw mechanisms, weights, scales and selection intervals for a fixed augmented DAG."""
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    mechs = [Mechanism(m) for m in cfg.mechanisms]
    terms: dict[int, list[Term]] = {}
    for v in aug.ids(VertexKind.OBSERVED, VertexKind.LATENT, VertexKind.SELECTION):
        ts = []
        for par in sorted(aug.parents(v)):
            if aug.kind(par) in (VertexKind.NOISE, VertexKind.INDICATOR):
                continue
            m = mechs[int(rng.integers(len(mechs)))]
            w = float(rng.uniform(*cfg.weight_range)) * (1.0 if rng.random() < 0.5 else -1.0)
            ts.append(Term(par, m, w))
        terms[v] = ts
    spec = StructureSpec(aug, terms, config=cfg)
    spec.scale = _pilot_scale(spec, cfg.n_pilot, np.random.default_rng(rng.integers(2**63)))
    return calibrate_interval(spec, np.random.default_rng(rng.integers(2**63)), cfg.n_pilot)


def _noise(cfg: SimConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    if cfg.noise == "gaussian":
        return rng.normal(2.0, 1.0, size)
    pick = rng.random(size) < 0.5
    lo = rng.uniform(*cfg.noise_low, size)
    hi = rng.uniform(*cfg.noise_high, size)
    return np.where(pick, lo, hi)


def _draw(spec: StructureSpec, regime: int, n: int, rng: np.random.Generator,
          scale: dict[int, tuple[float, float]] | None = None) -> dict[int, np.ndarray]:
    """Unselected draws of every observed, latent and selection-score vertex."""
    g, cfg = spec.graph, spec.config
    scale = spec.scale if scale is None else scale
    targets = g.targets[regime - 1] if regime else frozenset()
    kind = g.kinds[regime - 1] if regime else None
    vals: dict[int, np.ndarray] = {}
    for v in topological_order(g):
        k = g.kind(v)
        if k in (VertexKind.NOISE, VertexKind.INDICATOR):
            continue
        if k is VertexKind.SELECTION:
            x = np.zeros(n)
        else:
            x = _noise(cfg, rng, n)
        if v in targets and kind is InterventionKind.HARD:
            vals[v] = rng.uniform(*cfg.hard_range, n)
            continue
        for t in spec.terms.get(v, []):
            mu, sd = scale.get(t.parent, (0.0, 1.0))
            x = x + t.weight * apply_mechanism(t.mechanism, (vals[t.parent] - mu) / sd)
        if v in targets:
            x = x + cfg.soft_shift
        vals[v] = x
    return vals


def _pilot_scale(spec: StructureSpec, n_pilot: int, rng: np.random.Generator) -> dict[int, tuple[float, float]]:
    """Observational mean and sd of every vertex, fixed once per structure.

    Vertices are visited in topological order, so each one is standardized
    with the already-fixed constants of its parents.
    """
    scale: dict[int, tuple[float, float]] = {}
    _draw_sequential_scale(spec, n_pilot, rng, scale)
    return scale


def _draw_sequential_scale(spec: StructureSpec, n: int, rng: np.random.Generator,
                           scale: dict[int, tuple[float, float]]) -> dict[int, np.ndarray]:
    g, cfg = spec.graph, spec.config
    vals: dict[int, np.ndarray] = {}
    for v in topological_order(g):
        k = g.kind(v)
        if k in (VertexKind.NOISE, VertexKind.INDICATOR):
            continue
        x = np.zeros(n) if k is VertexKind.SELECTION else _noise(cfg, rng, n)
        for t in spec.terms.get(v, []):
            mu, sd = scale[t.parent]
            x = x + t.weight * apply_mechanism(t.mechanism, (vals[t.parent] - mu) / sd)
        vals[v] = x
        sd = float(x.std())
        scale[v] = (float(x.mean()), sd if sd > 0 else 1.0)
    return vals


def calibrate_interval(spec: StructureSpec, rng: np.random.Generator | int, n_pilot: int = 20000) -> StructureSpec:
    """Set each selection interval to the configured quantile band of its pilot score distribution."""
    if n_pilot < 100:
        raise ConfigError("pilot needs at least 100 samples")
    rng = np.random.default_rng(rng)
    lo, hi = spec.config.selection_keep_quantile
    if lo >= hi:
        raise DegenerateSelectionError(f"empty quantile band ({lo}, {hi})")
    vals = _draw(spec, 0, n_pilot, rng)
    interval = {}
    for s in spec.graph.ids(VertexKind.SELECTION):
        a = -np.inf if lo <= 0 else float(np.quantile(vals[s], lo))
        b = np.inf if hi >= 1 else float(np.quantile(vals[s], hi))
        interval[s] = (a, b)
    spec.interval = interval
    return spec


def _block_rng(seed: int, regime: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, regime, block]))


def sample(spec: StructureSpec, regime: int, n: int, seed: int | None = None,
           max_blocks: int = 1000, min_rate: float = 0.01) -> Dataset:
    """Draw ``n`` selected rows for ``regime`` (0 is observational).

    Rows are generated in fixed-size blocks, each with its own stream derived
    from ``(seed, regime, block)``, until ``n`` rows are accepted.
    """
    g = spec.graph
    if not 0 <= regime <= g.n_regimes:
        raise ContractViolation(f"regime {regime} out of range 0..{g.n_regimes}")
    seed = spec.config.seed if seed is None else seed
    obs = g.observed()
    sel = g.ids(VertexKind.SELECTION)
    bs = spec.config.block_size
    kept: list[np.ndarray] = []
    total = accepted = 0
    block = 0
    while accepted < n:
        if block >= max_blocks or (block >= 5 and accepted < min_rate * total):
            raise DegenerateSelectionError(
                f"acceptance {accepted}/{total} below {min_rate:.0%} in regime {regime}")
        vals = _draw(spec, regime, bs, _block_rng(seed, regime, block))
        mask = np.ones(bs, dtype=bool)
        for s in sel:
            a, b = spec.interval.get(s, (-np.inf, np.inf))
            mask &= (vals[s] >= a) & (vals[s] <= b)
        rows = np.column_stack([vals[v] for v in obs])[mask] if obs else np.zeros((int(mask.sum()), 0))
        need = n - accepted
        if len(rows) >= need:
            # Count only the draws consumed up to the n-th accepted row.
            last = np.flatnonzero(mask)[need - 1]
            total += int(last) + 1
            rows = rows[:need]
        else:
            total += bs
        kept.append(rows)
        accepted += len(rows)
        block += 1
    data = np.vstack(kept) if kept else np.zeros((0, len(obs)))
    targets = tuple(g.name(x) for x in sorted(g.targets[regime - 1])) if regime else ()
    kind = g.kinds[regime - 1].value if regime else "none"
    return Dataset(regime, targets, [g.name(v) for v in obs], data, total, kind)


def sample_all(spec: StructureSpec, n: int, seed: int | None = None) -> list[Dataset]:
    return [sample(spec, k, n, seed) for k in range(spec.graph.n_regimes + 1)]


# file I/O ------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_datasets(datasets: Sequence[Dataset], out: str | Path, spec: StructureSpec | None = None) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for d in datasets:
        lines = [",".join(d.columns)] + [",".join(repr(float(x)) for x in row) for row in d.data]
        _atomic_write(out / f"regime_{d.regime}.csv", "\n".join(lines) + "\n")
        manifest = {"regime": d.regime, "targets": list(d.targets), "kind": d.kind, "n": int(len(d.data)),
                    "pre_selection_n": int(d.pre_selection_n)}
        _atomic_write(out / f"regime_{d.regime}.json", json.dumps(manifest, sort_keys=True))
    if spec is not None:
        _atomic_write(out / "structure.json", json.dumps(spec.to_dict(), sort_keys=True, default=float))


def read_datasets(path: str | Path) -> list[Dataset]:
    path = Path(path)
    out = []
    k = 0
    while (path / f"regime_{k}.csv").exists():
        man = json.loads((path / f"regime_{k}.json").read_text())
        with open(path / f"regime_{k}.csv") as fh:
            cols = fh.readline().strip().split(",")
        data = np.loadtxt(path / f"regime_{k}.csv", delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, len(cols)))
        out.append(Dataset(k, tuple(man["targets"]), cols, data, int(man["pre_selection_n"]), man["kind"]))
        k += 1
    if not out:
        raise ContractViolation(f"no regime_0.csv in {path}")
    return out
