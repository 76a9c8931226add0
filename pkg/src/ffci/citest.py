"""Conditional-independence tests and the CI providers consumed by the discovery engine.

Two providers share one interface: :class:`OracleProvider` answers from a
ground-truth augmented DAG, :class:`DataProvider` from per-regime samples.
Both address variables by name, cache answers, and report every query to an
optional trace hook.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .graph import AugmentedDag, ContractViolation, VertexKind

if TYPE_CHECKING:
    from .simulator import Dataset

DEFAULT_ALPHA = 0.05
R_CLIP = 1.0 - 1e-7


class SingularityError(ValueError):
    """The conditioning columns are (numerically) linearly dependent or constant."""

    def __init__(self, columns: Sequence[int | str]):
        self.columns = list(columns)
        super().__init__(f"singular conditioning set; offending columns: {self.columns}")


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    independent: bool
    alpha: float
    effective_n: int


def _offending(corr: np.ndarray, cols: Sequence[int]) -> list[int]:
    """Smallest prefix of ``cols`` whose correlation block is singular, reported by its last member."""
    bad = [c for k, c in enumerate(cols) if not np.isfinite(corr[k, k]) or not np.all(np.isfinite(corr[k]))]
    if bad:
        return bad
    for k in range(1, len(cols) + 1):
        if np.linalg.matrix_rank(corr[:k, :k], tol=1e-10) < k:
            return [cols[k - 1]]
    return list(cols)


def partial_correlation(data: np.ndarray, x: int, y: int, cond: Sequence[int]) -> float:
    cols = [x, y, *cond]
    sub = np.asarray(data, dtype=np.float64)[:, cols]
    sd = sub.std(axis=0)
    if np.any(sd == 0):
        raise SingularityError([c for c, s in zip(cols, sd) if s == 0])
    corr = np.corrcoef(sub, rowvar=False)
    if cond:
        cc = corr[2:, 2:]
        if np.linalg.matrix_rank(cc, tol=1e-10) < len(cond):
            raise SingularityError(_offending(cc, list(cond)))
    try:
        prec = np.linalg.inv(corr)
    except np.linalg.LinAlgError:
        prec = np.linalg.pinv(corr)
    r = -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])
    return float(np.clip(r, -R_CLIP, R_CLIP))


def ci_test(data: np.ndarray, x: int, y: int, cond: Iterable[int] = (), alpha: float = DEFAULT_ALPHA) -> CiResult:
    """Fisher-z test of zero partial correlation between columns ``x`` and ``y`` given ``cond``.

    The column order is canonicalized, so swapping ``x`` and ``y`` (or
    reordering ``cond``) returns an identical result.
    """
    cond = sorted(set(cond))
    if x == y or x in cond or y in cond:
        raise ContractViolation("x, y and cond must be disjoint")
    x, y = min(x, y), max(x, y)
    n = int(np.asarray(data).shape[0])
    if n <= len(cond) + 3:
        raise ContractViolation(f"need more than {len(cond) + 3} rows, got {n}")
    r = partial_correlation(data, x, y, cond)
    stat = float(np.sqrt(n - len(cond) - 3) * abs(np.arctanh(r)))
    p = float(min(1.0, 2.0 * stats.norm.sf(stat)))
    return CiResult(stat, p, p > alpha, alpha, n)


def _stratum_codes(cond_data: np.ndarray, bins: int) -> np.ndarray:
    """Joint code of per-column quantile bins."""
    if cond_data.shape[1] == 0:
        return np.zeros(cond_data.shape[0], dtype=np.int64)
    codes = np.zeros(cond_data.shape[0], dtype=np.int64)
    for col in cond_data.T:
        edges = np.quantile(col, np.linspace(0, 1, bins + 1)[1:-1])
        codes = codes * bins + np.searchsorted(edges, col, side="right")
    return codes


def _stratified_ks(y: np.ndarray, psi: np.ndarray, strata: list[np.ndarray]) -> float:
    total = 0.0
    for idx in strata:
        a, b = y[idx][psi[idx] == 1], y[idx][psi[idx] == 0]
        if len(a) and len(b):
            total += len(idx) * stats.ks_2samp(a, b).statistic
    return total


def permutation_psi_test(y: np.ndarray, psi: np.ndarray, cond_data: np.ndarray, alpha: float = DEFAULT_ALPHA,
                         n_perm: int = 500, bins: int = 3, seed: int = 0) -> CiResult:
    """Two-sample test of ``y`` across ``psi`` groups within strata of a discretized ``cond`` grid.

    The statistic is the size-weighted sum of per-stratum Kolmogorov-Smirnov
    distances; the null distribution permutes ``psi`` within strata.
    """
    y = np.asarray(y, dtype=np.float64)
    psi = np.asarray(psi).astype(np.int64)
    codes = _stratum_codes(np.asarray(cond_data, dtype=np.float64).reshape(len(y), -1), bins)
    strata = [np.flatnonzero(codes == c) for c in np.unique(codes)]
    observed = _stratified_ks(y, psi, strata)
    rng = np.random.default_rng(seed)
    hits = 0
    perm = psi.copy()
    for _ in range(n_perm):
        for idx in strata:
            perm[idx] = rng.permutation(psi[idx])
        if _stratified_ks(y, perm, strata) >= observed - 1e-12:
            hits += 1
    p = (1 + hits) / (1 + n_perm)
    return CiResult(float(observed), float(p), p > alpha, alpha, len(y))


def pooled_sample(obs: "Dataset", intv: "Dataset") -> tuple[np.ndarray, list[str]]:
    """Stack observational and interventional rows and append the binary indicator column."""
    if list(obs.columns) != list(intv.columns):
        raise ContractViolation("observational and interventional datasets have different columns")
    if len(obs.data) == 0 or len(intv.data) == 0:
        raise ContractViolation("pooling needs rows from both regimes")
    psi = np.concatenate([np.zeros(len(obs.data)), np.ones(len(intv.data))])
    stacked = np.vstack([obs.data, intv.data])
    return np.column_stack([stacked, psi]), [*obs.columns, "psi"]


def psi_ci_test(obs: "Dataset", intv: "Dataset", target_col: int | str, cond: Iterable[int | str] = (),
                alpha: float = DEFAULT_ALPHA, method: str = "fisher", n_perm: int = 500, seed: int = 0) -> CiResult:
    """Test whether the distribution of ``target_col`` given ``cond`` is invariant across two regimes."""
    pooled, cols = pooled_sample(obs, intv)
    idx = lambda c: cols.index(c) if isinstance(c, str) else int(c)
    t = idx(target_col)
    cond_idx = [idx(c) for c in cond]
    psi_col = pooled.shape[1] - 1
    if method == "fisher":
        return ci_test(pooled, psi_col, t, cond_idx, alpha)
    if method == "permutation":
        return permutation_psi_test(pooled[:, t], pooled[:, psi_col], pooled[:, cond_idx], alpha, n_perm, seed=seed)
    raise ValueError(f"unknown method {method!r}")


# providers ---------------------------------------------------------------

TraceHook = Callable[[dict], None]


class CiProvider:
    """Shared caching and tracing for the two backends.

    Queries: ``ci(x, y, cond)`` between observed variables on observational
    data, and ``psi_ci(regime, x, cond)`` between regime ``regime``'s indicator
    and ``x`` on the pooled observational and interventional samples.
    """

    backend = "abstract"

    def __init__(self, variables: Sequence[str], targets: Sequence[Sequence[str]], alpha: float = DEFAULT_ALPHA):
        self.variables = list(variables)
        self.targets = [tuple(sorted(t)) for t in targets]
        self.alpha = alpha
        self._cache: dict[tuple, CiResult] = {}
        self._lock = threading.Lock()
        self.trace_hook: TraceHook | None = None
        self.n_evaluations = 0

    # regime bookkeeping
    def regime_of(self, var: str) -> int | None:
        """Regime whose target set is exactly ``{var}``."""
        for k, t in enumerate(self.targets, start=1):
            if t == (var,):
                return k
        return None

    def intervened(self) -> list[str]:
        return [v for v in self.variables if self.regime_of(v) is not None]

    def _lookup(self, key: tuple, compute: Callable[[], CiResult]) -> CiResult:
        res = self._cache.get(key)
        hit = res is not None
        if not hit:
            res = compute()
            with self._lock:
                res = self._cache.setdefault(key, res)
                self.n_evaluations += 1
        if self.trace_hook is not None:
            self.trace_hook({
                "event": "ci", "backend": self.backend, "query": list(key[:-1]) + [sorted(key[-1])],
                "independent": res.independent, "p_value": res.p_value, "cached": hit,
            })
        return res

    def ci(self, x: str, y: str, cond: Iterable[str] = ()) -> CiResult:
        cond = frozenset(cond)
        self._check(x, y, *cond)
        a, b = sorted((x, y))
        return self._lookup(("x", a, b, cond), lambda: self._ci(a, b, sorted(cond)))

    def psi_ci(self, regime: int, x: str, cond: Iterable[str] = ()) -> CiResult:
        cond = frozenset(cond)
        self._check(x, *cond)
        if not 1 <= regime <= len(self.targets):
            raise ContractViolation(f"regime {regime} out of range")
        return self._lookup(("psi", regime, x, cond), lambda: self._psi_ci(regime, x, sorted(cond)))

    def indep(self, x: str, y: str, cond: Iterable[str] = ()) -> bool:
        return self.ci(x, y, cond).independent

    def psi_indep(self, regime: int, x: str, cond: Iterable[str] = ()) -> bool:
        return self.psi_ci(regime, x, cond).independent

    def _check(self, *names: str) -> None:
        for n in names:
            if n not in self.variables:
                raise ContractViolation(f"unknown variable {n!r}")

    def _ci(self, x: str, y: str, cond: list[str]) -> CiResult:
        raise NotImplementedError

    def _psi_ci(self, regime: int, x: str, cond: list[str]) -> CiResult:
        raise NotImplementedError


class OracleProvider(CiProvider):
    """Answers by d-separation on a ground-truth augmented DAG."""

    backend = "oracle"

    def __init__(self, g: AugmentedDag, alpha: float = DEFAULT_ALPHA):
        names = [g.name(x) for x in g.observed()]
        super().__init__(names, [[g.name(x) for x in t] for t in g.targets], alpha)
        self.graph = g

    def _result(self, indep: bool) -> CiResult:
        return CiResult(0.0 if indep else float("inf"), 1.0 if indep else 0.0, indep, self.alpha, 0)

    def _ci(self, x: str, y: str, cond: list[str]) -> CiResult:
        from .oracle import CiQuery, oracle_ci

        g = self.graph
        q = CiQuery.of(g.id_of(x), g.id_of(y), [g.id_of(c) for c in cond])
        return self._result(oracle_ci(g, q))

    def _psi_ci(self, regime: int, x: str, cond: list[str]) -> CiResult:
        from .oracle import CiQuery, oracle_ci

        g = self.graph
        q = CiQuery.of(g.psi[regime - 1], g.id_of(x), [g.id_of(c) for c in cond])
        return self._result(oracle_ci(g, q))


class DataProvider(CiProvider):
    """Answers from samples; ``datasets[0]`` is observational and ``datasets[k]`` is regime ``k``."""

    backend = "data"

    def __init__(self, datasets: Sequence["Dataset"], alpha: float = DEFAULT_ALPHA, psi_method: str = "fisher",
                 n_perm: int = 500, seed: int = 0):
        if not datasets or datasets[0].targets:
            raise ContractViolation("regime 0 must be present and observational")
        cols = list(datasets[0].columns)
        for d in datasets:
            if list(d.columns) != cols:
                raise ContractViolation(f"regime {d.regime} has a different schema")
        super().__init__(cols, [list(d.targets) for d in datasets[1:]], alpha)
        self.datasets = list(datasets)
        self.psi_method = psi_method
        self.n_perm = n_perm
        self.seed = seed

    def _ci(self, x: str, y: str, cond: list[str]) -> CiResult:
        col = self.variables.index
        return ci_test(self.datasets[0].data, col(x), col(y), [col(c) for c in cond], self.alpha)

    def _psi_ci(self, regime: int, x: str, cond: list[str]) -> CiResult:
        return psi_ci_test(self.datasets[0], self.datasets[regime], x, cond, self.alpha,
                           self.psi_method, self.n_perm, self.seed)
