"""Command-line entry point: ``ffci <command> ...``.

Exit codes: 0 on success, 2 on a contract violation (bad inputs), 3 when
selection leaves too few samples.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .citest import DEFAULT_ALPHA, DataProvider, OracleProvider, ci_test
from .engine import Options, dump_trace, edge_list, f_fci
from .experiment import ExperimentPlan, run_experiment
from .graph import (
    AugmentedDag, ContractViolation, GraphError, MixedGraph, VertexKind, augment, graph_from_dict, to_dot,
)
from .metrics import evaluate
from .oracle import CiQuery, fi_markov_equivalent, oracle_ci
from .simulator import (
    ConfigError, DegenerateSelectionError, SimConfig, random_structure, read_datasets, sample_all,
    write_datasets,
)

EXIT_OK, EXIT_CONTRACT, EXIT_DEGENERATE = 0, 2, 3


def _read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ContractViolation(f"cannot read JSON from {path}: {exc}") from None


def _write(path: str | Path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def read_targets(path: str | Path | None) -> tuple[list[list[str]], list[str]] | None:
    """Target file: a list of name lists, or ``{"targets": [...], "kinds": [...]}``."""
    if path is None:
        return None
    d = _read_json(path)
    if isinstance(d, dict):
        targets, kinds = d.get("targets", []), d.get("kinds")
    else:
        targets, kinds = d, None
    if not isinstance(targets, list) or not all(isinstance(t, list) and t for t in targets):
        raise ContractViolation("targets must be a list of non-empty name lists")
    return [[str(x) for x in t] for t in targets], list(kinds) if kinds else ["hard"] * len(targets)


def load_graph(path: str | Path) -> MixedGraph:
    d = _read_json(path)
    if isinstance(d, dict) and "graph" in d and "vertices" not in d:
        d = d["graph"]
    try:
        return graph_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ContractViolation(f"{path} is not a graph file: {exc}") from None


def load_truth(path: str | Path, targets_path: str | Path | None = None) -> AugmentedDag:
    """Augmented DAG from a graph or structure file, augmenting a plain DAG with the given targets."""
    g = load_graph(path)
    tk = read_targets(targets_path)
    if isinstance(g, AugmentedDag):
        if tk is not None:
            have = [sorted(g.name(x) for x in t) for t in g.targets]
            if have != [sorted(t) for t in tk[0]]:
                raise ContractViolation(f"targets {tk[0]} differ from those stored in {path}")
        return g
    if g.ids(VertexKind.INDICATOR, VertexKind.NOISE):
        raise ContractViolation(f"{path} has indicator or noise vertices but no target list")
    targets, kinds = tk if tk is not None else ([], [])
    try:
        return augment(g, [[g.id_of(x) for x in t] for t in targets], kinds)
    except GraphError as exc:
        raise ContractViolation(str(exc)) from None


def _sim_config(path: str) -> SimConfig:
    d = _read_json(path)
    preset = d.pop("preset", None)
    if preset == "linear_gaussian":
        d = {"mechanisms": ["linear"], "noise": "gaussian", **d}
    elif preset is not None:
        raise ContractViolation(f"unknown preset {preset!r}")
    try:
        return SimConfig.from_dict(d)
    except TypeError as exc:
        raise ContractViolation(f"bad simulation config: {exc}") from None


# commands ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _sim_config(args.config)
    spec = random_structure(cfg)
    n = args.n if args.n is not None else cfg.samples_per_regime
    datasets = sample_all(spec, n)
    write_datasets(datasets, args.out, spec)
    g = spec.graph
    targets = {"targets": [[g.name(x) for x in sorted(t)] for t in g.targets], "kinds": [k.value for k in g.kinds]}
    _write(Path(args.out) / "targets.json", json.dumps(targets, sort_keys=True))
    print(f"wrote {len(datasets)} regimes of {n} rows to {args.out}")
    return EXIT_OK


def _options(args) -> Options:
    return Options(refine=not args.no_refine)


def _finish_discovery(args, g: MixedGraph, trace: list[dict]) -> int:
    _write(args.out, g.to_json())
    if args.trace:
        _write(args.trace, dump_trace(trace))
    for line in edge_list(g):
        print(line)
    return EXIT_OK


def cmd_discover(args) -> int:
    datasets = read_datasets(args.data)
    tk = read_targets(args.targets)
    if tk is not None and [sorted(t) for t in tk[0]] != [sorted(d.targets) for d in datasets[1:]]:
        raise ContractViolation("target file does not match the regimes found in the data directory")
    provider = DataProvider(datasets, args.alpha, psi_method=args.psi_method, seed=args.seed)
    g, trace = f_fci(provider, _options(args))
    return _finish_discovery(args, g, trace)


def cmd_oracle_discover(args) -> int:
    truth = load_truth(args.truth, args.targets)
    g, trace = f_fci(OracleProvider(truth), _options(args))
    return _finish_discovery(args, g, trace)


def cmd_equiv(args) -> int:
    g1, g2 = load_truth(args.a, args.targets), load_truth(args.b, args.targets)
    cert = fi_markov_equivalent(g1, g2)
    print("equivalent" if cert.verdict else f"not equivalent ({cert.witness})")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = load_graph(args.pred)
    truth = load_truth(args.truth, args.targets)
    rep = evaluate(pred, truth)
    print(json.dumps(rep.as_row(), sort_keys=True))
    if args.confusion:
        print(json.dumps(rep.confusion, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    d = _read_json(args.plan)
    if args.out:
        d["out"] = args.out
    res = run_experiment(ExperimentPlan.from_dict(d))
    print(f"computed {len(res.computed_cells)} cell(s); summary at {res.summary_path}")
    return EXIT_OK


def cmd_export_dot(args) -> int:
    _write(args.out, to_dot(load_graph(args.graph)))
    return EXIT_OK


def _mentions(rec: dict, a: str, b: str) -> bool:
    text = json.dumps(rec)
    return f'"{a}"' in text and f'"{b}"' in text


def cmd_explain(args) -> int:
    pair = [x.strip() for x in args.pair.split(",")]
    if len(pair) != 2:
        raise ContractViolation("--pair needs two comma-separated names")
    try:
        lines = Path(args.trace).read_text().splitlines()
    except OSError as exc:
        raise ContractViolation(str(exc)) from None
    for line in lines:
        rec = json.loads(line)
        if _mentions(rec, *pair):
            print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def _names(s: str | None) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()] if s else []


def cmd_query(args) -> int:
    g = load_truth(args.truth, args.targets)
    q = CiQuery.of(g.id_of(args.x), g.id_of(args.y), [g.id_of(c) for c in _names(args.given)])
    print("independent" if oracle_ci(g, q) else "dependent")
    return EXIT_OK


def cmd_citest(args) -> int:
    all_ds = read_datasets(args.data)
    if not 0 <= args.regime < len(all_ds):
        raise ContractViolation(f"regime {args.regime} not in {args.data}")
    ds = all_ds[args.regime]
    col = ds.columns.index
    try:
        r = ci_test(ds.data, col(args.x), col(args.y), [col(c) for c in _names(args.given)], args.alpha)
    except ValueError as exc:
        raise ContractViolation(str(exc)) from None
    print(json.dumps({"statistic": r.statistic, "p_value": r.p_value, "independent": r.independent}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffci", description="Causal discovery under interventions and selection bias.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a random structure and its regime datasets")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=None, help="rows per regime (default: samples_per_regime)")
    s.set_defaults(func=cmd_simulate)

    def discovery_flags(s):
        s.add_argument("--targets", default=None)
        s.add_argument("--out", required=True)
        s.add_argument("--trace", default=None, help="write the JSONL trace here")
        s.add_argument("--no-refine", action="store_true", help="skip the Type-I refinement step")

    s = sub.add_parser("discover", help="learn a graph from a data directory")
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    s.add_argument("--psi-method", choices=("fisher", "permutation"), default="fisher")
    s.add_argument("--seed", type=int, default=0)
    discovery_flags(s)
    s.set_defaults(func=cmd_discover)

    s = sub.add_parser("oracle-discover", help="learn a graph from oracle CI answers on a known truth")
    s.add_argument("--truth", required=True)
    discovery_flags(s)
    s.set_defaults(func=cmd_oracle_discover)

    s = sub.add_parser("equiv", help="FI-Markov equivalence of two augmented DAGs")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--targets", default=None)
    s.set_defaults(func=cmd_equiv)

    s = sub.add_parser("eval", help="score a learned graph against the truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--targets", default=None)
    s.add_argument("--confusion", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("run", help="run an experiment plan")
    s.add_argument("--plan", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("export-dot", help="render a graph file as DOT")
    s.add_argument("graph")
    s.add_argument("out")
    s.set_defaults(func=cmd_export_dot)

    s = sub.add_parser("explain", help="trace records involving a pair")
    s.add_argument("trace")
    s.add_argument("--pair", required=True)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("query", help="oracle CI query on a truth graph")
    s.add_argument("--truth", required=True)
    s.add_argument("--targets", default=None)
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--given", default="")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("citest", help="Fisher-z CI test on one regime of a data directory")
    s.add_argument("--data", required=True)
    s.add_argument("--regime", type=int, default=0)
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--given", default="")
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    s.set_defaults(func=cmd_citest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateSelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ContractViolation, ConfigError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT

if __name__ == "__main__":
    sys.exit(main())
