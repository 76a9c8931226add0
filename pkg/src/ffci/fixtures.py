"""Named ground-truth structures used by tests, examples and the CLI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .graph import AugmentedDag, InterventionKind, augment, dag_from_edges


@dataclass(frozen=True)
class FixtureSpec:
    observed: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    latent: tuple[str, ...] = ()
    selection: tuple[str, ...] = ()
    note: str = ""


def _f(observed: str, edges: str, latent: str = "", selection: str = "", note: str = "") -> FixtureSpec:
    pairs = tuple(tuple(e.split(">")) for e in edges.split())
    return FixtureSpec(tuple(observed.split()), pairs, tuple(latent.split()), tuple(selection.split()), note)


# The six canonical pair structures, one per orientation-table row.
CANONICAL = {
    "direct_cause": _f("X1 X2", "X1>X2"),
    "latent_confounder": _f("X1 X2", "L>X1 L>X2", latent="L"),
    "latent_and_cause": _f("X1 X2", "X1>X2 L>X1 L>X2", latent="L"),
    "direct_selection": _f("X1 X2", "X1>S X2>S", selection="S"),
    "cause_child_selected": _f("X1 X2", "X1>X2 X2>S", selection="S"),
    "latent_double_selection": _f("X1 X2", "L>X1 L>X2 X1>S X2>S", latent="L", selection="S"),
}

CANONICAL_EDGES = {
    "direct_cause": "->",
    "latent_confounder": "<->",
    "latent_and_cause": "o->",
    "direct_selection": "--",
    "cause_child_selected": "-[]",
    "latent_double_selection": "[]-[]",
}

FIGURES = {
    # causal-link class
    "fig4a": _f("X1 X2 X3", "X1>X2 X2>X3"),
    # X1 -[] X3 <-> X2 with and without the direct link X1 -> X2
    "fig4b": _f("X1 X2 X3", "X1>X2 X1>X3 X3>S L>X3 L>X2", latent="L", selection="S"),
    "fig4c": _f("X1 X2 X3", "X1>X3 X3>S L>X3 L>X2", latent="L", selection="S"),
    # X1 -> X3 []- X2 with and without direct selection between X1 and X2
    "fig4d": _f("X1 X2 X3", "X1>X3 X2>X3 X3>S1 X1>S2 X2>S2", selection="S1 S2"),
    "fig4e": _f("X1 X2 X3", "X1>X3 X2>X3 X3>S1", selection="S1"),
    # selection child with an incoming arrowhead at X1
    "fig7a": _f("X1 X2", "X2>X1 X1>S", selection="S"),
    "fig7b": _f("X1 X2", "L>X1 L>X2 X1>S", latent="L", selection="S"),
    "fig7c": _f("X1 X2", "L>X1 L>X2 X1>S X1>X2", latent="L", selection="S"),
    # Type-II inducing node X3 between X1 and X2, without and with direct selection
    "fig8b": _f("X1 X2 X3", "L1>X1 L1>X3 X1>S1 X3>S1 L2>X3 L2>X2 X3>S2 X2>S2",
                latent="L1 L2", selection="S1 S2"),
    "fig8d": _f("X1 X2 X3", "L1>X1 L1>X3 X1>S1 X3>S1 L2>X3 L2>X2 X3>S2 X2>S2 X1>S3 X2>S3",
                latent="L1 L2", selection="S1 S2 S3"),
    # chain used throughout the CI examples
    "chain": _f("X1 X2 X3", "X1>X2 X2>X3"),
    "collider": _f("X1 X2 X3", "X1>X3 X2>X3"),
}

ALL = {**CANONICAL, **FIGURES}


def build(spec: FixtureSpec | str, targets: Iterable[str] | str = "all",
          kind: InterventionKind | str = InterventionKind.HARD) -> AugmentedDag:
    """Augmented DAG of a fixture with one singleton regime per named target."""
    if isinstance(spec, str):
        spec = ALL[spec]
    g = dag_from_edges(spec.observed, spec.edges, spec.latent, spec.selection)
    names = list(spec.observed) if targets == "all" else list(targets)
    return augment(g, [[g.id_of(n)] for n in names], [kind] * len(names))
