import itertools

import numpy as np
import pytest

from ffci.fixtures import FixtureSpec, build
from ffci.graph import ContractViolation, GraphClass, GraphError, Mark, VertexKind, augment, dag_from_edges, validate
from ffci.oracle import (
    CiQuery, FiSignature, compare_signatures, discriminating_paths, fi_markov_equivalent, mag_of, markov_difference,
    oracle_ci, v_structures,
)
from ffci.separation import d_separated

from oracles import fingerprint, random_latent_selection_dag, three_variable_family


def q(g, lhs, rhs, cond=()):
    return CiQuery.of(g.id_of(lhs), g.id_of(rhs), [g.id_of(c) for c in cond])


def edge_of(m, a, b):
    e = m.edge(m.id_of(a), m.id_of(b))
    return None if e is None else (e.mark_at(m.id_of(a)), e.mark_at(m.id_of(b)))


# oracle CI ------------------------------------------------------------------


def test_indicator_propagates_along_chain():
    g = build(FixtureSpec(("X1", "X2"), (("X1", "X2"),)), targets=["X1"])
    assert not oracle_ci(g, q(g, "psi_X1", "X2"))
    assert oracle_ci(g, q(g, "psi_X1", "X2", ["X1"]))


def test_symmetric_selection_patterns():
    g = build("direct_selection")
    assert oracle_ci(g, q(g, "psi_X1", "X2", ["X1"]))
    assert oracle_ci(g, q(g, "psi_X2", "X1", ["X2"]))
    assert not oracle_ci(g, q(g, "psi_X1", "X2"))
    assert not oracle_ci(g, q(g, "psi_X2", "X1"))


def test_disconnected_vertices_always_independent():
    g = augment(dag_from_edges(["X1", "X2", "X3"], []))
    for c in ([], ["X3"]):
        assert oracle_ci(g, q(g, "X1", "X2", c))


def test_malformed_queries():
    g = build("chain")
    with pytest.raises(GraphError):
        oracle_ci(g, q(g, "X1", "X2", ["X1"]))
    with pytest.raises(GraphError):
        oracle_ci(g, CiQuery.of(g.id_of("X1"), g.id_of("eps_X2")))
    with pytest.raises(GraphError):
        oracle_ci(g, CiQuery.of([g.id_of("psi_X1"), g.id_of("X1")], g.id_of("X2")))


# MAG construction -----------------------------------------------------------


@pytest.mark.parametrize("name, marks", [
    ("direct_cause", (Mark.TAIL, Mark.ARROW)),
    ("latent_confounder", (Mark.ARROW, Mark.ARROW)),
    ("direct_selection", (Mark.TAIL, Mark.TAIL)),
    ("cause_child_selected", (Mark.TAIL, Mark.TAIL)),
    ("latent_double_selection", (Mark.TAIL, Mark.TAIL)),
])
def test_mag_marks_on_canonical_pairs(name, marks):
    m = mag_of(build(name))
    assert edge_of(m, "X1", "X2") == marks
    assert validate(m, GraphClass.MAG).ok


def test_mag_without_edge():
    m = mag_of(build("fig7a"))
    assert edge_of(m, "X2", "X1") == (Mark.TAIL, Mark.TAIL)
    m = mag_of(augment(dag_from_edges(["X1", "X2"], [])))
    assert not m.edges


@pytest.mark.parametrize("seed", range(40))
def test_mag_is_valid_and_adjacency_matches_separation(seed):
    rng = np.random.default_rng(5000 + seed)
    g = augment(random_latent_selection_dag(rng, int(rng.integers(2, 6)), int(rng.integers(0, 3)),
                                            int(rng.integers(0, 3))))
    m = mag_of(g)
    assert validate(m, GraphClass.MAG).ok
    sel = set(g.ids(VertexKind.SELECTION))
    obs = g.observed()
    for a, b in itertools.combinations(obs, 2):
        rest = [x for x in obs if x not in (a, b)]
        separable = any(d_separated(g, a, b, set(z) | sel)
                        for r in range(len(rest) + 1) for z in itertools.combinations(rest, r))
        assert m.adjacent(m.id_of(g.name(a)), m.id_of(g.name(b))) == (not separable)


def test_mag_with_indicators_is_valid():
    for name in ("fig4b", "fig4d", "fig8b", "fig8d", "latent_double_selection"):
        m = mag_of(build(name), include_indicators=True)
        assert validate(m, GraphClass.MAG).ok
        assert m.ids(VertexKind.INDICATOR)


# equivalence features ---------------------------------------------------------


def test_v_structures_and_discriminating_paths():
    m = mag_of(build("collider"))
    x1, x2, x3 = (m.id_of(n) for n in ("X1", "X2", "X3"))
    assert v_structures(m) == {(x1, x3, x2)}
    assert discriminating_paths(m) == []
    # X1 <-> X2 <-> X3 with X2 -> X4, X3 -> X4 and X1 not adjacent to X4 discriminates X3.
    g = dag_from_edges(["X1", "X2", "X3", "X4"], [("L1", "X1"), ("L1", "X2"), ("L2", "X2"), ("L2", "X3"),
                                                  ("X2", "X4"), ("X3", "X4")], latent=["L1", "L2"])
    m = mag_of(augment(g))
    path = tuple(m.id_of(n) for n in ("X1", "X2", "X3", "X4"))
    assert path in discriminating_paths(m)


def test_markov_difference_witness_order():
    a = mag_of(build("chain"))
    b = mag_of(augment(dag_from_edges(["X1", "X2", "X3"], [("X1", "X2"), ("X3", "X2")])))
    assert markov_difference(a, b) == "v-structure: X1->X2<-X3"
    c = mag_of(augment(dag_from_edges(["X1", "X2", "X3"], [("X1", "X2")])))
    assert markov_difference(a, c) == "skeleton: X2-X3"
    assert markov_difference(a, a) is None


# FI-Markov equivalence ----------------------------------------------------------


def test_reflexive_on_fixtures():
    for name in ("fig4a", "fig4b", "fig8b", "latent_double_selection"):
        assert fi_markov_equivalent(build(name), build(name)).verdict


def test_fig4b_and_fig4c_share_class_when_all_are_intervened():
    # The extra X1 -> X2 leaves every oracle answer unchanged, so the classes coincide.
    g1, g2 = build("fig4b"), build("fig4c")
    assert fingerprint(g1) == fingerprint(g2)
    assert fi_markov_equivalent(g1, g2).verdict


def test_fig4b_and_fig4c_without_intervening_the_inducing_node():
    g1, g2 = build("fig4b", targets=["X1", "X2"]), build("fig4c", targets=["X1", "X2"])
    assert fingerprint(g1) == fingerprint(g2)
    assert fi_markov_equivalent(g1, g2).verdict


def test_intervened_mark_witness():
    # Same MAG skeleton and no v-structures; only the orientation of X1-X2 differs.
    g1 = build(FixtureSpec(("X1", "X2"), (("X1", "X2"),)))
    g2 = build(FixtureSpec(("X1", "X2"), (("X2", "X1"),)))
    cert = fi_markov_equivalent(g1, g2)
    assert not cert.verdict and cert.witness is not None
    unintervened = [build(FixtureSpec(("X1", "X2"), e), targets=[]) for e in ((("X1", "X2"),), (("X2", "X1"),))]
    assert fi_markov_equivalent(*unintervened).verdict


def test_mismatched_targets_rejected():
    with pytest.raises(ContractViolation):
        fi_markov_equivalent(build("chain"), build("chain", targets=["X1"]))


def test_negative_certificate_requires_witness():
    from ffci.oracle import EquivalenceCertificate

    with pytest.raises(ValueError):
        EquivalenceCertificate(False)


@pytest.fixture(scope="module")
def family():
    graphs = three_variable_family()
    rng = np.random.default_rng(7)
    pick = sorted(rng.choice(len(graphs), size=300, replace=False))
    graphs = [graphs[k] for k in pick]
    return graphs, [FiSignature.of(g) for g in graphs], [fingerprint(g) for g in graphs]


def test_equivalence_matches_fingerprints_on_sample(family):
    graphs, sigs, fps = family
    for a, b in itertools.combinations(range(len(graphs)), 2):
        assert compare_signatures(sigs[a], sigs[b]).verdict == (fps[a] == fps[b])


def test_equivalence_relation_properties(family):
    _, sigs, _ = family
    n = len(sigs)
    e = np.array([[compare_signatures(sigs[a], sigs[b]).verdict for b in range(n)] for a in range(n)])
    assert e.diagonal().all()
    assert (e == e.T).all()
    two_step = (e.astype(int) @ e.astype(int)) > 0
    assert not (two_step & ~e).any()


def test_equivalent_pairs_agree_on_larger_fixtures():
    # Reversing an edge between unintervened variables keeps the class and every oracle answer.
    base = [("X1", "X2"), ("X2", "X3"), ("X3", "X4"), ("X4", "X5")]
    verdicts = []
    for flip in range(5):
        edges = list(base)
        for k in range(flip):
            edges[k] = (edges[k][1], edges[k][0])
        g1 = build(FixtureSpec(("X1", "X2", "X3", "X4", "X5"), tuple(base)), targets=["X5"])
        g2 = build(FixtureSpec(("X1", "X2", "X3", "X4", "X5"), tuple(edges)), targets=["X5"])
        cert = fi_markov_equivalent(g1, g2)
        verdicts.append(cert.verdict)
        if cert.verdict:
            assert fingerprint(g1, 3) == fingerprint(g2, 3)
    # Reversing X4 -> X5 creates a collider at the intervened X5 with its indicator.
    assert verdicts == [True, True, True, True, False]
