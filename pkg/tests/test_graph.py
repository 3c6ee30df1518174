import random

import pytest
from hypothesis import given, strategies as st

from dtadag.graph import (
    CLOSED_COLLIDER,
    NON_COLLIDER_IN_Z,
    CycleError,
    Dag,
    DagError,
    DagSyntaxError,
    NodeRole,
    all_paths,
    ancestors,
    backdoor_paths,
    d_separated,
    descendants,
    make_dag,
    minimal_adjustment_sets,
    open_paths,
    parse_dag,
)

from oracles import CANONICAL, all_queries, brute_d_separated, random_dag

REF = """
dag {
  D  [role=target, latent]   # the condition
  T1 [role=reference]
  T2 [role=index]
  D -> T1
  D -> T2
}
"""


class TestParse:
    def test_minimal(self):
        dag = parse_dag("dag { D [role=target, latent] T2 [role=index] D -> T2 }")
        assert dag.names == ("D", "T2")
        assert dag.edges == (("D", "T2"),)
        assert dag.node("D").role == NodeRole.TARGET
        assert not dag.node("D").observed
        assert dag.node("T2").observed

    def test_reference_error_structure(self):
        dag = parse_dag(REF)
        assert dag.names == ("D", "T1", "T2")
        assert set(dag.edges) == {("D", "T1"), ("D", "T2")}
        assert dag.node("T1").role == NodeRole.REFERENCE

    def test_defaults(self):
        dag = parse_dag("dag{A B A->B}")
        assert dag.node("A").role == NodeRole.OTHER and dag.node("A").observed

    def test_cycle(self):
        with pytest.raises(CycleError) as exc:
            parse_dag("dag { A [role=other] B [role=other] A -> B B -> A }")
        assert set(exc.value.cycle) == {"A", "B"}
        assert exc.value.cycle[0] == exc.value.cycle[-1]

    def test_longer_cycle_reported(self):
        with pytest.raises(CycleError) as exc:
            parse_dag("dag { A B C D A -> B B -> C C -> D C -> A }")
        assert exc.value.cycle == ("A", "B", "C", "A")

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("dag { A A }", "duplicate node"),
            ("dag { A A -> B }", "unknown endpoint"),
            ("dag { A B A -> B A -> B }", "duplicate edge"),
            ("dag { A A -> A }", "self-loop"),
        ],
    )
    def test_structural_errors(self, text, fragment):
        with pytest.raises(DagError, match=fragment):
            parse_dag(text)

    def test_syntax_error_position(self):
        with pytest.raises(DagSyntaxError) as exc:
            parse_dag("dag {\n  A [role=bogus]\n}")
        assert exc.value.line == 2
        assert exc.value.column == 11

    @pytest.mark.parametrize("text", ["graph { }", "dag { A -> }", "dag { A [latent", "dag { A } extra", "dag { A ; }"])
    def test_syntax_errors(self, text):
        with pytest.raises(DagSyntaxError):
            parse_dag(text)

    def test_edges_may_precede_declarations(self):
        dag = parse_dag("dag { A -> B A [role=target] B [role=index] }")
        assert dag.names == ("A", "B")

    def test_round_trip_canonical(self):
        for dag in CANONICAL.values():
            assert parse_dag(dag.serialize()) == dag

    @given(st.integers(0, 10_000), st.integers(1, 7))
    def test_round_trip_random(self, seed, n):
        rng = random.Random(seed)
        dag = random_dag(rng, n)
        assert parse_dag(dag.serialize()) == dag


class TestAncestry:
    def test_chain(self):
        dag = make_dag("A->B B->C")
        assert ancestors(dag, "C") == {"A", "B"}
        assert ancestors(dag, "A") == set()
        assert descendants(dag, "A") == {"B", "C"}

    def test_confounding(self):
        assert ancestors(CANONICAL["confounding"], "T2") == {"R", "D"}

    def test_unknown(self):
        with pytest.raises(DagError):
            ancestors(make_dag("A->B"), "Z")


class TestPaths:
    def test_reference_error(self):
        paths = all_paths(CANONICAL["reference_error"], "T1", "T2")
        assert [str(p) for p in paths] == ["T1 <- D -> T2"]

    def test_conditional_dependence(self):
        paths = all_paths(CANONICAL["conditional_dependence"], "T1", "T2")
        assert [str(p) for p in paths] == ["T1 <- D -> T2", "T1 <- R -> T2"]

    def test_disconnected(self):
        dag = make_dag("A->B", nodes=["C"])
        assert all_paths(dag, "A", "C") == []

    def test_blockers_recorded(self):
        dag = make_dag("A->B C->B B->E")
        (p,) = all_paths(dag, "A", "C")
        assert not p.is_open and p.blockers == (("B", CLOSED_COLLIDER),)
        (p,) = all_paths(dag, "A", "C", {"E"})
        assert p.is_open
        chain = make_dag("A->B B->C")
        (p,) = all_paths(chain, "A", "C", {"B"})
        assert p.blockers == (("B", NON_COLLIDER_IN_Z),)

    def test_simple_and_sorted(self):
        dag = random_dag(random.Random(3), 6, 0.7)
        paths = all_paths(dag, "A", "F")
        seqs = [p.nodes for p in paths]
        assert seqs == sorted(seqs)
        assert all(len(set(s)) == len(s) for s in seqs)

    def test_size_limit(self):
        dag = make_dag(nodes=[f"N{i}" for i in range(17)])
        with pytest.raises(DagError, match="limited"):
            all_paths(dag, "N0", "N1")


class TestDSeparation:
    def test_reference_error_ci(self):
        assert d_separated(CANONICAL["reference_error"], {"T1"}, {"T2"}, {"D"})
        assert not d_separated(CANONICAL["reference_error"], {"T1"}, {"T2"}, set())

    def test_conditional_dependence(self):
        assert not d_separated(CANONICAL["conditional_dependence"], {"T1"}, {"T2"}, {"D"})
        assert d_separated(CANONICAL["conditional_dependence"], {"T1"}, {"T2"}, {"D", "R"})

    def test_collider(self):
        dag = make_dag("A->B C->B")
        assert d_separated(dag, {"A"}, {"C"}, set())
        assert not d_separated(dag, {"A"}, {"C"}, {"B"})

    def test_errors(self):
        dag = make_dag("A->B B->C")
        with pytest.raises(DagError):
            d_separated(dag, {"A"}, {"A"}, set())
        with pytest.raises(DagError):
            d_separated(dag, {"A"}, {"C"}, {"A"})
        with pytest.raises(DagError):
            d_separated(dag, {"A"}, {"Q"}, set())
        with pytest.raises(DagError):
            d_separated(dag, set(), {"C"}, set())

    @given(st.integers(0, 100_000), st.integers(2, 6))
    def test_symmetry_and_oracle(self, seed, n):
        rng = random.Random(seed)
        dag = random_dag(rng, n, rng.uniform(0.2, 0.8))
        for x, y, Z in all_queries(dag):
            fwd = d_separated(dag, {x}, {y}, Z)
            assert fwd == d_separated(dag, {y}, {x}, Z)
            assert fwd == brute_d_separated(dag, x, y, Z)

    def test_set_valued(self):
        dag = make_dag("A->C B->C C->D")
        assert d_separated(dag, {"A"}, {"B"}, set())
        assert not d_separated(dag, {"A", "D"}, {"B"}, set())


class TestOpenAndBackdoor:
    def test_confounding(self):
        dag = CANONICAL["confounding"]
        assert [str(p) for p in open_paths(dag, "D", "T2")] == ["D <- R -> T2", "D -> T2"]
        assert [str(p) for p in open_paths(dag, "D", "T2", {"R"})] == ["D -> T2"]
        assert [str(p) for p in backdoor_paths(dag, "D", "T2")] == ["D <- R -> T2"]

    def test_chain_blocked(self):
        assert open_paths(make_dag("A->B B->C"), "A", "C", {"B"}) == []

    def test_reference_backdoor(self):
        assert [str(p) for p in backdoor_paths(CANONICAL["reference_error"], "T1", "T2")] == ["T1 <- D -> T2"]

    def test_no_backdoor(self):
        assert backdoor_paths(make_dag("D->T2"), "D", "T2") == []

    @given(st.integers(0, 100_000), st.integers(2, 6))
    def test_open_iff_not_separated(self, seed, n):
        rng = random.Random(seed)
        dag = random_dag(rng, n)
        for x, y, Z in all_queries(dag):
            assert (open_paths(dag, x, y, Z) == []) == d_separated(dag, {x}, {y}, Z)


class TestAdjustment:
    def test_confounding_observed(self):
        assert minimal_adjustment_sets(CANONICAL["confounding"], "D", "T2") == [frozenset({"R"})]

    def test_nothing_to_block(self):
        assert minimal_adjustment_sets(make_dag("D->T2"), "D", "T2") == [frozenset()]

    def test_latent_confounder(self):
        dag = make_dag("R->D R->T2 D->T2", latent=["R"])
        assert minimal_adjustment_sets(dag, "D", "T2") is None

    def test_two_routes(self):
        # R1 -> M -> D and a second confounder; {M} or {R1} block the first route
        dag = make_dag("R1->M M->D R1->T R2->D R2->T D->T")
        sets = minimal_adjustment_sets(dag, "D", "T")
        assert sets == [frozenset({"M", "R2"}), frozenset({"R1", "R2"})]

    def test_descendants_of_x_excluded(self):
        dag = make_dag("R->D R->T D->T D->K")
        assert all("K" not in s for s in minimal_adjustment_sets(dag, "D", "T"))

    @given(st.integers(0, 100_000), st.integers(3, 6))
    def test_minimality(self, seed, n):
        rng = random.Random(seed)
        dag = random_dag(rng, n, 0.6)
        x, y = rng.sample(dag.names, 2)
        sets = minimal_adjustment_sets(dag, x, y)
        if sets is None:
            return
        for s in sets:
            assert backdoor_paths(dag, x, y, s) == []
            for v in s:
                assert backdoor_paths(dag, x, y, s - {v}) != []


def test_role_lookup_and_topo():
    dag = make_dag("B->A C->A", roles={"A": "index"})
    assert dag.with_role(NodeRole.INDEX) == ["A"]
    order = dag.topological_order
    assert order.index("B") < order.index("A") and order.index("C") < order.index("A")


def test_dag_is_immutable():
    dag = make_dag("A->B")
    with pytest.raises(Exception):
        dag.nodes = ()


def test_direct_constructor_validates():
    with pytest.raises(CycleError):
        make_dag("A->B B->C C->A")
    with pytest.raises(DagError):
        Dag((), (("A", "B"),))
