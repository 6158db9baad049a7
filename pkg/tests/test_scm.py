import random

import pytest

from causalchain.errors import (
    CycleDetected,
    DuplicateId,
    InvalidChain,
    MultipleSinks,
    UnknownParent,
)
from causalchain.scm import (
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    VariableId,
    assemble_steps,
    build_graph,
    check_structural_validity,
    find_sink,
    validate_chain,
)
from causalchain.synth import random_document


def u(i):
    return VariableId.exogenous(i)


def v(i):
    return VariableId.endogenous(i)


def chain(parent_lists, n_exo=None, order=None):
    """Small chain builder: parent_lists[t] are the parents of v(t+1)."""
    if n_exo is None:
        n_exo = max(
            [p.index for parents in parent_lists for p in parents if p.kind.value == "u"],
            default=1,
        )
    exogenous = tuple(
        ExogenousVariable(u(k), f"evidence {k}") for k in range(1, n_exo + 1)
    )
    endogenous = [
        EndogenousVariable(v(t + 1), tuple(parents), f"rule {t + 1}", f"derived {t + 1}")
        for t, parents in enumerate(parent_lists)
    ]
    if order is not None:
        endogenous = [endogenous[i] for i in order]
    return ReasoningChain(
        claim="test claim",
        exogenous=exogenous,
        endogenous=tuple(endogenous),
        verdict=Label.SUPPORTED,
    )


class TestBuildGraph:
    def test_minimal_chain(self):
        g = build_graph(chain([[u(1)]]))
        assert len(g.nodes) == 2
        assert len(g.edges) == 1

    def test_hand_enumerated_edges_and_topo(self):
        g = build_graph(chain([[u(1), u(2)], [v(1), u(2)]], n_exo=2))
        assert len(g.nodes) == 4
        assert g.edges == frozenset(
            {(u(1), v(1)), (u(2), v(1)), (v(1), v(2)), (u(2), v(2))}
        )
        assert [str(n) for n in g.topo_order] == ["u1", "u2", "v1", "v2"]

    def test_cycle_detected(self):
        with pytest.raises(CycleDetected):
            build_graph(chain([[v(2)], [v(1)]]))

    def test_unknown_parent(self):
        with pytest.raises(UnknownParent):
            build_graph(chain([[u(9)]], n_exo=1))

    def test_duplicate_parent(self):
        bad = chain([[u(1)]])
        bad = ReasoningChain(
            claim=bad.claim,
            exogenous=bad.exogenous,
            endogenous=(
                EndogenousVariable(v(1), (u(1), u(1)), "rule", "derived"),
            ),
            verdict=bad.verdict,
        )
        with pytest.raises(DuplicateId):
            build_graph(bad)

    def test_topo_order_respects_edges(self):
        rng = random.Random(5)
        for serial in range(50):
            doc = random_document(rng, serial=serial)
            g = build_graph(doc.chain)
            position = {node: i for i, node in enumerate(g.topo_order)}
            assert all(position[a] < position[b] for a, b in g.edges)


class TestStructuralValidity:
    def test_in_order_derivation_is_valid(self):
        report = check_structural_validity(chain([[u(1)], [v(1), u(2)]], n_exo=2))
        assert report.valid
        assert report.violations == ()

    def test_forward_reference_is_invalid(self):
        report = check_structural_validity(chain([[v(2)], [u(1)]]))
        assert not report.valid
        assert report.violations[0].step_index == 0
        assert report.violations[0].missing_parents == (v(2),)
        assert report.violations[0].code == "missing_parent"

    def test_generator_chains_are_valid_in_topological_order(self):
        rng = random.Random(11)
        for serial in range(1000):
            doc = random_document(rng, serial=serial)
            assert check_structural_validity(doc.chain).valid

    def test_valid_chain_builds_graph(self):
        rng = random.Random(13)
        for serial in range(100):
            doc = random_document(rng, serial=serial)
            if check_structural_validity(doc.chain).valid:
                build_graph(doc.chain)


class TestAssembleSteps:
    def test_single_step(self):
        c = chain([[u(1)]])
        steps = assemble_steps(c)
        assert len(steps) == 1
        assert steps[0].state_tau == {u(1)}
        assert steps[0].action_alpha is c.endogenous[0]
        assert steps[0].observation_o == "derived 1"

    def test_two_step_state_expansion(self):
        steps = assemble_steps(chain([[u(1)], [v(1), u(2)]], n_exo=2))
        assert len(steps) == 2
        assert steps[1].state_tau == {u(1), u(2), v(1)}

    def test_invalid_chain_rejected(self):
        with pytest.raises(InvalidChain):
            assemble_steps(chain([[v(2)], [u(1)]]))

    def test_states_cover_all_ids(self):
        rng = random.Random(3)
        for serial in range(100):
            c = random_document(rng, serial=serial).chain
            steps = assemble_steps(c)
            assert len(steps) == len(c.endogenous)
            covered = set()
            for step in steps:
                covered |= step.state_tau
            covered.add(steps[-1].action_alpha.id)
            assert covered == set(c.variable_ids())


class TestFindSink:
    def test_minimal(self):
        assert find_sink(build_graph(chain([[u(1)]]))) == v(1)

    def test_multiple_sinks(self):
        with pytest.raises(MultipleSinks):
            find_sink(build_graph(chain([[u(1)], [u(1)]])))

    def test_chained_sink(self):
        g = build_graph(chain([[u(1), u(2)], [v(1)]], n_exo=2))
        assert find_sink(g) == v(2)


class TestValidateChain:
    def test_accepts_generator_output(self):
        rng = random.Random(23)
        for serial in range(200):
            validate_chain(random_document(rng, serial=serial).chain)

    def test_rejects_gapped_indices(self):
        bad = ReasoningChain(
            claim="x",
            exogenous=(ExogenousVariable(u(1), "e"),),
            endogenous=(EndogenousVariable(v(2), (u(1),), "r", "d"),),
            verdict=Label.SUPPORTED,
        )
        with pytest.raises(Exception):
            validate_chain(bad)

    def test_unreferenced_evidence_is_legal(self):
        validate_chain(chain([[u(1)]], n_exo=3))
