"""Structured reasoning chains as causal models over a DAG.

A chain derives a verdict for a claim from evidence statements (exogenous
variables, the roots) through derived conclusions (endogenous variables,
each produced from a declared parent set by a natural-language rule). The
operations here build the dependency graph, check the insertion-order
validity gate, decompose a chain into sequential reasoning steps, and
locate the terminal conclusion.

All types are immutable; all operations are pure functions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .errors import (
    BadLabel,
    CycleDetected,
    DuplicateId,
    InvalidChain,
    MalformedChain,
    MultipleSinks,
    NoSink,
    UnknownParent,
)


class VarKind(enum.Enum):
    EXOGENOUS = "u"
    ENDOGENOUS = "v"


class Label(enum.Enum):
    """Two-class verdict; parsed case-insensitively, rendered capitalized."""

    SUPPORTED = "Supported"
    REFUTED = "Refuted"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text) -> "Label":
        if isinstance(text, Label):
            return text
        if not isinstance(text, str):
            raise BadLabel(text)
        lowered = text.strip().lower()
        for member in cls:
            if member.value.lower() == lowered:
                return member
        raise BadLabel(text)


@dataclass(frozen=True)
class VariableId:
    """Identifier like ``u3`` (evidence) or ``v2`` (derived conclusion)."""

    kind: VarKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    @classmethod
    def exogenous(cls, index: int) -> "VariableId":
        return cls(VarKind.EXOGENOUS, index)

    @classmethod
    def endogenous(cls, index: int) -> "VariableId":
        return cls(VarKind.ENDOGENOUS, index)

    @classmethod
    def parse(cls, text: str) -> "VariableId":
        if not isinstance(text, str) or len(text) < 2 or text[0] not in ("u", "v"):
            raise MalformedChain(f"not a variable id: {text!r}")
        digits = text[1:]
        if not digits.isdigit() or digits[0] == "0":
            raise MalformedChain(f"not a variable id: {text!r}")
        kind = VarKind.EXOGENOUS if text[0] == "u" else VarKind.ENDOGENOUS
        return cls(kind, int(digits))

    def sort_key(self) -> tuple[int, int]:
        # exogenous before endogenous, then by index
        return (0 if self.kind is VarKind.EXOGENOUS else 1, self.index)


@dataclass(frozen=True)
class ExogenousVariable:
    """Evidence statement; a root node with no parents."""

    id: VariableId
    text: str
    source_doc: Optional[int] = None


@dataclass(frozen=True)
class EndogenousVariable:
    """Derived conclusion plus the rule that produces it from its parents."""

    id: VariableId
    parents: tuple[VariableId, ...]
    rule_text: str
    derived_text: str


@dataclass(frozen=True)
class ReasoningChain:
    """A claim, its evidence, its derivations in generation order, and a verdict."""

    claim: str
    exogenous: tuple[ExogenousVariable, ...]
    endogenous: tuple[EndogenousVariable, ...]
    verdict: Label

    def variable_ids(self) -> tuple[VariableId, ...]:
        return tuple(x.id for x in self.exogenous) + tuple(v.id for v in self.endogenous)


@dataclass(frozen=True)
class ReasoningStep:
    """One derivation: state of known variables, the action, its conclusion text."""

    state_tau: frozenset[VariableId]
    action_alpha: EndogenousVariable
    observation_o: str


@dataclass(frozen=True)
class StepViolation:
    step_index: int
    missing_parents: tuple[VariableId, ...]
    code: str = "missing_parent"

    def to_json_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "missing_parents": [str(p) for p in self.missing_parents],
            "code": self.code,
        }


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: tuple[StepViolation, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [v.to_json_dict() for v in self.violations],
        }


@dataclass(frozen=True)
class CausalGraph:
    """Dependency DAG over all chain variables, with a cached topological order."""

    nodes: frozenset[VariableId]
    edges: frozenset[tuple[VariableId, VariableId]]
    topo_order: tuple[VariableId, ...]

    def out_degree(self, node: VariableId) -> int:
        return sum(1 for parent, _ in self.edges if parent == node)

    def in_degree(self, node: VariableId) -> int:
        return sum(1 for _, child in self.edges if child == node)


def validate_chain(chain: ReasoningChain) -> None:
    """Enforce well-formedness; raises and never returns a verdict on order validity.

    Checks ids (unique, consecutive from 1, exogenous in ascending order),
    parent declarations, duplicate parents, non-empty texts and parent sets,
    and the verdict type. Insertion-order validity is deliberately not
    checked here; see check_structural_validity.
    """
    if not isinstance(chain.claim, str):
        raise MalformedChain("claim must be a string")
    if not chain.exogenous:
        raise MalformedChain("chain declares no evidence variables")
    if not chain.endogenous:
        raise MalformedChain("chain declares no derived variables")
    if not isinstance(chain.verdict, Label):
        raise BadLabel(chain.verdict)

    seen: set[VariableId] = set()
    for pos, exo in enumerate(chain.exogenous, start=1):
        if exo.id.kind is not VarKind.EXOGENOUS:
            raise MalformedChain(f"{exo.id} listed among evidence variables")
        if exo.id.index != pos:
            raise MalformedChain(
                f"evidence ids must be u1..u{len(chain.exogenous)} in order, got {exo.id}"
            )
        if exo.id in seen:
            raise DuplicateId(exo.id)
        seen.add(exo.id)
        if not exo.text:
            raise MalformedChain(f"{exo.id} has empty text")
        if exo.source_doc is not None and (
            not isinstance(exo.source_doc, int) or exo.source_doc < 0
        ):
            raise MalformedChain(f"{exo.id} has invalid source_doc {exo.source_doc!r}")

    endo_indices = set()
    for endo in chain.endogenous:
        if endo.id.kind is not VarKind.ENDOGENOUS:
            raise MalformedChain(f"{endo.id} listed among derived variables")
        if endo.id in seen:
            raise DuplicateId(endo.id)
        seen.add(endo.id)
        endo_indices.add(endo.id.index)
        if not endo.parents:
            raise MalformedChain(f"{endo.id} has no parents")
        if len(set(endo.parents)) != len(endo.parents):
            dup = next(p for i, p in enumerate(endo.parents) if p in endo.parents[:i])
            raise DuplicateId(dup)
        if not endo.rule_text:
            raise MalformedChain(f"{endo.id} has empty rule text")
        if not endo.derived_text:
            raise MalformedChain(f"{endo.id} has empty derived text")

    if endo_indices != set(range(1, len(chain.endogenous) + 1)):
        raise MalformedChain(
            f"derived ids must cover v1..v{len(chain.endogenous)}, got "
            f"{sorted(endo_indices)}"
        )

    declared = seen
    for endo in chain.endogenous:
        for parent in endo.parents:
            if parent not in declared:
                raise UnknownParent(parent)


def build_graph(chain: ReasoningChain) -> CausalGraph:
    """Build the dependency DAG: one node per variable, one edge per parent reference.

    Raises UnknownParent for undeclared parents, DuplicateId for repeated
    declarations or repeated parents, and CycleDetected when the parent
    relation is not acyclic. The cached topological order is deterministic:
    among ready nodes, evidence variables come first, then by index.
    """
    ids = [x.id for x in chain.exogenous] + [v.id for v in chain.endogenous]
    nodes: set[VariableId] = set()
    for vid in ids:
        if vid in nodes:
            raise DuplicateId(vid)
        nodes.add(vid)

    edges: set[tuple[VariableId, VariableId]] = set()
    for endo in chain.endogenous:
        seen_parents: set[VariableId] = set()
        for parent in endo.parents:
            if parent not in nodes:
                raise UnknownParent(parent)
            if parent in seen_parents:
                raise DuplicateId(parent)
            seen_parents.add(parent)
            edges.add((parent, endo.id))

    children: dict[VariableId, list[VariableId]] = {vid: [] for vid in nodes}
    in_degree: dict[VariableId, int] = {vid: 0 for vid in nodes}
    for parent, child in edges:
        children[parent].append(child)
        in_degree[child] += 1

    ready = sorted((v for v in nodes if in_degree[v] == 0), key=VariableId.sort_key)
    order: list[VariableId] = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        released = []
        for child in children[node]:
            in_degree[child] -= 1
            if in_degree[child] == 0:
                released.append(child)
        if released:
            ready = sorted(ready + released, key=VariableId.sort_key)
    if len(order) != len(nodes):
        leftover = sorted((v for v in nodes if in_degree[v] > 0), key=VariableId.sort_key)
        raise CycleDetected(leftover)

    return CausalGraph(frozenset(nodes), frozenset(edges), tuple(order))


def check_structural_validity(chain: ReasoningChain) -> ValidityReport:
    """Scan derivations in list order and flag any step whose parents are not yet present.

    All evidence variables are pre-seeded; each derivation then becomes
    available to later steps regardless of its own verdict, so violations
    point at root causes rather than cascading. Accepts any chain, including
    ones that would fail build_graph; an undeclared parent is simply never
    present.
    """
    available = {x.id for x in chain.exogenous}
    violations: list[StepViolation] = []
    for index, endo in enumerate(chain.endogenous):
        missing = tuple(p for p in endo.parents if p not in available)
        if missing:
            violations.append(StepViolation(index, missing))
        available.add(endo.id)
    return ValidityReport(valid=not violations, violations=tuple(violations))


def assemble_steps(chain: ReasoningChain) -> tuple[ReasoningStep, ...]:
    """Serialize a valid chain into per-derivation steps.

    Step t carries the set of variables known before it (all evidence plus
    earlier derivations), the derivation itself, and its conclusion text.
    """
    report = check_structural_validity(chain)
    if not report.valid:
        first = report.violations[0]
        raise InvalidChain(
            f"step {first.step_index} missing parents "
            f"{', '.join(str(p) for p in first.missing_parents)}"
        )
    state = frozenset(x.id for x in chain.exogenous)
    steps: list[ReasoningStep] = []
    for endo in chain.endogenous:
        steps.append(ReasoningStep(state, endo, endo.derived_text))
        state = state | {endo.id}
    return tuple(steps)


def find_sink(graph: CausalGraph) -> VariableId:
    """Return the unique terminal conclusion: the endogenous node nothing depends on."""
    referenced = {parent for parent, _ in graph.edges}
    sinks = sorted(
        (
            node
            for node in graph.nodes
            if node.kind is VarKind.ENDOGENOUS and node not in referenced
        ),
        key=VariableId.sort_key,
    )
    if not sinks:
        raise NoSink("every endogenous variable is referenced by another")
    if len(sinks) > 1:
        raise MultipleSinks(sinks)
    return sinks[0]
