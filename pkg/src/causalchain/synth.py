"""Seeded random chain documents for fixtures and stress tests.

Chains are generated in topological order: each derivation's parents are
drawn from variables that already exist, and consecutive derivations are
linked so the final one is the unique sink. Structure can be deliberately
broken (forward references) and answers deliberately flipped to exercise
the filtering pipeline.
"""

from __future__ import annotations

import random
from typing import Optional

from .chainformat import ChainDocument
from .scm import (
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    VariableId,
)

_SUBJECTS = [
    "the observatory", "the museum", "the river", "the expedition", "the treaty",
    "the archive", "the vaccine", "the bridge", "the election", "the café",
]
_FACTS = [
    "was founded in 1887", "lies north of the border", "employs 40 people",
    "was renamed twice", "spans 300 metres", "closed during the war",
    "won the award", "operates in Zürich", "predates the railway",
    "appears in the 1954 survey",
]
_RULES = [
    "combining the dates shows", "the locations together imply",
    "cross-referencing the records gives", "by elimination it follows that",
    "the overlap of both accounts means", "matching the names establishes",
]
_CONCLUSIONS = [
    "the timeline is consistent", "both refer to the same entity",
    "the figure is overstated", "the event happened first",
    "the attribution is correct", "the claim covers the same period",
]


def random_document(
    rng: random.Random,
    serial: int = 0,
    max_exogenous: int = 6,
    max_endogenous: int = 5,
    gold_label: Optional[Label] = None,
    wrong_answer: bool = False,
    invalid_structure: bool = False,
    with_docs: bool = True,
) -> ChainDocument:
    """One random document; distinct serials yield distinct evidence texts.

    The verdict (and predicted label) equal ``gold_label`` unless
    ``wrong_answer`` flips them. ``invalid_structure`` reverses the
    derivation order, which breaks the insertion gate whenever a
    derivation depends on another one (guaranteed here for 2+ steps).
    """
    n_exo = rng.randint(1, max_exogenous)
    n_endo = rng.randint(1, max_endogenous)
    if invalid_structure and n_endo < 2:
        n_endo = 2

    n_docs = rng.randint(1, 3) if with_docs else 0
    evidence_docs = tuple(
        f"Document {serial}-{d} about {rng.choice(_SUBJECTS)}." for d in range(n_docs)
    )

    exogenous = []
    for k in range(1, n_exo + 1):
        source = rng.randrange(n_docs) if n_docs and rng.random() < 0.7 else None
        exogenous.append(
            ExogenousVariable(
                id=VariableId.exogenous(k),
                text=f"[{serial}-{k}] {rng.choice(_SUBJECTS)} {rng.choice(_FACTS)}",
                source_doc=source,
            )
        )

    endogenous = []
    for t in range(1, n_endo + 1):
        pool = [VariableId.exogenous(k) for k in range(1, n_exo + 1)]
        pool += [VariableId.endogenous(j) for j in range(1, t)]
        # link to the previous derivation so the last one is the unique sink
        parents = {VariableId.endogenous(t - 1)} if t > 1 else set()
        want = rng.randint(1, min(3, len(pool)))
        while len(parents) < want:
            parents.add(rng.choice(pool))
        ordered = sorted(parents, key=VariableId.sort_key)
        endogenous.append(
            EndogenousVariable(
                id=VariableId.endogenous(t),
                parents=tuple(ordered),
                rule_text=rng.choice(_RULES),
                derived_text=f"{rng.choice(_CONCLUSIONS)} ({serial}-v{t})",
            )
        )
    if invalid_structure:
        endogenous = list(reversed(endogenous))

    gold = gold_label if gold_label is not None else rng.choice(list(Label))
    verdict = gold
    if wrong_answer:
        verdict = Label.REFUTED if gold is Label.SUPPORTED else Label.SUPPORTED

    chain = ReasoningChain(
        claim=f"Claim {serial} that {rng.choice(_SUBJECTS)} {rng.choice(_FACTS)}",
        exogenous=tuple(exogenous),
        endogenous=tuple(endogenous),
        verdict=verdict,
    )
    return ChainDocument(
        chain=chain,
        evidence_docs=evidence_docs,
        gold_label=gold,
        predicted_label=verdict,
    )


def random_corpus(seed: int, count: int, **kwargs) -> list[ChainDocument]:
    rng = random.Random(seed)
    return [random_document(rng, serial=i, **kwargs) for i in range(count)]
