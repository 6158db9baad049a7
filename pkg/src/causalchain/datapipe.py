"""Dataset construction: seed ingestion, consistency filtering, assembly, SFT emission.

Seed records (query + gold label) are turned into chain documents by a
pluggable generator, filtered for answer agreement and structural
validity, assembled into sequential reasoning steps, and finally emitted
as training instances whose target is the rendered template text. The
teacher model behind the generator interface is out of scope; shipped
implementations replay fixtures or synthesize chains deterministically
from a seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

from .chainformat import ChainDocument, document_from_json_obj, render_template
from .errors import (
    BadTemplate,
    MissingPrediction,
    SchemaError,
    ZeroProbability,
)
from .rewards import match_answers
from .scm import Label, ReasoningStep, assemble_steps, check_structural_validity
from .synth import random_document

DISCARD_WRONG_ANSWER = "WrongAnswer"
DISCARD_INVALID_STRUCTURE = "InvalidStructure"


@dataclass(frozen=True)
class SeedRecord:
    id: str
    query: str
    gold_label: Label


@dataclass(frozen=True)
class StructRecord:
    """A kept candidate: its query, document, assembled steps, and answer."""

    query: str
    chain: ChainDocument
    steps: tuple[ReasoningStep, ...]
    answer: Label


@dataclass(frozen=True)
class SftInstance:
    input: str
    target: str


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: Optional[str] = None


@dataclass
class FilterStats:
    """Mutable tally; counts are final once the producing stream is exhausted."""

    kept: int = 0
    discarded: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.kept + sum(self.discarded.values())

    def count_discard(self, reason: str) -> None:
        self.discarded[reason] = self.discarded.get(reason, 0) + 1

    def to_json_dict(self) -> dict:
        return {
            "kept": self.kept,
            "discarded": {k: self.discarded[k] for k in sorted(self.discarded)},
            "total": self.total,
        }


_SEED_KEYS = {"id", "query", "gold_label"}


def _seed_from_obj(obj, line_no: int) -> SeedRecord:
    if not isinstance(obj, dict):
        raise SchemaError("seed record must be an object", line=line_no)
    unknown = set(obj) - _SEED_KEYS
    if unknown:
        raise SchemaError(f"unknown field {sorted(unknown)[0]!r}", line=line_no)
    missing = _SEED_KEYS - set(obj)
    if missing:
        raise SchemaError(f"missing field {sorted(missing)[0]!r}", line=line_no)
    if not isinstance(obj["id"], str) or not isinstance(obj["query"], str):
        raise SchemaError("id and query must be strings", line=line_no)
    try:
        gold = Label.parse(obj["gold_label"])
    except Exception as exc:
        raise SchemaError(str(exc), line=line_no) from exc
    return SeedRecord(id=obj["id"], query=obj["query"], gold_label=gold)


def load_seed(path, lenient: bool = False,
              on_error: Optional[Callable[[SchemaError], None]] = None) -> Iterator[SeedRecord]:
    """Yield seed records from a JSONL file in file order.

    Strict by default: the first malformed line raises SchemaError with its
    line number. In lenient mode malformed lines are reported through
    ``on_error`` and skipped.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(exc.msg, line=line_no) from exc
                record = _seed_from_obj(obj, line_no)
            except SchemaError as err:
                if not lenient:
                    raise
                if on_error is not None:
                    on_error(err)
                continue
            yield record


def consistency_filter(
    candidate: ChainDocument,
    gold: Label,
    match_mode: str = "exact",
    require_valid_structure: bool = True,
) -> FilterDecision:
    """Keep a candidate only if its predicted answer matches gold and (in the
    default strict mode) its chain passes the structural validity gate.

    ``require_valid_structure=False`` reproduces answer-only filtering.
    """
    if candidate.predicted_label is None:
        raise MissingPrediction("candidate has no predicted label")
    if not match_answers(candidate.predicted_label, gold, match_mode):
        return FilterDecision(keep=False, reason=DISCARD_WRONG_ANSWER)
    if require_valid_structure and not check_structural_validity(candidate.chain).valid:
        return FilterDecision(keep=False, reason=DISCARD_INVALID_STRUCTURE)
    return FilterDecision(keep=True)


def build_struct_dataset(
    seeds: Iterable[SeedRecord],
    generator: Callable[[SeedRecord], ChainDocument],
    match_mode: str = "exact",
    require_valid_structure: bool = True,
) -> tuple[Iterator[StructRecord], FilterStats]:
    """Run the generator over the seeds, filter, and assemble kept records.

    Streaming: records are produced lazily in seed order and the returned
    stats object fills in as the iterator is consumed. In answer-only mode
    an order-invalid chain can be kept; it has no step decomposition, so
    its record carries empty steps.
    """
    stats = FilterStats()

    def produce() -> Iterator[StructRecord]:
        for seed in seeds:
            candidate = generator(seed)
            decision = consistency_filter(
                candidate, seed.gold_label,
                match_mode=match_mode,
                require_valid_structure=require_valid_structure,
            )
            if not decision.keep:
                stats.count_discard(decision.reason)
                continue
            stats.kept += 1
            assemblable = check_structural_validity(candidate.chain).valid
            yield StructRecord(
                query=seed.query,
                chain=candidate,
                steps=assemble_steps(candidate.chain) if assemblable else (),
                answer=candidate.predicted_label,
            )

    return produce(), stats


def make_sft_instance(record: StructRecord, prompt_template: str) -> SftInstance:
    """Substitute the query into the prompt and render the chain as the target."""
    if "{query}" not in prompt_template:
        raise BadTemplate("prompt template must contain {query}")
    return SftInstance(
        input=prompt_template.replace("{query}", record.query),
        target=render_template(record.chain),
    )


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


def sft_loss(target_tokens, prob_oracle: Callable[[list, int], float]) -> float:
    """Negative log-likelihood of the target under a per-position probability oracle.

    The oracle is called as ``prob_oracle(tokens, t)`` and must return the
    conditional probability of token t given the preceding ones, in (0, 1].
    """
    tokens = list(target_tokens)
    total = 0.0
    for t in range(len(tokens)):
        p = prob_oracle(tokens, t)
        if p <= 0.0:
            raise ZeroProbability(t)
        if p > 1.0:
            raise ValueError(f"oracle returned probability {p} > 1 at position {t}")
        total -= math.log(p)
    return total


# --- shipped generators ---

class FixtureReplayGenerator:
    """Replays pre-generated documents keyed by seed id."""

    def __init__(self, documents: dict[str, ChainDocument]):
        self.documents = dict(documents)

    @classmethod
    def from_jsonl(cls, path) -> "FixtureReplayGenerator":
        documents = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(exc.msg, line=line_no) from exc
                if not isinstance(obj, dict) or "id" not in obj or "document" not in obj:
                    raise SchemaError("fixture line needs id and document", line=line_no)
                documents[obj["id"]] = document_from_json_obj(obj["document"])
        return cls(documents)

    def __call__(self, seed: SeedRecord) -> ChainDocument:
        try:
            return self.documents[seed.id]
        except KeyError as exc:
            raise SchemaError(f"no fixture document for seed id {seed.id!r}") from exc


class SyntheticChainGenerator:
    """Deterministic stand-in for a teacher model.

    Each seed id gets its own RNG stream derived by hashing (seed, id), so
    regenerating any subset of a dataset is reproducible. ``wrong_rate``
    and ``invalid_rate`` plant answer flips and order-invalid structures.
    """

    def __init__(self, seed: int = 0, wrong_rate: float = 0.0, invalid_rate: float = 0.0):
        self.seed = seed
        self.wrong_rate = wrong_rate
        self.invalid_rate = invalid_rate

    def _rng_for(self, record_id: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}\x1f{record_id}".encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def __call__(self, seed: SeedRecord) -> ChainDocument:
        rng = self._rng_for(seed.id)
        wrong = rng.random() < self.wrong_rate
        invalid = rng.random() < self.invalid_rate
        return random_document(
            rng,
            serial=int.from_bytes(hashlib.sha256(seed.id.encode()).digest()[:3], "big"),
            gold_label=seed.gold_label,
            wrong_answer=wrong,
            invalid_structure=invalid,
        )


# --- JSONL projections used by the CLI ---

def struct_record_to_json_obj(record: StructRecord) -> dict:
    from .chainformat import document_to_json_obj

    return {
        "query": record.query,
        "chain": document_to_json_obj(record.chain),
        "steps": [
            {
                "state": [str(v) for v in sorted(step.state_tau, key=lambda v: v.sort_key())],
                "action": str(step.action_alpha.id),
                "observation": step.observation_o,
            }
            for step in record.steps
        ],
        "answer": str(record.answer),
    }


def sft_instance_to_json_obj(instance: SftInstance) -> dict:
    return {"input": instance.input, "target": instance.target}
