"""Bit-exact wire formats for chain documents.

Two formats are supported:

* ``json`` -- one document per object, strict (unknown fields rejected),
  canonical key order, emitted as a single LF-terminated line. Suitable
  for JSONL streams.
* ``template-text`` -- the line-oriented textual layout. A full document
  serializes as four sections in fixed order: a CLAIM line, evidence
  (``DOC <i>:`` lines then ``u<k>: <text>`` lines), derivations
  (``v<k>: [<parents>] => <rule> :: <derived>``), and the answer block
  (``ANSWER:`` plus optional ``GOLD:``/``PRED:``).

``render_template`` emits only the training-target body (evidence lines,
derivation lines, ANSWER) without the claim or document list; its output
re-parses in template-text mode to a document with the same variable
structure and label.

Text fields are escaped so both formats round-trip byte-exactly: backslash,
newline, carriage return, and colon map to ``\\\\``, ``\\n``, ``\\r`` and
``\\c``. Escaping colons keeps every structural delimiter unambiguous.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .errors import (
    BadLabel,
    ChainSyntaxError,
    MalformedChain,
    MissingLabel,
    MissingSection,
    NoAnswerMarker,
)
from .scm import (
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    VariableId,
    VarKind,
    validate_chain,
)

FORMATS = ("json", "template-text")


@dataclass(frozen=True)
class ChainDocument:
    """A reasoning chain plus its corpus context: evidence documents and labels."""

    chain: ReasoningChain
    evidence_docs: tuple[str, ...] = ()
    gold_label: Optional[Label] = None
    predicted_label: Optional[Label] = None

    @property
    def claim(self) -> str:
        return self.chain.claim

    def answer_label(self) -> Label:
        """The label the document commits to in its ANSWER line."""
        label = self.chain.verdict or self.predicted_label or self.gold_label
        if label is None:
            raise MissingLabel("document carries no answer label")
        return label


def validate_document(doc: ChainDocument) -> None:
    validate_chain(doc.chain)
    for exo in doc.chain.exogenous:
        if exo.source_doc is not None and not (0 <= exo.source_doc < len(doc.evidence_docs)):
            raise MalformedChain(
                f"{exo.id} cites document {exo.source_doc} but only "
                f"{len(doc.evidence_docs)} are attached"
            )
    for label in (doc.gold_label, doc.predicted_label):
        if label is not None and not isinstance(label, Label):
            raise BadLabel(label)


# --- field escaping (shared by template-text and render_template) ---

_ESCAPE_MAP = {"\\": "\\\\", "\n": "\\n", "\r": "\\r", ":": "\\c"}
_UNESCAPE_MAP = {"\\": "\\", "n": "\n", "r": "\r", "c": ":"}


def _escape(text: str) -> str:
    return "".join(_ESCAPE_MAP.get(ch, ch) for ch in text)


def _unescape(text: str, line_no: int) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == ":":
            raise ChainSyntaxError("unescaped colon in field", position=line_no)
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(text) or text[i + 1] not in _UNESCAPE_MAP:
            raise ChainSyntaxError("bad escape sequence", position=line_no)
        out.append(_UNESCAPE_MAP[text[i + 1]])
        i += 2
    return "".join(out)


# --- JSON format ---

_DOC_KEYS = {
    "claim",
    "evidence_docs",
    "exogenous",
    "endogenous",
    "verdict",
    "gold_label",
    "predicted_label",
}
_EXO_KEYS = {"id", "text", "source_doc"}
_ENDO_KEYS = {"id", "parents", "rule", "derived"}


def _require_str(value, what: str) -> str:
    if not isinstance(value, str):
        raise ChainSyntaxError(f"{what} must be a string, got {type(value).__name__}")
    return value


def _check_keys(obj: dict, allowed: set[str], what: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ChainSyntaxError(f"unknown field {sorted(unknown)[0]!r} in {what}")


def document_from_json_obj(obj) -> ChainDocument:
    if not isinstance(obj, dict):
        raise ChainSyntaxError("document must be a JSON object")
    _check_keys(obj, _DOC_KEYS, "document")
    for key in ("claim", "exogenous", "endogenous", "verdict"):
        if obj.get(key) is None:
            raise ChainSyntaxError(f"missing required field {key!r}")

    claim = _require_str(obj["claim"], "claim")
    docs_raw = obj.get("evidence_docs") or []
    if not isinstance(docs_raw, list):
        raise ChainSyntaxError("evidence_docs must be an array")
    evidence_docs = tuple(_require_str(d, "evidence doc") for d in docs_raw)

    if not isinstance(obj["exogenous"], list) or not isinstance(obj["endogenous"], list):
        raise ChainSyntaxError("exogenous and endogenous must be arrays")

    exogenous = []
    for entry in obj["exogenous"]:
        if not isinstance(entry, dict):
            raise ChainSyntaxError("exogenous entry must be an object")
        _check_keys(entry, _EXO_KEYS, "exogenous entry")
        source = entry.get("source_doc")
        if source is not None and not isinstance(source, int):
            raise ChainSyntaxError("source_doc must be an integer")
        exogenous.append(
            ExogenousVariable(
                id=VariableId.parse(_require_str(entry.get("id"), "exogenous id")),
                text=_require_str(entry.get("text"), "exogenous text"),
                source_doc=source,
            )
        )

    endogenous = []
    for entry in obj["endogenous"]:
        if not isinstance(entry, dict):
            raise ChainSyntaxError("endogenous entry must be an object")
        _check_keys(entry, _ENDO_KEYS, "endogenous entry")
        parents_raw = entry.get("parents")
        if not isinstance(parents_raw, list):
            raise ChainSyntaxError("parents must be an array")
        endogenous.append(
            EndogenousVariable(
                id=VariableId.parse(_require_str(entry.get("id"), "endogenous id")),
                parents=tuple(
                    VariableId.parse(_require_str(p, "parent id")) for p in parents_raw
                ),
                rule_text=_require_str(entry.get("rule"), "rule"),
                derived_text=_require_str(entry.get("derived"), "derived"),
            )
        )

    chain = ReasoningChain(
        claim=claim,
        exogenous=tuple(exogenous),
        endogenous=tuple(endogenous),
        verdict=Label.parse(obj["verdict"]),
    )
    doc = ChainDocument(
        chain=chain,
        evidence_docs=evidence_docs,
        gold_label=None if obj.get("gold_label") is None else Label.parse(obj["gold_label"]),
        predicted_label=(
            None if obj.get("predicted_label") is None else Label.parse(obj["predicted_label"])
        ),
    )
    validate_document(doc)
    return doc


def document_to_json_obj(doc: ChainDocument) -> dict:
    """Canonical JSON object: fixed key order, optional fields omitted when absent."""
    obj: dict = {"claim": doc.claim}
    if doc.evidence_docs:
        obj["evidence_docs"] = list(doc.evidence_docs)
    exo_objs = []
    for exo in sorted(doc.chain.exogenous, key=lambda x: x.id.index):
        entry: dict = {"id": str(exo.id), "text": exo.text}
        if exo.source_doc is not None:
            entry["source_doc"] = exo.source_doc
        exo_objs.append(entry)
    obj["exogenous"] = exo_objs
    obj["endogenous"] = [
        {
            "id": str(endo.id),
            "parents": [str(p) for p in endo.parents],
            "rule": endo.rule_text,
            "derived": endo.derived_text,
        }
        for endo in doc.chain.endogenous
    ]
    obj["verdict"] = str(doc.chain.verdict)
    if doc.gold_label is not None:
        obj["gold_label"] = str(doc.gold_label)
    if doc.predicted_label is not None:
        obj["predicted_label"] = str(doc.predicted_label)
    return obj


# --- template-text format ---

_CLAIM_RE = re.compile(r"^CLAIM: (.*)$")
_DOC_RE = re.compile(r"^DOC (\d+): (.*)$")
_EVIDENCE_RE = re.compile(r"^u(\d+)(?: \[doc (\d+)\])?: (.*)$")
_DERIVE_RE = re.compile(r"^v(\d+): \[([^\[\]]*)\] => (.*?) :: (.*)$")
_ANSWER_RE = re.compile(r"^ANSWER: (.*)$")
_GOLD_RE = re.compile(r"^GOLD: (.*)$")
_PRED_RE = re.compile(r"^PRED: (.*)$")


def _evidence_line(exo: ExogenousVariable, with_source: bool) -> str:
    marker = (
        f" [doc {exo.source_doc}]" if with_source and exo.source_doc is not None else ""
    )
    return f"u{exo.id.index}{marker}: {_escape(exo.text)}"


def _derivation_line(endo: EndogenousVariable) -> str:
    parents = ", ".join(str(p) for p in endo.parents)
    return (
        f"v{endo.id.index}: [{parents}] => "
        f"{_escape(endo.rule_text)} :: {_escape(endo.derived_text)}"
    )


def render_template(doc: ChainDocument) -> str:
    """Render the training-target text: evidence, derivations, then the answer.

    One line per variable plus the final ``ANSWER: <label>`` line. Claim,
    document list, and source attributions are deliberately not included;
    they belong to the model input, not the target.
    """
    label = doc.answer_label()
    lines = [_evidence_line(exo, with_source=False) for exo in doc.chain.exogenous]
    lines.extend(_derivation_line(endo) for endo in doc.chain.endogenous)
    lines.append(f"ANSWER: {label}")
    return "\n".join(lines)


def _document_to_template(doc: ChainDocument) -> str:
    lines = [f"CLAIM: {_escape(doc.claim)}"]
    lines.extend(
        f"DOC {i}: {_escape(text)}" for i, text in enumerate(doc.evidence_docs)
    )
    lines.extend(
        _evidence_line(exo, with_source=True)
        for exo in sorted(doc.chain.exogenous, key=lambda x: x.id.index)
    )
    lines.extend(_derivation_line(endo) for endo in doc.chain.endogenous)
    lines.append(f"ANSWER: {doc.chain.verdict}")
    if doc.gold_label is not None:
        lines.append(f"GOLD: {doc.gold_label}")
    if doc.predicted_label is not None:
        lines.append(f"PRED: {doc.predicted_label}")
    return "\n".join(lines) + "\n"


def _document_from_template(text: str) -> ChainDocument:
    claim = ""
    evidence_docs: list[str] = []
    exogenous: list[ExogenousVariable] = []
    endogenous: list[EndogenousVariable] = []
    answer: Optional[Label] = None
    gold: Optional[Label] = None
    pred: Optional[Label] = None

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if m := _CLAIM_RE.match(line):
            claim = _unescape(m.group(1), line_no)
        elif m := _DOC_RE.match(line):
            if int(m.group(1)) != len(evidence_docs):
                raise ChainSyntaxError("DOC lines must be numbered 0,1,...", position=line_no)
            evidence_docs.append(_unescape(m.group(2), line_no))
        elif m := _EVIDENCE_RE.match(line):
            exogenous.append(
                ExogenousVariable(
                    id=VariableId(VarKind.EXOGENOUS, int(m.group(1))),
                    text=_unescape(m.group(3), line_no),
                    source_doc=None if m.group(2) is None else int(m.group(2)),
                )
            )
        elif m := _DERIVE_RE.match(line):
            parents_field = m.group(2)
            parents = tuple(
                VariableId.parse(p) for p in parents_field.split(", ") if parents_field
            )
            endogenous.append(
                EndogenousVariable(
                    id=VariableId(VarKind.ENDOGENOUS, int(m.group(1))),
                    parents=parents,
                    rule_text=_unescape(m.group(3), line_no),
                    derived_text=_unescape(m.group(4), line_no),
                )
            )
        elif m := _ANSWER_RE.match(line):
            answer = Label.parse(m.group(1))
        elif m := _GOLD_RE.match(line):
            gold = Label.parse(m.group(1))
        elif m := _PRED_RE.match(line):
            pred = Label.parse(m.group(1))
        else:
            raise ChainSyntaxError(f"unrecognized line {line!r}", position=line_no)

    if not exogenous:
        raise MissingSection("EVIDENCE")
    if not endogenous:
        raise MissingSection("DERIVATIONS")
    if answer is None:
        raise MissingSection("ANSWER")

    doc = ChainDocument(
        chain=ReasoningChain(
            claim=claim,
            exogenous=tuple(exogenous),
            endogenous=tuple(endogenous),
            verdict=answer,
        ),
        evidence_docs=tuple(evidence_docs),
        gold_label=gold,
        predicted_label=pred,
    )
    validate_document(doc)
    return doc


# --- public parse / serialize ---

def parse_chain(data, fmt: str = "json") -> ChainDocument:
    """Parse one document from bytes or text; strict in both formats."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ChainSyntaxError("input is not valid UTF-8", position=exc.start) from exc
    else:
        text = data

    if fmt == "json":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ChainSyntaxError(exc.msg, position=exc.pos) from exc
        return document_from_json_obj(obj)
    return _document_from_template(text)


def serialize_chain(doc: ChainDocument, fmt: str = "json") -> bytes:
    """Serialize to the canonical byte form; serialize-parse-serialize is a fixed point."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    validate_document(doc)
    if fmt == "json":
        text = json.dumps(document_to_json_obj(doc), ensure_ascii=False, separators=(",", ":"))
        return (text + "\n").encode("utf-8")
    return _document_to_template(doc).encode("utf-8")


_MARKER_RE = re.compile(r"ANSWER:([^\n]*)")


def extract_answer(text: str) -> Label:
    """Label after the last ANSWER: marker; generated text may restate the marker."""
    matches = _MARKER_RE.findall(text)
    if not matches:
        raise NoAnswerMarker("no ANSWER: marker in text")
    tail = matches[-1].strip()
    try:
        return Label.parse(tail)
    except BadLabel:
        token = tail.split()[0] if tail.split() else ""
        return Label.parse(token.strip(".,;!?"))
