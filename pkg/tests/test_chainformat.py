import json
import random

import pytest

from causalchain.chainformat import (
    ChainDocument,
    extract_answer,
    parse_chain,
    render_template,
    serialize_chain,
)
from causalchain.errors import (
    BadLabel,
    ChainSyntaxError,
    MissingSection,
    NoAnswerMarker,
    UnknownParent,
)
from causalchain.scm import (
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    VariableId,
)
from causalchain.synth import random_corpus, random_document

MINIMAL = {
    "claim": "the claim",
    "exogenous": [{"id": "u1", "text": "an observed fact"}],
    "endogenous": [
        {"id": "v1", "parents": ["u1"], "rule": "hence", "derived": "the conclusion"}
    ],
    "verdict": "Supported",
}


class TestParseJson:
    def test_minimal(self):
        doc = parse_chain(json.dumps(MINIMAL))
        assert len(doc.chain.exogenous) == 1
        assert len(doc.chain.endogenous) == 1
        assert doc.chain.verdict is Label.SUPPORTED

    def test_unknown_parent(self):
        bad = dict(MINIMAL)
        bad["endogenous"] = [
            {"id": "v1", "parents": ["v9"], "rule": "hence", "derived": "x"}
        ]
        with pytest.raises(UnknownParent) as exc:
            parse_chain(json.dumps(bad))
        assert str(exc.value.parent_id) == "v9"

    def test_unknown_field_rejected(self):
        bad = dict(MINIMAL)
        bad["extra"] = 1
        with pytest.raises(ChainSyntaxError):
            parse_chain(json.dumps(bad))

    def test_bad_label(self):
        bad = dict(MINIMAL)
        bad["verdict"] = "maybe"
        with pytest.raises(BadLabel):
            parse_chain(json.dumps(bad))

    def test_duplicate_parent_rejected(self):
        bad = dict(MINIMAL)
        bad["endogenous"] = [
            {"id": "v1", "parents": ["u1", "u1"], "rule": "r", "derived": "d"}
        ]
        from causalchain.errors import DuplicateId

        with pytest.raises(DuplicateId):
            parse_chain(json.dumps(bad))

    def test_invalid_utf8(self):
        with pytest.raises(ChainSyntaxError):
            parse_chain(b"\xff\xfe{}")

    def test_syntax_error_carries_position(self):
        with pytest.raises(ChainSyntaxError) as exc:
            parse_chain('{"claim": }')
        assert exc.value.position is not None


class TestRoundTrip:
    @pytest.mark.parametrize("fmt", ["json", "template-text"])
    def test_parse_serialize_identity(self, fmt):
        for doc in random_corpus(101, 300):
            data = serialize_chain(doc, fmt)
            again = parse_chain(data, fmt)
            assert again == doc
            assert serialize_chain(again, fmt) == data

    def test_serialize_twice_is_identical(self, sample_doc):
        assert serialize_chain(sample_doc) == serialize_chain(sample_doc)

    def test_endogenous_array_length(self):
        doc = parse_chain(
            json.dumps(
                {
                    "claim": "c",
                    "exogenous": [
                        {"id": "u1", "text": "a"},
                        {"id": "u2", "text": "b"},
                    ],
                    "endogenous": [
                        {"id": "v1", "parents": ["u1"], "rule": "r", "derived": "d"},
                        {"id": "v2", "parents": ["v1", "u2"], "rule": "r", "derived": "d"},
                    ],
                    "verdict": "Refuted",
                }
            )
        )
        obj = json.loads(serialize_chain(doc))
        assert len(obj["endogenous"]) == 2

    def test_awkward_text_survives_template_mode(self):
        chain = ReasoningChain(
            claim="colons: and\nnewlines \\ backslashes",
            exogenous=(ExogenousVariable(VariableId.exogenous(1), "a: b :: c"),),
            endogenous=(
                EndogenousVariable(
                    VariableId.endogenous(1),
                    (VariableId.exogenous(1),),
                    "rule :: with :: separators",
                    "derived\ntext: here",
                ),
            ),
            verdict=Label.REFUTED,
        )
        doc = ChainDocument(chain=chain)
        data = serialize_chain(doc, "template-text")
        assert parse_chain(data, "template-text") == doc


class TestRenderTemplate:
    def test_minimal_three_lines(self):
        doc = parse_chain(json.dumps(MINIMAL))
        text = render_template(doc)
        lines = text.splitlines()
        assert len(lines) == 3
        assert lines[-1] == "ANSWER: Supported"

    def test_line_count_is_vars_plus_answer(self):
        rng = random.Random(9)
        for serial in range(50):
            doc = random_document(rng, serial=serial)
            lines = render_template(doc).splitlines()
            n_vars = len(doc.chain.exogenous) + len(doc.chain.endogenous)
            assert len(lines) == n_vars + 1
            assert all(line for line in lines)

    def test_two_evidence_one_step_makes_four_lines(self):
        obj = {
            "claim": "c",
            "exogenous": [{"id": "u1", "text": "a"}, {"id": "u2", "text": "b"}],
            "endogenous": [
                {"id": "v1", "parents": ["u1", "u2"], "rule": "r", "derived": "d"}
            ],
            "verdict": "Supported",
        }
        assert len(render_template(parse_chain(json.dumps(obj))).splitlines()) == 4

    def test_render_reparses_to_same_structure(self):
        for doc in random_corpus(55, 200):
            again = parse_chain(render_template(doc), "template-text")
            assert again.chain.endogenous == doc.chain.endogenous
            assert [x.text for x in again.chain.exogenous] == [
                x.text for x in doc.chain.exogenous
            ]
            assert again.chain.verdict == doc.chain.verdict

    def test_render_round_trips_bare_documents_exactly(self):
        # with no claim, documents, labels, or source attributions, the
        # rendered target is a complete serialization of the document
        rng = random.Random(61)
        for serial in range(50):
            doc = random_document(rng, serial=serial, with_docs=False)
            bare = ChainDocument(
                chain=type(doc.chain)(
                    claim="",
                    exogenous=doc.chain.exogenous,
                    endogenous=doc.chain.endogenous,
                    verdict=doc.chain.verdict,
                )
            )
            assert parse_chain(render_template(bare), "template-text") == bare

    def test_injective_on_fixture_corpus(self):
        docs = random_corpus(77, 1000)
        rendered = {render_template(d) for d in docs}
        assert len(rendered) == len(docs)

    def test_deterministic(self, sample_doc):
        assert render_template(sample_doc) == render_template(sample_doc)


class TestTemplateParse:
    def test_missing_answer_section(self):
        with pytest.raises(MissingSection) as exc:
            parse_chain("u1: fact\nv1: [u1] => r :: d\n", "template-text")
        assert exc.value.name == "ANSWER"

    def test_missing_derivations(self):
        with pytest.raises(MissingSection):
            parse_chain("u1: fact\nANSWER: Supported\n", "template-text")

    def test_unrecognized_line(self):
        with pytest.raises(ChainSyntaxError):
            parse_chain("garbage line\n", "template-text")


class TestExtractAnswer:
    def test_simple(self):
        assert extract_answer("... ANSWER: Supported") is Label.SUPPORTED

    def test_case_insensitive(self):
        assert extract_answer("... ANSWER: refuted") is Label.REFUTED

    def test_no_marker(self):
        with pytest.raises(NoAnswerMarker):
            extract_answer("no marker here")

    def test_last_marker_wins(self):
        text = "ANSWER: Supported\nsome restatement\nANSWER: Refuted"
        assert extract_answer(text) is Label.REFUTED

    def test_trailing_punctuation(self):
        assert extract_answer("ANSWER: Supported.") is Label.SUPPORTED

    def test_unknown_label(self):
        with pytest.raises(BadLabel):
            extract_answer("ANSWER: unknown")

    def test_matches_render(self):
        for doc in random_corpus(31, 200):
            assert extract_answer(render_template(doc)) == doc.chain.verdict
