import random
from collections import Counter

import pytest

from ctxwindow.annotate import (LABELS, NUMERIC_LABELS, AnnotatedTranscript, EntitySpan,
                                annotate, dump_annotations, embed_tags, iter_tags, label_class,
                                load_annotations, load_patterns, merge_annotations,
                                plain_text, regex_extract_custom, strip_tags)
from ctxwindow.errors import AnnotationError, TagError
from ctxwindow.metrics import extract_entities
from ctxwindow.synthetic import synthetic_corpus

from conftest import make_doc
from oracles import reference_tagged


def words(*surfaces):
    return make_doc([(w, i * 500, i * 500 + 400) if w not in ",.;%" else w
                     for i, w in enumerate(surfaces)])


def test_label_set():
    assert len(LABELS) == 22 and len(set(LABELS)) == 22
    assert {"URL", "EMAIL", "PHONE_NUM", "NUMERIC", "MONEY", "GPE"} <= set(LABELS)
    assert label_class("MONEY") == "numeric" and label_class("PERSON") == "textual"
    assert NUMERIC_LABELS == {"CARDINAL", "NUMERIC", "TIME", "QUANTITY", "MONEY", "PERCENT",
                              "URL", "EMAIL", "PHONE_NUM"}
    with pytest.raises(AnnotationError):
        label_class("LOCATION")


def test_load_annotations():
    tr = words("a", "b", "c").transcript
    assert load_annotations('[{"s":1,"e":2,"label":"GPE"}]', tr) == [EntitySpan(1, 2, "GPE")]
    spans = load_annotations('[{"s":2,"e":2,"label":"GPE"},{"s":0,"e":0,"label":"ORG"}]', tr)
    assert [s.start_token for s in spans] == [0, 2]
    assert load_annotations(dump_annotations(spans), tr) == spans


@pytest.mark.parametrize("payload, message", [
    ('[{"s":2,"e":1,"label":"GPE"}]', "precedes"),
    ('[{"s":3,"e":4,"label":"GPE"},{"s":4,"e":5,"label":"ORG"}]', "overlap at token 4"),
    ('[{"s":0,"e":0,"label":"LOCATION"}]', "unknown label"),
    ('[{"s":0,"e":9,"label":"GPE"}]', "out of range"),
    ('{"s":0}', "array"),
    ('[{"s":0}]', "keys"),
    ('[{"s":"0","e":1,"label":"GPE"}]', "integers"),
    ('[', "malformed"),
])
def test_load_annotations_errors(payload, message):
    tr = words(*"abcdefg").transcript
    with pytest.raises(AnnotationError, match=message):
        load_annotations(payload, tr)


def test_unsorted_spans_rejected():
    doc = words("a", "b", "c")
    with pytest.raises(AnnotationError, match="not sorted"):
        AnnotatedTranscript(doc.transcript, (EntitySpan(2, 2, "GPE"), EntitySpan(0, 0, "ORG")))


@pytest.mark.parametrize("surface, label", [
    ("555-1142", "PHONE_NUM"),
    ("http://example.org", "URL"),
    ("15,981.21", "NUMERIC"),
    ("info@example.org", "EMAIL"),
    ("9.2", "NUMERIC"),
])
def test_regex_custom_types(surface, label):
    spans = regex_extract_custom(words("call", surface, "now").transcript)
    assert spans == [EntitySpan(1, 1, label)]


def test_regex_ignores_plain_words_and_years():
    assert regex_extract_custom(words("in", "1990", "the", "city").transcript) == []


def test_regex_multi_token_phone():
    doc = words("call", "(555)", "555-1142", "today")
    assert regex_extract_custom(doc.transcript) == [EntitySpan(1, 2, "PHONE_NUM")]


def test_pattern_file_version_and_errors(tmp_path):
    assert load_patterns().version == "1"
    bad = tmp_path / "p.tsv"
    bad.write_text("MONEY\t\\d+\n")
    with pytest.raises(AnnotationError, match="line 1"):
        load_patterns(bad)
    bad.write_text("NUMERIC\t(\n")
    with pytest.raises(AnnotationError):
        load_patterns(bad)


def test_merge_precedence():
    external = [EntitySpan(3, 4, "MONEY")]
    assert merge_annotations(external, [EntitySpan(4, 4, "NUMERIC")]) == external
    a, b = [EntitySpan(0, 1, "ORG")], [EntitySpan(5, 5, "URL")]
    assert merge_annotations(a, b) == a + b
    assert merge_annotations(b, a) == a + b
    assert merge_annotations([], []) == []


def test_merge_trims_partially_covered_custom():
    merged = merge_annotations([EntitySpan(2, 3, "DATE")], [EntitySpan(1, 5, "NUMERIC")])
    assert merged == [EntitySpan(1, 1, "NUMERIC"), EntitySpan(2, 3, "DATE"), EntitySpan(4, 5, "NUMERIC")]


def test_merge_coverage_invariant():
    r = random.Random(5)
    for _ in range(300):
        def spans(k):
            out, i = [], 0
            while i < 40 and len(out) < k:
                i += r.randint(0, 4)
                j = i + r.randint(0, 3)
                out.append(EntitySpan(i, j, r.choice(LABELS)))
                i = j + 1
            return out
        ext, cus = spans(6), spans(6)
        merged = merge_annotations(ext, cus)
        tok = lambda ss: {i for s in ss for i in s.tokens()}  # noqa: E731
        assert tok(merged) == tok(ext) | tok(cus)
        assert set(ext) <= set(merged)
        AnnotatedTranscript(words(*["w"] * 50).transcript, tuple(merged))  # disjoint + sorted


def test_annotate_combines_sources():
    doc = words("pay", "$15,000", "to", "Bryan", "Adams", "at", "555-1142")
    ann = annotate(doc.transcript, [EntitySpan(1, 1, "MONEY"), EntitySpan(3, 4, "PERSON")])
    assert [s.label for s in ann.spans] == ["MONEY", "PERSON", "PHONE_NUM"]


def test_embed_tags_examples(united_states):
    assert embed_tags(united_states) == "the <GPE>United States</GPE>,"
    doc = words("the", "United", "States")
    assert embed_tags(doc) == plain_text(doc.transcript) == "the United States"


def test_embed_money_date_chunk():
    doc = make_doc([("on", 0, 200), ("March", 200, 500), ("3", 500, 700), ",",
                    ("$15,000", 800, 1500), ("was", 1500, 1700), ("paid", 1700, 1900), "."],
                   spans=[(1, 2, "DATE"), (4, 4, "MONEY")])
    text = embed_tags(doc)
    assert text == "on <DATE>March 3</DATE>, <MONEY>$15,000</MONEY> was paid."
    assert strip_tags(text) == plain_text(doc.transcript)
    assert len(list(iter_tags(text))) == 2 * len(doc.spans)


def test_embed_range_rejects_straddling_span(united_states):
    assert embed_tags(united_states, 0, 1) == "the"
    with pytest.raises(AnnotationError, match="straddles"):
        embed_tags(united_states, 0, 2)


@pytest.mark.parametrize("text", ["<GPE>a", "a</GPE>", "<GPE><ORG>a</ORG></GPE>", "<GPE>a</ORG>"])
def test_iter_tags_rejects_malformed(text):
    with pytest.raises(TagError):
        list(iter_tags(text))


def test_embed_matches_reference_and_round_trips():
    for doc in synthetic_corpus(21, 100, duration_s=(10, 120)):
        text = embed_tags(doc)
        assert text == reference_tagged(doc)
        assert strip_tags(text) == plain_text(doc.transcript)
        got = Counter((e.label, e.surface) for e in extract_entities(text))
        want = Counter((s.label, plain_text(doc.transcript, s.start_token, s.end_token + 1))
                       for s in doc.spans)
        assert got == want
