"""Seeded generator of timestamped, entity-annotated documents for fuzzing and demos."""

from __future__ import annotations

import random
from pathlib import Path

from .annotate import LABELS, AnnotatedTranscript, EntitySpan, dump_annotations
from .ingest import PUNCT, WORD, Token, Transcript, serialize_transcript_xml

_WORDS = (
    "the of and to in a is was for on that with as by at from his an were are which "
    "this be has had it not or also first their its new after but who have one been "
    "city river council during year between several national history known later "
    "music station north built state county company album season war team party "
    "Adams Bryan Tesla York Chicago Berlin Wikipedia Amazon Danube Pacific"
).split()
_NUMERIC = ("15,981.21", "3,000", "9.2", "555-1142", "1990", "$15,000", "42", "2.1",
            "http://example.org", "info@example.org", "0.1mg", "119.5")
_PUNCT = (",", ".", ";", ":", "%", "?", "!")


def synthetic_annotated(rng: random.Random, doc_id: str = "doc",
                        duration_s: tuple[float, float] = (10.0, 600.0),
                        max_entity_s: float = 10.0, entity_rate: float = 0.08,
                        punct_rate: float = 0.12) -> AnnotatedTranscript:
    """Words with 120-700 ms durations and 0-400 ms gaps (occasional 2 s pauses);
    entities are runs of consecutive words no longer than ``max_entity_s``."""
    target = int(rng.uniform(*duration_s) * 1000)
    tokens: list[Token] = []
    spans: list[EntitySpan] = []
    t = rng.randint(0, 400)
    open_entity = None  # (start token, label, deadline ms)

    while True:
        dur = rng.randint(120, 700)
        if t + dur > target:
            break
        if open_entity is None and rng.random() < entity_rate:
            label = rng.choice(LABELS)
            length = rng.uniform(0.2, max_entity_s) * 1000
            open_entity = (len(tokens), label, t + length)
        surface = rng.choice(_NUMERIC) if rng.random() < 0.1 else rng.choice(_WORDS)
        tokens.append(Token(len(tokens), surface, WORD, t, t + dur))
        t += dur
        if rng.random() < punct_rate:
            tokens.append(Token(len(tokens), rng.choice(_PUNCT), PUNCT))
        gap = rng.randint(0, 400) if rng.random() > 0.03 else rng.randint(1000, 2000)
        if open_entity is not None:
            # close unless one more word surely fits before the deadline
            if t + gap + 700 > open_entity[2] or rng.random() < 0.3:
                spans.append(EntitySpan(open_entity[0], len(tokens) - 1, open_entity[1]))
                open_entity = None
        t += gap

    if not tokens:
        tokens.append(Token(0, rng.choice(_WORDS), WORD, 0, min(target, 300) or 1))
    if open_entity is not None and open_entity[0] < len(tokens):
        spans.append(EntitySpan(open_entity[0], len(tokens) - 1, open_entity[1]))
    last_end = max(tok.end for tok in tokens if tok.is_word)
    tr = Transcript(doc_id, tuple(tokens), max(target, last_end))
    return AnnotatedTranscript(tr, tuple(spans))


def synthetic_corpus(seed: int, n_docs: int, **kwargs) -> list[AnnotatedTranscript]:
    rng = random.Random(seed)
    return [synthetic_annotated(rng, f"doc{i:04d}", **kwargs) for i in range(n_docs)]


def write_corpus(directory: str | Path, seed: int, n_docs: int, **kwargs) -> list[str]:
    """Write ``<doc>.xml`` transcripts and ``<doc>.ann.json`` annotations for a synthetic corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = []
    for doc in synthetic_corpus(seed, n_docs, **kwargs):
        doc_id = doc.transcript.doc_id
        (directory / f"{doc_id}.xml").write_bytes(serialize_transcript_xml(doc.transcript))
        (directory / f"{doc_id}.ann.json").write_text(dump_annotations(doc.spans) + "\n", "utf-8")
        ids.append(doc_id)
    return ids
