import random

import pytest

from ctxwindow.annotate import AnnotatedTranscript, EntitySpan
from ctxwindow.ingest import PUNCT, WORD, Token, Transcript


def make_doc(items, spans=(), duration=None, doc_id="doc"):
    """items: (surface, start_ms, end_ms) for words, bare strings for punctuation.
    spans: (start_token, end_token, label) triples."""
    tokens = []
    for i, item in enumerate(items):
        if isinstance(item, str):
            tokens.append(Token(i, item, PUNCT))
        else:
            surface, s, e = item
            tokens.append(Token(i, surface, WORD, s, e))
    last = max(t.end for t in tokens if t.is_word)
    tr = Transcript(doc_id, tuple(tokens), duration if duration is not None else last)
    return AnnotatedTranscript(tr, tuple(EntitySpan(a, b, lab) for a, b, lab in spans))


def uniform_doc(duration_ms, step_ms=500, word_ms=400, spans=(), doc_id="doc"):
    items = [(f"w{i}", t, t + word_ms) for i, t in enumerate(range(0, duration_ms - word_ms + 1, step_ms))]
    return make_doc(items, spans, duration=duration_ms, doc_id=doc_id)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[6:8])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def united_states():
    return make_doc([("the", 0, 300), ("United", 300, 700), ("States", 700, 1200), ","],
                    spans=[(1, 2, "GPE")])


def snapshot(directory):
    """{relative path: bytes} for every file below ``directory``."""
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file() and not p.name.startswith(".")}


def write_config(path, **fields):
    import json
    path.write_text(json.dumps(fields))
    return path
