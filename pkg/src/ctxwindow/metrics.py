"""Transcript scoring: normalized WER, strict entity P/R/F1, CER and Jaro-Winkler.

Entities are compared after pairing same-label reference and hypothesis
entities whose word positions overlap under the WER alignment.
"""

from __future__ import annotations

import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .annotate import LABELS, NUMERIC_LABELS, iter_tags, strip_tags
from .errors import TagError


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_word(word: str) -> str:
    return "".join(ch for ch in word if not _is_punct(ch)).lower()


def stripped_words(tagged: str) -> list[str]:
    for _ in iter_tags(tagged):
        pass
    return strip_tags(tagged).split()


def normalize_for_wer(tagged: str) -> list[str]:
    """Drop tags, drop punctuation characters, lowercase, split on whitespace."""
    for _ in iter_tags(tagged):
        pass
    text = "".join(ch for ch in strip_tags(tagged) if not _is_punct(ch)).lower()
    return text.split()


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def align(ref: Sequence, hyp: Sequence) -> list[tuple[int | None, int | None]]:
    """Minimum-edit alignment as (ref index, hyp index) pairs; None marks an insertion/deletion.

    Ties prefer match/substitution, then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]))
    pairs = []
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            pairs.append((i - 1, None))
            i -= 1
        else:
            pairs.append((None, j - 1))
            j -= 1
    pairs.reverse()
    return pairs


def wer(ref: Sequence[str], hyp: Sequence[str]) -> float:
    return edit_distance(ref, hyp) / max(1, len(ref))


def cer(ref: str, hyp: str) -> float:
    return edit_distance(ref, hyp) / max(1, len(ref))


def jaro(a: str, b: str) -> float:
    if a == b:
        return 1.0
    la, lb = len(a), len(b)
    if not la or not lb:
        return 0.0
    window = max(0, max(la, lb) // 2 - 1)
    a_hit = [False] * la
    b_hit = [False] * lb
    matches = 0
    for i, ch in enumerate(a):
        for j in range(max(0, i - window), min(lb, i + window + 1)):
            if not b_hit[j] and b[j] == ch:
                a_hit[i] = b_hit[j] = True
                matches += 1
                break
    if not matches:
        return 0.0
    a_seq = [ch for ch, hit in zip(a, a_hit) if hit]
    b_seq = [ch for ch, hit in zip(b, b_hit) if hit]
    # integer halving, as in Winkler's reference code
    transpositions = sum(x != y for x, y in zip(a_seq, b_seq)) // 2
    return (matches / la + matches / lb + (matches - transpositions) / matches) / 3


def jaro_winkler(a: str, b: str, prefix_weight: float = 0.1, max_prefix: int = 4,
                 boost_threshold: float = 0.7) -> float:
    """Jaro similarity with Winkler's common-prefix boost.

    The boost applies only when the Jaro score exceeds ``boost_threshold``
    (Winkler's original rule, also used by common reference libraries).
    """
    sim = jaro(a, b)
    if sim <= boost_threshold:
        return sim
    prefix = 0
    for x, y in zip(a[:max_prefix], b[:max_prefix]):
        if x != y:
            break
        prefix += 1
    return sim + prefix * prefix_weight * (1.0 - sim)


@dataclass(frozen=True)
class ExtractedEntity:
    label: str
    surface: str
    position: int  # index of the first word in the tag-stripped word sequence
    n_words: int = 1

    @property
    def word_range(self) -> range:
        return range(self.position, self.position + self.n_words)


def extract_entities(tagged: str) -> list[ExtractedEntity]:
    entities = []
    plain_parts = []
    cursor = 0
    open_at = None
    for m, label, closing in iter_tags(tagged):
        plain_parts.append(tagged[cursor:m.start()])
        cursor = m.end()
        prefix = "".join(plain_parts)
        if not closing:
            open_at = prefix
            continue
        surface = prefix[len(open_at):]
        if not surface.strip():
            raise TagError(f"empty <{label}> entity")
        first = len(open_at.split())
        if open_at and not open_at[-1].isspace() and not surface[0].isspace():
            first -= 1  # entity starts inside a word (glued punctuation)
        last = len(prefix.rstrip().split()) - 1
        entities.append(ExtractedEntity(label, surface.strip(), first, last - first + 1))
    return entities


@dataclass
class EntityPairing:
    pairs: list[tuple[ExtractedEntity, ExtractedEntity]] = field(default_factory=list)
    unmatched_ref: list[ExtractedEntity] = field(default_factory=list)
    unmatched_hyp: list[ExtractedEntity] = field(default_factory=list)


def _hyp_to_ref_positions(alignment, n_hyp: int) -> list[int]:
    """Map each hyp word index to a ref word index.

    Inserted words map to the next aligned ref word (trailing ones to the last).
    """
    out = [0] * n_hyp
    pending = []
    next_ref = 0
    for r, h in alignment:
        if r is not None:
            for p in pending:
                out[p] = r
            pending = []
            next_ref = r + 1
            if h is not None:
                out[h] = r
        elif h is not None:
            pending.append(h)
    for p in pending:
        out[p] = max(0, next_ref - 1)
    return out


def pair_entities(ref: Sequence[ExtractedEntity], hyp: Sequence[ExtractedEntity],
                  alignment, n_hyp_words: int) -> EntityPairing:
    """Greedy same-label pairing in reference order; a pair needs overlapping aligned word ranges."""
    to_ref = _hyp_to_ref_positions(alignment, n_hyp_words)

    def aligned(e: ExtractedEntity) -> range:
        idx = [to_ref[i] for i in e.word_range if i < n_hyp_words]
        if not idx:
            return range(0)
        return range(min(idx), max(idx) + 1)

    hyp_ranges = [aligned(h) for h in hyp]
    used = [False] * len(hyp)
    result = EntityPairing()
    for r in sorted(ref, key=lambda e: e.position):
        best = None
        for k in sorted(range(len(hyp)), key=lambda k: (hyp_ranges[k].start, k)):
            h = hyp[k]
            if used[k] or h.label != r.label:
                continue
            hr = hyp_ranges[k]
            if hr.start < r.word_range.stop and r.word_range.start < hr.stop:
                best = k
                break
        if best is None:
            result.unmatched_ref.append(r)
        else:
            used[best] = True
            result.pairs.append((r, hyp[best]))
    result.unmatched_hyp = [h for k, h in enumerate(hyp) if not used[k]]
    return result


@dataclass
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    distances: list[float] = field(default_factory=list)
    pairs: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn


def _prf(tp: int, fp: int, fn: int) -> dict:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return {"p": p, "r": r, "f1": f1, "support": tp + fn}


class Scorer:
    """Accumulates counts over any number of documents; merging is order-independent."""

    def __init__(self):
        self.counts: dict[str, LabelCounts] = defaultdict(LabelCounts)
        self.word_edits = 0
        self.ref_words = 0

    def add_pairing(self, pairing: EntityPairing) -> None:
        for r, h in pairing.pairs:
            c = self.counts[r.label]
            c.pairs += 1
            if r.label in NUMERIC_LABELS:
                c.distances.append(cer(r.surface, h.surface))
            else:
                c.distances.append(jaro_winkler(r.surface, h.surface))
            if r.surface == h.surface:
                c.tp += 1
            else:
                c.fn += 1
                self.counts[h.label].fp += 1
        for r in pairing.unmatched_ref:
            self.counts[r.label].fn += 1
        for h in pairing.unmatched_hyp:
            self.counts[h.label].fp += 1

    def add(self, ref_tagged: str, hyp_tagged: str) -> EntityPairing:
        ref_norm, hyp_norm = normalize_for_wer(ref_tagged), normalize_for_wer(hyp_tagged)
        self.word_edits += edit_distance(ref_norm, hyp_norm)
        self.ref_words += len(ref_norm)
        ref_words = [normalize_word(w) for w in stripped_words(ref_tagged)]
        hyp_words = [normalize_word(w) for w in stripped_words(hyp_tagged)]
        pairing = pair_entities(extract_entities(ref_tagged), extract_entities(hyp_tagged),
                                align(ref_words, hyp_words), len(hyp_words))
        self.add_pairing(pairing)
        return pairing

    def merge(self, other: "Scorer") -> None:
        for label, c in other.counts.items():
            mine = self.counts[label]
            mine.tp += c.tp
            mine.fp += c.fp
            mine.fn += c.fn
            mine.pairs += c.pairs
            mine.distances.extend(c.distances)
        self.word_edits += other.word_edits
        self.ref_words += other.ref_words

    def ner_scores(self) -> dict:
        rows = {label: _prf(c.tp, c.fp, c.fn) for label, c in self.counts.items()
                if c.tp + c.fp + c.fn}
        tp = sum(c.tp for c in self.counts.values())
        fp = sum(c.fp for c in self.counts.values())
        fn = sum(c.fn for c in self.counts.values())
        ordered = {label: rows[label] for label in LABELS if label in rows}
        ordered["micro"] = _prf(tp, fp, fn)
        return ordered

    def formatting_report(self) -> dict:
        out = {}
        for label in LABELS:
            c = self.counts.get(label)
            if c is None or not c.support:
                continue
            out[label] = {
                "metric": "cer" if label in NUMERIC_LABELS else "jw",
                "mean": sum(c.distances) / len(c.distances) if c.distances else None,
                "pairs": c.pairs,
                "coverage": c.pairs / c.support,
            }
        return out

    def wer(self) -> float:
        return self.word_edits / max(1, self.ref_words)

    def report(self) -> dict:
        return {"ner": self.ner_scores(), "format": self.formatting_report(), "wer": self.wer()}


def ner_scores(pairing: EntityPairing) -> dict:
    s = Scorer()
    s.add_pairing(pairing)
    return s.ner_scores()


def formatting_report(pairing: EntityPairing) -> dict:
    s = Scorer()
    s.add_pairing(pairing)
    return s.formatting_report()


def evaluate(pairs: Iterable[tuple[str, str]]) -> dict:
    """Corpus report for (reference, hypothesis) tagged transcripts."""
    s = Scorer()
    for ref, hyp in pairs:
        s.add(ref, hyp)
    return s.report()


def aligned_bio_accuracy(ref_tagged: str, hyp_tagged: str) -> float:
    """Token accuracy of BIO labels over aligned (matched or substituted) word positions.

    Debug aid only: with unaligned ASR output this is not a seqeval accuracy.
    """
    def bio(tagged: str) -> list[str]:
        n = len(stripped_words(tagged))
        tags = ["O"] * n
        for e in extract_entities(tagged):
            for k, i in enumerate(e.word_range):
                if i < n:
                    tags[i] = ("B-" if k == 0 else "I-") + e.label
        return tags

    ref_words = [normalize_word(w) for w in stripped_words(ref_tagged)]
    hyp_words = [normalize_word(w) for w in stripped_words(hyp_tagged)]
    rt, ht = bio(ref_tagged), bio(hyp_tagged)
    aligned_pairs = [(r, h) for r, h in align(ref_words, hyp_words) if r is not None and h is not None]
    if not aligned_pairs:
        return 0.0
    return sum(rt[r] == ht[h] for r, h in aligned_pairs) / len(aligned_pairs)
