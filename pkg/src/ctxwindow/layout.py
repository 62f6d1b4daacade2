"""Training-text layout and the tokenizer extension manifest."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .annotate import LABELS
from .errors import CtxWindowError

LEFT, MID, RIGHT = "<|left|>", "<|mid|>", "<|right|>"
WINDOW_TOKENS = (LEFT, MID, RIGHT)
SOT = "<|startoftranscript|>"
EOT = "<|endoftext|>"

# multilingual Whisper vocabulary, used when no base size is given
DEFAULT_BASE_VOCAB = 51865
TIME_QUANTUM_MS = 20

TIMESTAMP_RE = re.compile(r"<\|t=(\d+\.\d{2})\|>")
_WINDOWED_RE = re.compile(
    re.escape(LEFT) + r"(.*)" + re.escape(MID) + re.escape(SOT) + r"(.*)"
    + re.escape(EOT) + re.escape(RIGHT) + r"(.*)", re.S)


@dataclass(frozen=True)
class ManifestToken:
    text: str
    token_class: str  # "normal" | "special"
    id: int


@dataclass(frozen=True)
class TokenizerManifest:
    base_vocab_size: int
    tokens: tuple[ManifestToken, ...]

    @property
    def tag_tokens(self) -> list[str]:
        return [t.text for t in self.tokens if t.token_class == "normal"]

    @property
    def window_tokens(self) -> list[str]:
        return [t.text for t in self.tokens if t.token_class == "special"]

    def id_of(self, text: str) -> int:
        for tok in self.tokens:
            if tok.text == text:
                return tok.id
        raise KeyError(text)

    def to_dict(self) -> dict:
        return {
            "base_vocab_size": self.base_vocab_size,
            "tokens": [{"text": t.text, "class": t.token_class, "id": t.id} for t in self.tokens],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TokenizerManifest":
        return cls(data["base_vocab_size"],
                   tuple(ManifestToken(t["text"], t["class"], t["id"]) for t in data["tokens"]))


def build_tokenizer_manifest(labels: Sequence[str] = LABELS,
                             base_vocab_size: int = DEFAULT_BASE_VOCAB) -> TokenizerManifest:
    """Open/close tag per label (normal tokens), then the three window markers (special).

    Ids run contiguously from ``base_vocab_size`` in that order.
    """
    seen = set()
    for label in labels:
        if label in seen:
            raise CtxWindowError(f"duplicate label {label!r}")
        seen.add(label)
    texts = []
    for lab in labels:
        texts += [(f"<{lab}>", "normal"), (f"</{lab}>", "normal")]
    texts += [(w, "special") for w in WINDOW_TOKENS]
    return TokenizerManifest(base_vocab_size, tuple(
        ManifestToken(text, cls, base_vocab_size + i) for i, (text, cls) in enumerate(texts)))


@dataclass(frozen=True)
class RenderedChunk:
    text: str
    marker_positions: tuple[tuple[str, int], ...]  # (marker, char offset)


def _with_positions(parts: list[tuple[bool, str]]) -> RenderedChunk:
    out = []
    positions = []
    pos = 0
    for is_marker, piece in parts:
        if is_marker:
            positions.append((piece, pos))
        out.append(piece)
        pos += len(piece)
    return RenderedChunk("".join(out), tuple(positions))


def render_windowed_chunk(texts: dict[str, str]) -> RenderedChunk:
    """``<|left|>L<|mid|><|startoftranscript|>M<|endoftext|><|right|>R``."""
    return _with_positions([
        (True, LEFT), (False, texts["left"]),
        (True, MID), (True, SOT), (False, texts["mid"]), (True, EOT),
        (True, RIGHT), (False, texts["right"]),
    ])


def parse_windowed(text: str) -> dict[str, str]:
    m = _WINDOWED_RE.fullmatch(text)
    if m is None:
        raise CtxWindowError("text is not a windowed-chunk rendering")
    return dict(zip(("left", "mid", "right"), m.groups()))


def format_timestamp(ms: int) -> str:
    q = (ms + TIME_QUANTUM_MS // 2) // TIME_QUANTUM_MS * TIME_QUANTUM_MS  # half up
    return f"<|t={q // 1000}.{(q % 1000) // 10:02d}|>"


def render_standard_chunk(pieces: Sequence[tuple[str, int, int]],
                          extent: tuple[int, int]) -> RenderedChunk:
    """Timestamp markers at the chunk start, the gap nearest its temporal midpoint, and its end.

    ``pieces`` are the chunk's uncuttable blocks as (tagged text, start ms,
    end ms); the middle marker goes between two of them, never inside one.
    Times are chunk-relative.
    """
    start, end = extent
    half = (end - start) / 2
    best = None
    for i in range(1, len(pieces)):
        gap = (pieces[i - 1][2] + pieces[i][1]) / 2 - start
        if best is None or abs(gap - half) < abs(best[1] - half):
            best = (i, gap)

    parts: list[tuple[bool, str]] = [(True, format_timestamp(0))]
    for i, (text, _, _) in enumerate(pieces):
        if i:
            if i == best[0]:
                parts.append((True, format_timestamp(int(best[1]))))
            parts.append((False, " "))
        parts.append((False, text))
    parts.append((True, format_timestamp(end - start)))
    return _with_positions(parts)


def strip_timestamps(text: str) -> str:
    return TIMESTAMP_RE.sub("", text)
