"""Standard (30 s / 5 s overlap) and windowed (5+30+5 s) chunk planning.

Planning works on *blocks*: the smallest token groups a chunk edge may not
cut through. A block is a word with the punctuation glued after it, widened to
cover any entity span it touches. Every edge therefore lands in a token gap
that is entity-free by construction.

Edge rules, for a nominal edge time ``T``:

* inner edges (left|mid, mid|right) and the end of a standard chunk: a block
  crossing ``T`` goes wholly to the later side;
* the start of a left window: a block crossing ``T`` is dropped (window shrinks);
* the end of a right window: a crossing block is dropped, unless it is the
  block that was pushed out of the mid, in which case the window is extended
  to that block's end.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

from .annotate import AnnotatedTranscript, embed_tags
from .errors import ChunkingError

WINDOWS = ("left", "mid", "right")


def _ms(seconds: float) -> int:
    return int(round(seconds * 1000))


@dataclass(frozen=True)
class WindowConfig:
    left_s: float = 5.0
    mid_s: float = 30.0
    right_s: float = 5.0

    def __post_init__(self):
        if min(self.left_s, self.mid_s, self.right_s) <= 0:
            raise ValueError("window lengths must be positive")
        if self.left_s > self.mid_s:
            raise ValueError("left window may not exceed the mid window")

    @property
    def total_s(self) -> float:
        return self.left_s + self.mid_s + self.right_s

    @property
    def left_ms(self) -> int:
        return _ms(self.left_s)

    @property
    def mid_ms(self) -> int:
        return _ms(self.mid_s)

    @property
    def right_ms(self) -> int:
        return _ms(self.right_s)


@dataclass(frozen=True)
class StandardChunkConfig:
    len_s: float = 30.0
    stride_s: float = 5.0  # overlap between consecutive chunks

    def __post_init__(self):
        if not 0 < self.stride_s < self.len_s:
            raise ValueError("need 0 < stride_s < len_s")

    @property
    def len_ms(self) -> int:
        return _ms(self.len_s)

    @property
    def stride_ms(self) -> int:
        return _ms(self.stride_s)

    @property
    def hop_ms(self) -> int:
        return self.len_ms - self.stride_ms


@dataclass(frozen=True)
class Block:
    first: int  # first token index
    stop: int   # one past the last token index
    start: int  # ms
    end: int    # ms
    spans: tuple[int, ...] = ()  # indices into AnnotatedTranscript.spans

    @property
    def duration(self) -> int:
        return self.end - self.start


class BlockLayout:
    """Uncuttable token groups of one annotated transcript, in time order."""

    def __init__(self, annotated: AnnotatedTranscript):
        tr = annotated.transcript
        n = len(tr)
        inside = set()
        for span in annotated.spans:
            inside.update(range(span.start_token + 1, span.end_token + 1))
        words = [i for i, t in enumerate(tr.tokens) if t.is_word]
        cuts = [0] + [i for i in words if i > 0 and i not in inside] + [n]
        cuts = sorted(set(cuts))

        span_of_token = {}
        for si, span in enumerate(annotated.spans):
            for i in span.tokens():
                span_of_token[i] = si

        blocks = []
        for a, b in zip(cuts, cuts[1:]):
            timed = [tr.tokens[i] for i in range(a, b) if tr.tokens[i].is_word]
            if timed:
                start, end = timed[0].start, timed[-1].end
            else:
                start = end = 0
            spans = tuple(sorted({span_of_token[i] for i in range(a, b) if i in span_of_token}))
            blocks.append(Block(a, b, start, end, spans))
        self.annotated = annotated
        self.blocks: tuple[Block, ...] = tuple(blocks)
        self.n_tokens = n
        self._starts = [blk.start for blk in blocks]
        self._ends = [blk.end for blk in blocks]
        self._by_first = {blk.first: k for k, blk in enumerate(blocks)}

    def __len__(self) -> int:
        return len(self.blocks)

    def first_ending_after(self, t: int) -> int:
        """Index of the first block with end > t."""
        return bisect.bisect_right(self._ends, t)

    def first_starting_at(self, t: int) -> int:
        """Index of the first block with start >= t."""
        return bisect.bisect_left(self._starts, t)

    def first_centered_at(self, t: int) -> int:
        """Index of the first block whose temporal midpoint is >= t."""
        lo, hi = 0, len(self.blocks)
        while lo < hi:
            m = (lo + hi) // 2
            if self._starts[m] + self._ends[m] < 2 * t:
                lo = m + 1
            else:
                hi = m
        return lo

    def token(self, block_index: int) -> int:
        if block_index >= len(self.blocks):
            return self.n_tokens
        return self.blocks[block_index].first

    def block_of(self, token_index: int) -> int:
        if token_index >= self.n_tokens:
            return len(self.blocks)
        return self._by_first[token_index]

    def entity_blocks(self):
        return [b for b in self.blocks if b.spans]


@dataclass(frozen=True)
class StandardChunk:
    doc_id: str
    chunk_index: int
    token_range: tuple[int, int]
    time_extent: tuple[int, int]
    nominal_extent: tuple[int, int]


@dataclass(frozen=True)
class WindowedChunk:
    doc_id: str
    chunk_index: int
    left_range: tuple[int, int]
    mid_range: tuple[int, int]
    right_range: tuple[int, int]
    left_extent: tuple[int, int]
    mid_extent: tuple[int, int]
    right_extent: tuple[int, int]
    assignment: tuple[tuple[int, str], ...] = field(default=())  # (span index, window)

    def range_of(self, window: str) -> tuple[int, int]:
        return getattr(self, f"{window}_range")

    def extent_of(self, window: str) -> tuple[int, int]:
        return getattr(self, f"{window}_extent")

    @property
    def token_range(self) -> tuple[int, int]:
        return self.left_range[0], self.right_range[1]


def _check_entity_lengths(layout: BlockLayout, limit_ms: int, what: str) -> None:
    for blk in layout.entity_blocks():
        if blk.duration > limit_ms:
            spans = [layout.annotated.spans[i] for i in blk.spans]
            desc = ", ".join(f"{s.label}@{s.start_token}..{s.end_token}" for s in spans)
            raise ChunkingError(
                f"entity {desc} lasts {blk.duration} ms, longer than {what} ({limit_ms} ms)")


def plan_standard_chunks(annotated: AnnotatedTranscript,
                         cfg: StandardChunkConfig = StandardChunkConfig(),
                         layout: BlockLayout | None = None) -> list[StandardChunk]:
    layout = layout or BlockLayout(annotated)
    _check_entity_lengths(layout, cfg.len_ms, "the chunk length")
    tr = annotated.transcript
    dur = tr.duration
    nb = len(layout)
    chunks = []
    j = 0
    while True:
        nom_start = j * cfg.hop_ms
        nom_end = nom_start + cfg.len_ms
        last = nom_end >= dur
        b0 = 0 if j == 0 else layout.first_ending_after(nom_start)
        b1 = nb if last else layout.first_ending_after(nom_end)

        start_t = nom_start
        if b0 < nb and layout.blocks[b0].start < nom_start:
            start_t = layout.blocks[b0].start
        if last:
            end_t = dur
        elif b1 < nb and layout.blocks[b1].start < nom_end:
            end_t = max(layout.blocks[b1].start, start_t)
        else:
            end_t = nom_end
        chunks.append(StandardChunk(
            tr.doc_id, j, (layout.token(b0), layout.token(b1)), (start_t, end_t),
            (nom_start, min(nom_end, dur))))
        if last:
            return chunks
        j += 1


def n_windowed_chunks(duration_ms: int, cfg: WindowConfig) -> int:
    return max(1, math.ceil(duration_ms / cfg.mid_ms))


def _grid_chunk(layout: BlockLayout, k: int, n_chunks: int, cfg: WindowConfig) -> WindowedChunk:
    """Nominal windows before any entity handling: blocks go where their midpoint falls."""
    dur = layout.annotated.transcript.duration
    nb = len(layout)
    ms, me = k * cfg.mid_ms, min((k + 1) * cfg.mid_ms, dur)
    last = k == n_chunks - 1
    mid0 = 0 if k == 0 else layout.first_centered_at(ms)
    mid1 = nb if last else layout.first_centered_at(me)
    if k == 0:
        left0, left_ext = mid0, (0, 0)
    else:
        ls = max(0, ms - cfg.left_ms)
        left0, left_ext = min(layout.first_centered_at(ls), mid0), (ls, ms)
    if last:
        right1, right_ext = mid1, (dur, dur)
    else:
        re_ = min(me + cfg.right_ms, dur)
        right1, right_ext = max(layout.first_centered_at(re_), mid1), (me, re_)
    tok = layout.token
    return WindowedChunk(
        layout.annotated.transcript.doc_id, k,
        (tok(left0), tok(mid0)), (tok(mid0), tok(mid1)), (tok(mid1), tok(right1)),
        left_ext, (ms, me), right_ext)


def reassign_boundary_entities(chunk: WindowedChunk, layout: BlockLayout) -> WindowedChunk:
    """Move every block crossing the left|mid or mid|right boundary wholly into the later window."""
    l0, _ = chunk.left_range
    _, r1 = chunk.right_range
    mid0, mid1 = chunk.mid_range
    ms, me = chunk.mid_extent
    if chunk.chunk_index > 0:
        mid0 = layout.token(layout.first_ending_after(ms))
    if chunk.right_extent[1] > chunk.right_extent[0]:  # not the last chunk
        mid1 = layout.token(layout.first_ending_after(me))
    mid1 = max(mid1, mid0)
    l0 = min(l0, mid0)
    r1 = max(r1, mid1)
    return replace(chunk, left_range=(l0, mid0), mid_range=(mid0, mid1), right_range=(mid1, r1))


def snap_outer_edges(chunk: WindowedChunk, layout: BlockLayout) -> WindowedChunk:
    """Trim blocks crossing the outer edges; extend the right edge over a block pushed out of the mid."""
    blocks = layout.blocks
    nb = len(blocks)
    (l0, l1), (r0, r1) = chunk.left_range, chunk.right_range
    (ls, le), (rs, re_) = chunk.left_extent, chunk.right_extent

    if le > ls:
        b = layout.first_starting_at(ls)
        l0 = min(layout.token(b), l1)
        if b > 0 and blocks[b - 1].end > ls:
            ls = min(blocks[b - 1].end, le)

    if re_ > rs:
        b = layout.first_ending_after(re_)
        pushed = layout.block_of(r0)
        if pushed < nb and blocks[pushed].start < rs and blocks[pushed].end > re_:
            b = max(b, pushed + 1)
            re_ = blocks[pushed].end
        elif b < nb and blocks[b].start < re_:
            re_ = max(blocks[b].start, rs)
        r1 = max(layout.token(b), r0)
    return replace(chunk, left_range=(l0, l1), right_range=(r0, r1),
                   left_extent=(ls, le), right_extent=(rs, re_))


def _assignment(chunk: WindowedChunk, annotated: AnnotatedTranscript) -> tuple[tuple[int, str], ...]:
    out = []
    for si, span in enumerate(annotated.spans):
        for w in WINDOWS:
            a, b = chunk.range_of(w)
            if a <= span.start_token and span.end_token < b:
                out.append((si, w))
                break
    return tuple(out)


def plan_windowed_chunks(annotated: AnnotatedTranscript, cfg: WindowConfig = WindowConfig(),
                         layout: BlockLayout | None = None) -> list[WindowedChunk]:
    layout = layout or BlockLayout(annotated)
    _check_entity_lengths(layout, cfg.mid_ms, "the mid window")
    n = n_windowed_chunks(annotated.transcript.duration, cfg)
    chunks = []
    for k in range(n):
        chunk = _grid_chunk(layout, k, n, cfg)
        chunk = reassign_boundary_entities(chunk, layout)
        chunk = snap_outer_edges(chunk, layout)
        chunks.append(replace(chunk, assignment=_assignment(chunk, annotated)))
    return chunks


def window_texts(chunk: WindowedChunk, annotated: AnnotatedTranscript) -> dict[str, str]:
    return {w: embed_tags(annotated, *chunk.range_of(w)) for w in WINDOWS}


def timed_pieces(annotated: AnnotatedTranscript, layout: BlockLayout,
                 token_range: tuple[int, int]) -> list[tuple[str, int, int]]:
    """Tagged text of each block inside ``token_range`` with its (start, end) ms."""
    b0, b1 = layout.block_of(token_range[0]), layout.block_of(token_range[1])
    return [(embed_tags(annotated, blk.first, blk.stop), blk.start, blk.end)
            for blk in layout.blocks[b0:b1]]
