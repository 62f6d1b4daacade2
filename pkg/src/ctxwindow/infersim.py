"""Long-form inference simulation for the standard and windowed models.

A transcriber is any callable taking a :class:`SegmentRequest` and returning
a :class:`TranscriberOutput`. The windowed path stitches per-segment mid
texts without merging; the standard path merges overlapping segments using
piece timestamps.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .annotate import TAG_RE, AnnotatedTranscript
from .chunk import (BlockLayout, StandardChunkConfig, WindowConfig, n_windowed_chunks,
                    plan_standard_chunks, plan_windowed_chunks, timed_pieces)
from .errors import CtxWindowError, ProtocolViolation
from .layout import LEFT, MID, RIGHT, SOT, EOT

_MARKERS = (LEFT, MID, RIGHT, SOT, EOT)


class AudioSpanPolicy(str, Enum):
    LEFT_MID = "left-mid"
    MID_RIGHT = "mid-right"


@dataclass(frozen=True)
class TimedPiece:
    text: str
    start: int | None = None
    end: int | None = None


@dataclass(frozen=True)
class SegmentRequest:
    index: int
    kind: str                         # "windowed" | "standard"
    audio_span: tuple[int, int]
    expected_output: tuple[int, int]  # the mid window (windowed) or the audio span (standard)
    policy: str
    prompt: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class TranscriberOutput:
    pieces: tuple[TimedPiece, ...] = ()

    @property
    def text(self) -> str:
        return " ".join(p.text for p in self.pieces)

    @classmethod
    def from_json(cls, line: str) -> "TranscriberOutput":
        data = json.loads(line)
        return cls(tuple(TimedPiece(p["text"], p.get("start"), p.get("end"))
                         for p in data.get("pieces", [])))

    def to_json(self) -> str:
        return json.dumps({"pieces": [asdict(p) for p in self.pieces]}, sort_keys=True)


Transcriber = Callable[[SegmentRequest], TranscriberOutput]


def segment_schedule(duration_ms: int, cfg: WindowConfig = WindowConfig(),
                     policy: AudioSpanPolicy = AudioSpanPolicy.MID_RIGHT) -> list[SegmentRequest]:
    policy = AudioSpanPolicy(policy)
    out = []
    for k in range(n_windowed_chunks(duration_ms, cfg)):
        ms, me = k * cfg.mid_ms, min((k + 1) * cfg.mid_ms, duration_ms)
        if k == 0:
            span = (0, me)
        elif policy is AudioSpanPolicy.LEFT_MID:
            span = (ms - cfg.left_ms, me)
        else:
            span = (ms, min(me + cfg.right_ms, duration_ms))
        out.append(SegmentRequest(k, "windowed", span, (ms, me), policy.value))
    return out


def standard_schedule(duration_ms: int, cfg: StandardChunkConfig = StandardChunkConfig()) -> list[SegmentRequest]:
    out = []
    j = 0
    while True:
        start = j * cfg.hop_ms
        end = min(start + cfg.len_ms, duration_ms)
        out.append(SegmentRequest(j, "standard", (start, end), (start, end), "standard"))
        if start + cfg.len_ms >= duration_ms:
            return out
        j += 1


def build_prompt(prev: TranscriberOutput | None, tail_from_ms: int = 0) -> str:
    """``<|left|>`` + previous pieces starting at or after ``tail_from_ms`` + ``<|mid|>``."""
    if prev is None or not prev.pieces:
        return LEFT + MID
    tail = []
    for piece in prev.pieces:
        if piece.start is None:
            raise CtxWindowError("previous segment output has no timestamps; cannot locate its tail")
        if piece.start >= tail_from_ms:
            tail.append(piece.text)
    return LEFT + " ".join(tail) + MID


def _ends_with_open_tag(text: str) -> bool:
    last = None
    for last in TAG_RE.finditer(text):
        pass
    return last is not None and last.end() == len(text) and last.group(1) == ""


def _check_windowed(req: SegmentRequest, out: TranscriberOutput, last: bool) -> None:
    for piece in out.pieces:
        if any(m in piece.text for m in _MARKERS):
            raise ProtocolViolation(req.index, f"window marker in output {piece.text!r}")
    ms, me = req.expected_output
    for piece in out.pieces:
        if piece.end is None:
            continue
        # a piece belongs to this mid iff it ends inside it (crossing pieces move later)
        if (req.index > 0 and piece.end <= ms) or (not last and piece.end > me):
            raise ProtocolViolation(
                req.index, f"text {piece.text!r} ({piece.start}..{piece.end} ms) "
                           f"lies outside the mid window {ms}..{me} ms")


def run_windowed_inference(transcriber: Transcriber, duration_ms: int,
                           cfg: WindowConfig = WindowConfig(),
                           policy: AudioSpanPolicy = AudioSpanPolicy.MID_RIGHT,
                           validate: bool = True) -> str:
    """Transcribe segment by segment and concatenate the mid texts."""
    schedule = segment_schedule(duration_ms, cfg, policy)
    stitched = ""
    prev = None
    for req in schedule:
        prompt = build_prompt(prev, req.expected_output[0] - cfg.left_ms) if req.index else LEFT + MID
        req = SegmentRequest(req.index, req.kind, req.audio_span, req.expected_output,
                             req.policy, prompt)
        out = transcriber(req)
        if validate:
            _check_windowed(req, out, req.index == len(schedule) - 1)
        text = out.text
        if text:
            if stitched and not _ends_with_open_tag(stitched):
                stitched += " "
            stitched += text
        prev = out
    return stitched


def _lcp(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def merge_standard_segments(outputs: Sequence[TranscriberOutput],
                            schedule: Sequence[SegmentRequest]) -> list[TimedPiece]:
    """Cut each overlap at its midpoint: a piece stays with the segment its end time falls in.

    If the surviving tail of one segment and head of the next still overlap in
    time, the pair is a duplicate: when one text is a prefix of the other the
    longer wins, otherwise the earlier segment's piece wins.
    """
    cuts = []
    for a, b in zip(schedule, schedule[1:]):
        cuts.append((b.audio_span[0] + a.audio_span[1]) / 2)
    merged: list[TimedPiece] = []
    for j, out in enumerate(outputs):
        lo = cuts[j - 1] if j > 0 else float("-inf")
        hi = cuts[j] if j < len(cuts) else float("inf")
        kept = []
        for piece in out.pieces:
            if piece.start is None or piece.end is None:
                raise CtxWindowError(f"segment {j}: piece {piece.text!r} has no timestamps")
            if lo < piece.end <= hi:
                kept.append(piece)
        while kept and merged and kept[0].start < merged[-1].end:
            a, b = merged[-1], kept[0]
            common = _lcp(a.text, b.text)
            if common == len(a.text) and len(b.text) > len(a.text):
                merged[-1] = b
            kept.pop(0)
        merged.extend(kept)
    return merged


def run_standard_inference(transcriber: Transcriber, duration_ms: int,
                           cfg: StandardChunkConfig = StandardChunkConfig()) -> str:
    schedule = standard_schedule(duration_ms, cfg)
    outputs = [transcriber(req) for req in schedule]
    return " ".join(p.text for p in merge_standard_segments(outputs, schedule))


@dataclass
class OracleTranscriber:
    """Answers from prepared per-segment pieces (a perfect model for tests and dry runs)."""

    windowed: list[list[TimedPiece]] = field(default_factory=list)
    standard: list[list[TimedPiece]] = field(default_factory=list)
    requests: list[SegmentRequest] = field(default_factory=list)

    def __call__(self, req: SegmentRequest) -> TranscriberOutput:
        self.requests.append(req)
        table = self.windowed if req.kind == "windowed" else self.standard
        return TranscriberOutput(tuple(table[req.index]))

    @classmethod
    def from_annotated(cls, annotated: AnnotatedTranscript,
                       window_cfg: WindowConfig = WindowConfig(),
                       standard_cfg: StandardChunkConfig = StandardChunkConfig()) -> "OracleTranscriber":
        layout = BlockLayout(annotated)
        win = [[TimedPiece(*p) for p in timed_pieces(annotated, layout, c.mid_range)]
               for c in plan_windowed_chunks(annotated, window_cfg, layout)]
        std = [[TimedPiece(*p) for p in timed_pieces(annotated, layout, c.token_range)]
               for c in plan_standard_chunks(annotated, standard_cfg, layout)]
        return cls(win, std)

    @classmethod
    def from_manifest(cls, records: Iterable[dict]) -> "OracleTranscriber":
        win, std = {}, {}
        for rec in records:
            table = win if rec["kind"] == "windowed" else std
            key = "mid" if rec["kind"] == "windowed" else "chunk"
            table[rec["idx"]] = [TimedPiece(t, s, e) for t, s, e in rec["pieces"][key]]
        return cls([win[k] for k in sorted(win)], [std[k] for k in sorted(std)])


class SubprocessTranscriber:
    """Out-of-process backend: one JSON request per line on stdin, one JSON response per line on stdout."""

    def __init__(self, command: Sequence[str]):
        self.proc = subprocess.Popen(list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, encoding="utf-8")

    def __call__(self, req: SegmentRequest) -> TranscriberOutput:
        try:
            self.proc.stdin.write(req.to_json() + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except BrokenPipeError:
            line = ""
        if not line:
            raise CtxWindowError(f"transcriber exited before answering segment {req.index}")
        return TranscriberOutput.from_json(line)

    def close(self) -> None:
        try:
            self.proc.stdin.close()
        except BrokenPipeError:
            pass
        self.proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
