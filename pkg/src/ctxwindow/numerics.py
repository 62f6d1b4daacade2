"""Reference numerics for windowed training.

Label-smoothed cross entropy restricted to the mid window, positional
embedding extension for longer inputs, and the packing of short utterances
into 40 s training clips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LossInputError

PROB_FLOOR = 1e-12
DEFAULT_EPSILON = 0.1

# Recorded training settings; nothing in this package optimises a model.
TRAINING_DEFAULTS = {
    "batch_size": 32,
    "learning_rate": 1e-4,
    "weight_decay": 0.01,
    "warmup_fraction": 0.1,
    "optimizer": "adamw",
    "epochs_standard": 100,
    "epochs_windowed": 150,
}


@dataclass(frozen=True)
class TargetSequence:
    tokens: tuple[int, ...]
    t_mid: int
    t_right: int

    def __post_init__(self):
        if not 0 <= self.t_mid < self.t_right <= len(self.tokens):
            raise LossInputError(
                f"need 0 <= t_mid < t_right <= N, got t_mid={self.t_mid} "
                f"t_right={self.t_right} N={len(self.tokens)}")

    @classmethod
    def from_markers(cls, tokens: Sequence[int], mid_id: int, right_id: int) -> "TargetSequence":
        tokens = tuple(tokens)
        return cls(tokens, tokens.index(mid_id), tokens.index(right_id))


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 <= epsilon < 1.0:
        raise LossInputError(f"label smoothing factor must lie in [0, 1), got {epsilon}")


def smooth_targets(y: int, epsilon: float, vocab_size: int) -> np.ndarray:
    _check_epsilon(epsilon)
    if not 0 <= y < vocab_size:
        raise LossInputError(f"target id {y} outside vocabulary of {vocab_size}")
    p = np.full(vocab_size, epsilon / vocab_size)
    p[y] += 1.0 - epsilon
    return p


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def token_ce(p: np.ndarray, q: np.ndarray) -> float:
    q = np.maximum(q, PROB_FLOOR)
    return float(-(p * np.log(q)).sum())


def build_mid_mask(target: TargetSequence) -> np.ndarray:
    """m_i = 1 for t_mid <= i < t_right, else 0."""
    m = np.zeros(len(target.tokens))
    m[target.t_mid:target.t_right] = 1.0
    return m


def _validate_logits(logits, target: TargetSequence) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] != len(target.tokens):
        raise LossInputError(
            f"logits shape {logits.shape} does not match target length {len(target.tokens)}")
    if not np.isfinite(logits).all():
        raise LossInputError("logits contain non-finite values")
    return logits


def per_token_ce(logits, target: TargetSequence, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    _check_epsilon(epsilon)
    logits = _validate_logits(logits, target)
    n, vocab = logits.shape
    y = np.asarray(target.tokens)
    if (y < 0).any() or (y >= vocab).any():
        raise LossInputError("target ids outside the vocabulary")
    p = np.full((n, vocab), epsilon / vocab)
    p[np.arange(n), y] += 1.0 - epsilon
    q = np.maximum(softmax(logits), PROB_FLOOR)
    return -(p * np.log(q)).sum(axis=1)


def masked_loss(logits, target: TargetSequence, epsilon: float = DEFAULT_EPSILON) -> float:
    ce = per_token_ce(logits, target, epsilon)
    m = build_mid_mask(target)
    denom = m.sum()
    if denom == 0:
        raise LossInputError("mask selects no tokens")
    return float((m * ce).sum() / denom)


def masked_loss_grad(logits, target: TargetSequence, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Analytic gradient of :func:`masked_loss` w.r.t. the logits (no clamping)."""
    logits = _validate_logits(logits, target)
    n, vocab = logits.shape
    p = np.full((n, vocab), epsilon / vocab)
    p[np.arange(n), np.asarray(target.tokens)] += 1.0 - epsilon
    m = build_mid_mask(target)
    return (m / m.sum())[:, None] * (softmax(logits) - p)


def extend_positional_embeddings(table: np.ndarray, rows_per_second: int, new_seconds: float,
                                 seed: int) -> np.ndarray:
    """Append rows so the table covers ``new_seconds`` of audio.

    New entries are uniform on [mu - a, mu + a] with mu the mean of the
    existing entries and a = sqrt(3) * their standard deviation, so the
    appended entries share the original first two moments.
    """
    table = np.asarray(table)
    rows, dim = table.shape
    target_rows = math.ceil(new_seconds * rows_per_second)
    if target_rows <= rows:
        raise ValueError(f"{new_seconds} s needs {target_rows} rows; table already has {rows}")
    mu = float(table.mean())
    half_width = math.sqrt(3.0) * float(table.std())
    extra = target_rows - rows
    if half_width == 0.0:
        new = np.full((extra, dim), mu, dtype=table.dtype)
    else:
        rng = np.random.default_rng(seed)
        new = rng.uniform(mu - half_width, mu + half_width, size=(extra, dim)).astype(table.dtype)
    return np.concatenate([table, new], axis=0)


@dataclass(frozen=True)
class ConcatPlan:
    sources: tuple[int, ...]           # indices into the input segment list
    durations_ms: tuple[int, ...]
    silences_ms: tuple[int, ...]       # len(sources) - 1 entries

    @property
    def total_ms(self) -> int:
        return sum(self.durations_ms) + sum(self.silences_ms)


def plan_concatenation(segments_ms: Sequence[int], target_ms: int = 40_000,
                       silence_bounds_ms: tuple[int, int] = (200, 500),
                       seed: int = 0) -> list[ConcatPlan]:
    """Greedy in-order packing with a seeded silence between neighbours.

    A silence is drawn for every candidate join, accepted or not, so the
    draw sequence depends only on the input length.
    """
    lo, hi = silence_bounds_ms
    if not 0 <= lo <= hi:
        raise ValueError("bad silence bounds")
    rng = np.random.default_rng(seed)
    plans = []
    cur: list[int] = []
    gaps: list[int] = []
    total = 0

    def close():
        plans.append(ConcatPlan(tuple(cur), tuple(int(segments_ms[i]) for i in cur), tuple(gaps)))

    for i, dur in enumerate(segments_ms):
        if dur > target_ms:
            raise ValueError(f"segment {i} lasts {dur} ms, longer than the {target_ms} ms target")
        if not cur:
            cur, gaps, total = [i], [], dur
            continue
        silence = int(rng.integers(lo, hi + 1))
        if total + silence + dur <= target_ms:
            cur.append(i)
            gaps.append(silence)
            total += silence + dur
        else:
            close()
            cur, gaps, total = [i], [], dur
    if cur:
        close()
    return plans
