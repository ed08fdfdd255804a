"""Translation Edit Rate with greedy block shifts, and HTER labels.

TER is the number of word edits (insertions, deletions, substitutions and
block shifts, each costing one) needed to turn a hypothesis into a reference,
divided by the reference length. Shifts are found greedily in the tercom
manner: at each step apply the legal block move that lowers the remaining
edit distance the most, until nothing helps.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import _accel

TokenSeq = tuple  # tuple[str, ...]


@dataclass(frozen=True)
class NormalizationConfig:
    lowercase: bool = True
    split_punct: bool = True


@dataclass(frozen=True)
class ShiftConfig:
    """Greedy shift limits; ``max_block=0`` disables shifting."""

    max_block: int = 10
    max_distance: int = 50

    def __post_init__(self):
        if self.max_block < 0 or self.max_distance < 0:
            raise ValueError("shift limits must be non-negative")


DEFAULT_NORMALIZATION = NormalizationConfig()
DEFAULT_SHIFTS = ShiftConfig()
NO_SHIFTS = ShiftConfig(max_block=0)


@dataclass(frozen=True)
class TERAlignment:
    insertions: int
    deletions: int
    substitutions: int
    shifts: int
    ref_length: int
    score: float
    # (start, length, dest) of each applied move, in order
    shift_trace: tuple = field(default=(), compare=False)
    shifted_hypothesis: tuple = field(default=(), compare=False)

    @property
    def edits(self) -> int:
        return self.insertions + self.deletions + self.substitutions + self.shifts


def _is_punct(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat[0] == "P" or cat[0] == "S"


def normalize(raw_text: str, config: NormalizationConfig = DEFAULT_NORMALIZATION) -> TokenSeq:
    """Tokenize ``raw_text`` into a tuple of word tokens.

    >>> normalize("Hello, world")
    ('hello', ',', 'world')
    """
    text = raw_text.lower() if config.lowercase else raw_text
    if config.split_punct:
        out = []
        n = len(text)
        for i, ch in enumerate(text):
            # keep decimal points and thousands separators inside numbers
            if (
                ch in ".,"
                and 0 < i < n - 1
                and text[i - 1].isdigit()
                and text[i + 1].isdigit()
            ):
                out.append(ch)
            elif _is_punct(ch):
                out.append(f" {ch} ")
            else:
                out.append(ch)
        text = "".join(out)
    return tuple(text.split())


def _encode(*seqs: Sequence[str]) -> list[list[int]]:
    vocab: dict[str, int] = {}
    return [[vocab.setdefault(tok, len(vocab)) for tok in seq] for seq in seqs]


def edit_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """Word-level Levenshtein distance with unit costs."""
    h, r = _encode(hyp, ref)
    return _accel.levenshtein(h, r)


def _apply_shift(seq: list, start: int, length: int, dest: int) -> list:
    block = seq[start:start + length]
    rest = seq[:start] + seq[start + length:]
    return rest[:dest] + block + rest[dest:]


def compute_ter(
    hyp: Sequence[str], ref: Sequence[str], config: ShiftConfig = DEFAULT_SHIFTS
) -> TERAlignment:
    h, r = _encode(hyp, ref)
    words = list(hyp)
    trace = []
    if config.max_block > 0 and r:
        while True:
            gain, start, length, dest = _accel.best_shift(h, r, config.max_block, config.max_distance)
            if gain <= 0:
                break
            h = _apply_shift(h, start, length, dest)
            words = _apply_shift(words, start, length, dest)
            trace.append((start, length, dest))
    ins, dels, subs = _accel.edit_ops(h, r)
    shifts = len(trace)
    ref_len = len(r)
    score = (ins + dels + subs + shifts) / max(ref_len, 1)
    return TERAlignment(ins, dels, subs, shifts, ref_len, score, tuple(trace), tuple(words))


def clamp_hter(value: float) -> float:
    return min(1.0, max(0.0, float(value)))


def compute_hter(
    mt: Sequence[str], post_edit: Sequence[str], config: ShiftConfig = DEFAULT_SHIFTS
) -> float:
    """Sentence HTER of ``mt`` against its post-edit, clamped to [0, 1]."""
    return clamp_hter(compute_ter(mt, post_edit, config).score)


def format_report(alignments: Iterable[TERAlignment], ids: Iterable | None = None) -> str:
    """tercom-style per-pair lines: ``Score: <score> (<edits>/<ref_len>)``."""
    lines = []
    alignments = list(alignments)
    ids = list(ids) if ids is not None else list(range(len(alignments)))
    total_edits = total_len = 0
    for seg, al in zip(ids, alignments):
        lines.append(f"Sentence ID: {seg}")
        lines.append(f"Score: {al.score:.6f} ({al.edits}/{al.ref_length})")
        total_edits += al.edits
        total_len += al.ref_length
    if alignments:
        lines.append(f"Total TER: {total_edits / max(total_len, 1):.6f} ({total_edits}/{total_len})")
    return "\n".join(lines) + "\n"
