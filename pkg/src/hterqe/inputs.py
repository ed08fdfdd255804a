"""Encoder input sequences for the three fine-tuning settings.

``SRC_MT``  ``[CLS] t [SEP] s [SEP]``  (translation first, then source)
``MT``      ``[CLS] t [SEP]``
``MT_MT``   ``[CLS] t [SEP] t' [SEP]`` where ``t'`` is another training
            translation whose HTER lies within a threshold of ``t``'s.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import QERecord
from .errors import NoCandidate

CLS = "[CLS]"
SEP = "[SEP]"
DEFAULT_MAX_LEN = 512


class Setting(str, enum.Enum):
    SRC_MT = "SRC_MT"
    MT = "MT"
    MT_MT = "MT_MT"

    @classmethod
    def parse(cls, text: str) -> "Setting":
        key = text.strip().upper().replace("-", "_").replace("'", "")
        aliases = {"SRCMT": "SRC_MT", "MTMT": "MT_MT"}
        return cls(aliases.get(key, key))


ALL_SETTINGS = (Setting.SRC_MT, Setting.MT, Setting.MT_MT)


@dataclass(frozen=True)
class InputSequence:
    tokens: tuple
    segment_ids: tuple
    origin: Setting
    record_id: int
    partner_id: Optional[int] = None

    def __len__(self):
        return len(self.tokens)


class Tokenizer:
    """Whitespace pass-through or greedy longest-match-first WordPiece."""

    def __init__(self, mode: str = "whitespace", vocab=None, unk_token: str = "[UNK]",
                 max_chars_per_word: int = 100):
        if mode not in ("whitespace", "wordpiece"):
            raise ValueError(f"unknown tokenizer mode {mode!r}")
        if mode == "wordpiece" and not vocab:
            raise ValueError("wordpiece mode needs a vocabulary")
        self.mode = mode
        self.vocab = frozenset(vocab) if vocab else None
        self.unk_token = unk_token
        self.max_chars_per_word = max_chars_per_word

    @classmethod
    def from_vocab_file(cls, path, **kwargs) -> "Tokenizer":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        return cls("wordpiece", [ln.strip() for ln in lines if ln.strip()], **kwargs)

    def _wordpiece(self, word: str) -> list:
        if len(word) > self.max_chars_per_word:
            return [self.unk_token]
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            piece = None
            while start < end:
                sub = word[start:end]
                if start > 0:
                    sub = "##" + sub
                if sub in self.vocab:
                    piece = sub
                    break
                end -= 1
            if piece is None:
                return [self.unk_token]
            pieces.append(piece)
            start = end
        return pieces

    def tokenize(self, words: Sequence[str]) -> list:
        if self.mode == "whitespace":
            return list(words)
        out = []
        for w in words:
            out.extend(self._wordpiece(w))
        return out

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "unk_token": self.unk_token,
            "vocab": sorted(self.vocab) if self.vocab else None,
        }

    @classmethod
    def from_description(cls, d: dict) -> "Tokenizer":
        return cls(d["mode"], d.get("vocab"), d.get("unk_token", "[UNK]"))


WHITESPACE = Tokenizer()


def truncate_pair(a: Sequence, b: Sequence, budget: int) -> tuple:
    """Trim the tails of two segments until ``len(a) + len(b) <= budget``.

    The longer segment loses a token first; on equal lengths the second
    segment goes first, so trimming alternates. A non-empty segment keeps at
    least one token as long as ``budget >= 2``.
    """
    la, lb = len(a), len(b)
    while la + lb > budget:
        if la > lb:
            la -= 1
        else:
            lb -= 1
    return list(a[:la]), list(b[:lb])


def _two_segment(first, second, origin, record_id, partner_id, max_len) -> InputSequence:
    if max_len < 5:
        raise ValueError("max_len must be at least 5 for two-segment inputs")
    first, second = truncate_pair(first, second, max_len - 3)
    tokens = [CLS, *first, SEP, *second, SEP]
    segs = [0] * (len(first) + 2) + [1] * (len(second) + 1)
    return InputSequence(tuple(tokens), tuple(segs), origin, record_id, partner_id)


def build_src_mt(record: QERecord, tok: Tokenizer = WHITESPACE, max_len: int = DEFAULT_MAX_LEN) -> InputSequence:
    return _two_segment(tok.tokenize(record.translation), tok.tokenize(record.source),
                        Setting.SRC_MT, record.id, None, max_len)


def build_mt(record: QERecord, tok: Tokenizer = WHITESPACE, max_len: int = DEFAULT_MAX_LEN) -> InputSequence:
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    t = tok.tokenize(record.translation)[: max_len - 2]
    tokens = (CLS, *t, SEP)
    return InputSequence(tokens, (0,) * len(tokens), Setting.MT, record.id, None)


def build_mt_mt(record: QERecord, partner: QERecord, tok: Tokenizer = WHITESPACE,
                max_len: int = DEFAULT_MAX_LEN) -> InputSequence:
    return _two_segment(tok.tokenize(record.translation), tok.tokenize(partner.translation),
                        Setting.MT_MT, record.id, partner.id, max_len)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _same(a: QERecord, b: QERecord) -> bool:
    return a.id == b.id and a.translation_raw == b.translation_raw


# labels carry 6 decimals; absorbs float error such as 0.4 - 0.3 > 0.1
_GAP_TOL = 1e-9


class PartnerIndex:
    """HTER-sorted view of a partner pool for fast threshold queries.

    ``candidates`` returns exactly the records ``sample_partner`` would
    consider, in pool order.
    """

    def __init__(self, pool: Sequence[QERecord]):
        self.pool = list(pool)
        labeled = [(r.hter, i) for i, r in enumerate(self.pool) if r.hter is not None]
        labeled.sort()
        self._hters = [h for h, _ in labeled]
        self._pos = [i for _, i in labeled]

    def candidates(self, record: QERecord, threshold: float) -> list:
        h = record.hter
        lo = bisect.bisect_left(self._hters, h - threshold - 2 * _GAP_TOL)
        hi = bisect.bisect_right(self._hters, h + threshold + 2 * _GAP_TOL)
        picked = sorted(
            i for i in self._pos[lo:hi]
            if abs(self.pool[i].hter - h) <= threshold + _GAP_TOL and not _same(self.pool[i], record)
        )
        return [self.pool[i] for i in picked]

    def nearest(self, record: QERecord) -> QERecord:
        return nearest_partner(record, self.pool)


def sample_partner(record: QERecord, pool, threshold: float = 0.1, rng_seed=0) -> QERecord:
    """Uniformly draw a pool record other than ``record`` with HTER within ``threshold``.

    ``pool`` is a sequence of records or a ``PartnerIndex``. Raises
    ``NoCandidate`` when the filtered pool is empty.
    """
    if record.hter is None:
        raise ValueError(f"record {record.id} has no HTER label")
    index = pool if isinstance(pool, PartnerIndex) else PartnerIndex(pool)
    cands = index.candidates(record, threshold)
    if not cands:
        raise NoCandidate(f"no partner within {threshold} of HTER {record.hter} for record {record.id}")
    return cands[int(_rng(rng_seed).integers(len(cands)))]


def nearest_partner(record: QERecord, pool: Sequence[QERecord]) -> QERecord:
    """Fallback partner: smallest HTER gap, ties to the lowest pool position."""
    best = None
    best_gap = None
    for r in pool:
        if _same(r, record) or r.hter is None:
            continue
        gap = abs(r.hter - record.hter)
        if best is None or gap < best_gap:
            best, best_gap = r, gap
    if best is None:
        raise NoCandidate(f"pool has no other labeled record for record {record.id}")
    return best


def choose_training_partner(record, pool, threshold, rng) -> QERecord:
    index = pool if isinstance(pool, PartnerIndex) else PartnerIndex(pool)
    try:
        return sample_partner(record, index, threshold, rng)
    except NoCandidate:
        return index.nearest(record)


def choose_inference_partner(record, pool, seed: int) -> QERecord:
    """Partner for a record whose HTER is unknown: uniform over the pool.

    Seeded per record id so the choice does not depend on corpus order.
    """
    cands = [r for r in pool if not _same(r, record)]
    if not cands:
        raise NoCandidate("partner pool is empty")
    rng = np.random.default_rng([seed, record.id])
    return cands[int(rng.integers(len(cands)))]


def build_inputs(
    records: Sequence[QERecord],
    setting: Setting,
    tok: Tokenizer = WHITESPACE,
    max_len: int = DEFAULT_MAX_LEN,
    *,
    pool: Optional[Sequence[QERecord]] = None,
    threshold: float = 0.1,
    seed: int = 42,
    epoch: Optional[int] = None,
) -> list:
    """Build one sequence per record.

    For ``MT_MT`` with ``epoch`` given, partners are drawn by HTER proximity
    from ``pool`` (default: ``records``) with seed ``seed + epoch``. With
    ``epoch=None`` the records are treated as unlabeled and partners are
    drawn uniformly from the pool.
    """
    setting = Setting(setting)
    if setting is Setting.SRC_MT:
        return [build_src_mt(r, tok, max_len) for r in records]
    if setting is Setting.MT:
        return [build_mt(r, tok, max_len) for r in records]
    pool = records if pool is None else pool
    if epoch is None:
        return [build_mt_mt(r, choose_inference_partner(r, pool, seed), tok, max_len) for r in records]
    rng = np.random.default_rng(seed + epoch)
    index = PartnerIndex(pool)
    return [build_mt_mt(r, choose_training_partner(r, index, threshold, rng), tok, max_len)
            for r in records]


def write_audit_tsv(seqs: Sequence[InputSequence], path) -> None:
    rows = ["record_id\torigin\tpartner_id\ttokens\tsegment_ids"]
    for s in seqs:
        partner = "" if s.partner_id is None else str(s.partner_id)
        rows.append(f"{s.record_id}\t{s.origin.value}\t{partner}\t{' '.join(s.tokens)}\t"
                    f"{' '.join(map(str, s.segment_ids))}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
