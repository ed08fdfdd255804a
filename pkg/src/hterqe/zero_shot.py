"""Training data for an unseen language pair.

Corpora that share the test pair's target language are pooled, and each of
their source sentences is re-translated by an independent MT system to give
a pseudo-reference; the original translation is then labeled with TER
against that pseudo-reference. Translation goes through a small client
interface with a file-backed mock so the whole pipeline runs offline.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.request
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from . import ter
from .dataset import Corpus, LanguagePair, QERecord, reindex
from .errors import ClientFailure, NoRelevantPairs, TargetLangMismatch

logger = logging.getLogger(__name__)


class TranslationClient(Protocol):
    def translate(self, text: str, source_lang: str, target_lang: str) -> str: ...


class TranslationError(RuntimeError):
    pass


class TranslationCache:
    """Append-only TSV: ``source_lang, target_lang, source text, translated text``."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._entries: dict = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        text = self.path.read_text(encoding="utf-8")
        for lineno, line in enumerate(text.split("\n"), 1):
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != 4:
                raise ValueError(f"{self.path}:{lineno}: expected 4 cells, found {len(cells)}")
            src_lang, tgt_lang, src, out = cells
            self._entries[(src_lang, tgt_lang, src)] = out

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def get(self, source_lang, target_lang, text) -> Optional[str]:
        return self._entries.get((source_lang, target_lang, text))

    def put(self, source_lang, target_lang, text, translation) -> None:
        for cell in (source_lang, target_lang, text, translation):
            if "\t" in cell or "\n" in cell:
                raise ValueError("cache cells cannot contain tabs or newlines")
        with self._lock:
            key = (source_lang, target_lang, text)
            if self._entries.get(key) == translation:
                return
            self._entries[key] = translation
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(f"{source_lang}\t{target_lang}\t{text}\t{translation}\n")


class MockTranslationClient:
    """Serves translations from a cache-format TSV; unknown inputs fail."""

    def __init__(self, source):
        self.cache = source if isinstance(source, TranslationCache) else TranslationCache(source)
        self.calls = 0

    def translate(self, text, source_lang, target_lang) -> str:
        self.calls += 1
        out = self.cache.get(source_lang, target_lang, text)
        if out is None:
            raise TranslationError(f"mock has no {source_lang}->{target_lang} entry for {text!r}")
        return out


class HTTPTranslationClient:
    """JSON-over-HTTP client (LibreTranslate-style request/response shape).

    POSTs ``{"q", "source", "target", "format"}`` and reads ``translatedText``.
    Requests are spaced to ``rate_limit`` per second and retried with
    exponential backoff. ``transport(url, body_bytes, timeout) -> bytes`` can
    be swapped out.
    """

    def __init__(self, endpoint: str, rate_limit: float = 1.0, max_retries: int = 4,
                 backoff: float = 1.0, timeout: float = 30.0, api_key: Optional[str] = None,
                 transport: Optional[Callable] = None, sleep: Callable = time.sleep,
                 clock: Callable = time.monotonic):
        if rate_limit <= 0:
            raise ValueError("rate_limit must be positive")
        self.endpoint = endpoint
        self.min_interval = 1.0 / rate_limit
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.api_key = api_key
        self.transport = transport or self._urllib_transport
        self._sleep = sleep
        self._clock = clock
        self._last = None
        self._lock = threading.Lock()
        self.calls = 0

    @staticmethod
    def _urllib_transport(url, body, timeout) -> bytes:
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()

    def _wait_turn(self):
        with self._lock:
            now = self._clock()
            if self._last is not None and now - self._last < self.min_interval:
                self._sleep(self.min_interval - (now - self._last))
            self._last = self._clock()

    def translate(self, text, source_lang, target_lang) -> str:
        payload = {"q": text, "source": source_lang, "target": target_lang, "format": "text"}
        if self.api_key:
            payload["api_key"] = self.api_key
        body = json.dumps(payload).encode("utf-8")
        delay = self.backoff
        for attempt in range(self.max_retries + 1):
            self._wait_turn()
            self.calls += 1
            try:
                reply = json.loads(self.transport(self.endpoint, body, self.timeout))
                return reply["translatedText"]
            except Exception as exc:
                if attempt == self.max_retries:
                    raise TranslationError(f"{type(exc).__name__}: {exc}") from exc
                logger.warning("translation request failed (%s), retrying in %.1fs", exc, delay)
                self._sleep(delay)
                delay *= 2


class CachingClient:
    """Check the cache first; write every live reply to it before returning."""

    def __init__(self, backend: TranslationClient, cache: TranslationCache):
        self.backend = backend
        self.cache = cache
        self.live_calls = 0

    def translate(self, text, source_lang, target_lang) -> str:
        hit = self.cache.get(source_lang, target_lang, text)
        if hit is not None:
            return hit
        self.live_calls += 1
        out = self.backend.translate(text, source_lang, target_lang)
        self.cache.put(source_lang, target_lang, text, out)
        return out


@dataclass(frozen=True)
class PseudoReferenceRecord:
    base: QERecord
    pseudo_reference_raw: str
    pseudo_reference: tuple
    hter_vs_pseudo: float


def select_relevant_pairs(available: Sequence[Corpus], test_pair: LanguagePair) -> list:
    """Corpora with the test pair's target language, excluding the test pair."""
    out = [c for c in available if c.pair.target_lang == test_pair.target_lang and c.pair != test_pair]
    if not out:
        raise NoRelevantPairs(f"no available corpus translates into {test_pair.target_lang!r}")
    return out


def generate_pseudo_references(
    corpus: Corpus,
    client: TranslationClient,
    shift_config: ter.ShiftConfig = ter.DEFAULT_SHIFTS,
    norm: ter.NormalizationConfig = ter.DEFAULT_NORMALIZATION,
    on_error: str = "abort",
) -> list:
    """Translate every source sentence and label the translation against it.

    ``on_error="abort"`` raises ``ClientFailure`` and returns nothing (replies
    already received stay in any cache, so a rerun resumes); ``"skip"`` drops
    the failing record with a warning.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError("on_error must be 'abort' or 'skip'")
    src, tgt = corpus.pair.source_lang, corpus.pair.target_lang
    out = []
    for rec in corpus:
        try:
            raw = client.translate(rec.source_raw, src, tgt)
        except Exception as exc:
            if on_error == "abort":
                raise ClientFailure(rec.id, exc) from exc
            logger.warning("skipping record %d: %s", rec.id, exc)
            continue
        toks = ter.normalize(raw, norm)
        base = rec if rec.origin_pair is not None else replace(rec, origin_pair=corpus.pair)
        out.append(PseudoReferenceRecord(base, raw, toks, ter.compute_hter(rec.translation, toks, shift_config)))
    return out


def merge_for_zero_shot(original: Sequence[Corpus], pseudo: Sequence[PseudoReferenceRecord],
                        split: str = "train") -> Corpus:
    """Concatenate original records then pseudo-labeled ones, re-indexed from 0.

    Pseudo records carry the pseudo-reference as their post-edit so
    ``relabel`` reproduces their labels.
    """
    targets = {c.pair.target_lang for c in original}
    targets |= {p.base.origin_pair.target_lang for p in pseudo if p.base.origin_pair is not None}
    if len(targets) > 1:
        raise TargetLangMismatch(f"inputs translate into several languages: {sorted(targets)}")
    if not targets:
        raise NoRelevantPairs("nothing to merge")
    target = targets.pop()
    merged = []
    for c in original:
        merged.extend(replace(r, provenance="wmt", origin_pair=c.pair) for r in c)
    for p in pseudo:
        merged.append(replace(p.base, post_edit_raw=p.pseudo_reference_raw,
                              post_edit=p.pseudo_reference, hter=p.hter_vs_pseudo,
                              provenance="pseudo", origin_pair=p.base.origin_pair))
    sources = sorted({r.origin_pair.source_lang for r in merged if r.origin_pair is not None})
    pair = LanguagePair("+".join(sources) or "mul", target)
    return Corpus(pair, split, reindex(merged))


def tag_origin(corpus: Corpus) -> Corpus:
    """Stamp each record with its corpus pair (needed before merging pseudo data)."""
    return Corpus(corpus.pair, corpus.split, [replace(r, origin_pair=corpus.pair) for r in corpus])


def split_train_dev(corpus: Corpus, dev_fraction: float = 0.1, seed: int = 42) -> tuple:
    """Seeded shuffle, then ``dev_fraction`` of records to dev; both re-indexed."""
    n = len(corpus)
    perm = np.random.default_rng(seed).permutation(n)
    n_dev = int(round(n * dev_fraction))
    dev_idx = sorted(perm[:n_dev].tolist())
    train_idx = sorted(perm[n_dev:].tolist())
    train = Corpus(corpus.pair, "train", reindex([corpus[i] for i in train_idx]))
    dev = Corpus(corpus.pair, "dev", reindex([corpus[i] for i in dev_idx]))
    return train, dev


def write_provenance_tsv(corpus: Corpus, path) -> None:
    rows = ["id\tprovenance\torigin_pair"]
    for r in corpus:
        rows.append(f"{r.id}\t{r.provenance}\t{r.origin_pair or ''}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
