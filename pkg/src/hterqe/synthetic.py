"""Synthetic QE corpora with a known hashed-bag ground truth.

Gold HTER is ``sigmoid(w . h_MT + b)`` plus Gaussian noise, where ``h_MT`` is
the mean bucket embedding of ``[CLS] t [SEP]`` under a hidden
``HashedBagEncoder``. Source sentences are word-for-word renderings of the
translation in a disjoint vocabulary, shuffled, so they carry the same
signal without the same tokens.
"""

from __future__ import annotations

import numpy as np

from .dataset import Corpus, LanguagePair, QERecord
from .inputs import build_mt
from .predictor import HashedBagEncoder, sigmoid


def make_synthetic_corpus(n: int = 500, seed: int = 0, vocab_size: int = 100,
                          min_len: int = 6, max_len: int = 14, noise: float = 0.05,
                          n_buckets: int = 4096, dim: int = 16, mean_hter: float = 0.3,
                          spread: float = 1.0, pair=None, split: str = "train") -> Corpus:
    rng = np.random.default_rng(seed)
    truth = HashedBagEncoder(n_buckets, dim, seed=seed + 1, init_scale=1.0)
    w = rng.normal(size=dim)
    target_vocab = [f"t{i}" for i in range(vocab_size)]
    source_vocab = [f"s{i}" for i in range(vocab_size)]
    # skewed word frequencies, like natural text
    freq = 1.0 / np.arange(1, vocab_size + 1) ** 0.7
    freq /= freq.sum()
    sentences = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        sentences.append(rng.choice(vocab_size, size=length, p=freq))

    stub = [QERecord(i, "", "", (), tuple(target_vocab[j] for j in s)) for i, s in enumerate(sentences)]
    h = truth.forward(truth.prepare([build_mt(r) for r in stub]))
    z = h @ w
    z = (z - z.mean()) / z.std() * spread + np.log(mean_hter / (1.0 - mean_hter))
    gold = np.clip(sigmoid(z) + rng.normal(scale=noise, size=n), 0.0, 1.0)

    records = []
    for i, s in enumerate(sentences):
        mt = " ".join(target_vocab[j] for j in s)
        src = " ".join(source_vocab[j] for j in rng.permutation(s))
        records.append(QERecord.from_raw(i, src, mt, None, float(round(gold[i], 6))))
    return Corpus(pair or LanguagePair("xx", "en"), split, records)
