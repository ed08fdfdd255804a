import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hterqe.dataset import LanguagePair, write_tsv  # noqa: E402
from hterqe.synthetic import make_synthetic_corpus  # noqa: E402

ZERO_SHOT_PAIRS = ("ro-en", "si-en", "et-en")


def perturb(tokens, rng: random.Random):
    """A plausible second translation: a couple of drops, swaps and substitutions."""
    out = list(tokens)
    for _ in range(rng.randint(0, 3)):
        op = rng.choice("dsw")
        if not out:
            break
        i = rng.randrange(len(out))
        if op == "d" and len(out) > 1:
            del out[i]
        elif op == "s":
            out[i] = f"u{rng.randrange(50)}"
        elif op == "w" and len(out) > 1:
            j = rng.randrange(len(out))
            out[i], out[j] = out[j], out[i]
    return out


def write_zero_shot_fixture(root: Path, n: int = 50, seed: int = 0, **cfg_extra) -> Path:
    """Three labeled ``*-en`` corpora, a mock translation cache and a run config."""
    rng = random.Random(seed)
    cache_lines = []
    corpora = []
    for k, pair in enumerate(ZERO_SHOT_PAIRS):
        lp = LanguagePair.parse(pair)
        corpus = make_synthetic_corpus(n, seed=seed + 10 * k, pair=lp)
        path = root / f"{pair}.tsv"
        write_tsv(corpus, path)
        corpora.append(f"{pair}={path.name}")
        for rec in corpus:
            pseudo = " ".join(perturb(rec.translation_raw.split(), rng))
            cache_lines.append(f"{lp.source_lang}\ten\t{rec.source_raw}\t{pseudo}")
    (root / "mock_cache.tsv").write_text("\n".join(cache_lines) + "\n", encoding="utf-8")
    settings = {
        "test_pair": "km-en",
        "corpora": ",".join(corpora),
        "translator": "mock",
        "translation_cache": "mock_cache.tsv",
        "output": "zs_out",
        "epochs": 2,
        "learning_rate": 0.02,
        "buckets": 1024,
        "dim": 8,
        "folds": 3,
        "gbrt_estimators": 60,
    }
    settings.update(cfg_extra)
    cfg = root / "zero_shot.cfg"
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in settings.items()), encoding="utf-8")
    return cfg


@pytest.fixture
def zero_shot_config(tmp_path):
    return write_zero_shot_fixture(tmp_path)


@pytest.fixture
def block_network(monkeypatch):
    """Make any socket use fail loudly."""
    import socket

    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    monkeypatch.setattr(socket, "getaddrinfo", refuse)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
