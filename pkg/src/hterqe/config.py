"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored; ``meta.*`` keys are informational
(written into manifests) and skipped on load. Relative paths resolve against
the config file's directory. A manifest written by any command is itself a
valid config that reproduces the run.

Documented keys (defaults in parentheses):

  data        train, dev, test (TSV paths), pair (xx-en), output (run)
  pipeline    settings (SRC_MT,MT,MT_MT), ensemble (gbrt), folds (10), seed (42), jobs (1)
  training    epochs (2), batch_size (32), learning_rate (2e-05), weight_decay (0.01),
              beta1 (0.9), beta2 (0.999), epsilon (1e-08)
  encoder     encoder (hashed), buckets (65536), dim (64), init_scale (0.05), init_seed (0),
              embeddings (file-encoder TSV), vocab (wordpiece vocab), max_len (512),
              partner_threshold (0.1)
  combiners   gbrt_estimators (600), gbrt_learning_rate (0.01), gbrt_min_samples_split (3),
              gbrt_max_depth (3), adaboost_estimators (50), adaboost_learning_rate (1.0),
              adaboost_max_depth (3)
  TER         lowercase (true), split_punct (true), max_shift_block (10), max_shift_distance (50)
  zero-shot   test_pair, corpora (``pair=path`` list), translator (mock), translation_cache,
              translator_endpoint, rate_limit (1.0), dev_fraction (0.1)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

PATH_KEYS = ("train", "dev", "test", "output", "embeddings", "vocab", "translation_cache")


@dataclass
class RunConfig:
    train: str = ""
    dev: str = ""
    test: str = ""
    pair: str = "xx-en"
    output: str = "run"

    settings: str = "SRC_MT,MT,MT_MT"
    ensemble: str = "gbrt"
    folds: int = 10
    seed: int = 42
    jobs: int = 1

    epochs: int = 2
    batch_size: int = 32
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    encoder: str = "hashed"
    buckets: int = 65536
    dim: int = 64
    init_scale: float = 0.05
    init_seed: int = 0
    embeddings: str = ""
    vocab: str = ""
    max_len: int = 512
    partner_threshold: float = 0.1

    gbrt_estimators: int = 600
    gbrt_learning_rate: float = 0.01
    gbrt_min_samples_split: int = 3
    gbrt_max_depth: int = 3
    adaboost_estimators: int = 50
    adaboost_learning_rate: float = 1.0
    adaboost_max_depth: int = 3

    lowercase: bool = True
    split_punct: bool = True
    max_shift_block: int = 10
    max_shift_distance: int = 50

    test_pair: str = ""
    corpora: str = ""
    translator: str = "mock"
    translation_cache: str = ""
    translator_endpoint: str = ""
    rate_limit: float = 1.0
    dev_fraction: float = 0.1

    def set(self, key: str, value: str, base_dir: Path | None = None) -> None:
        types = {f.name: type(f.default) for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = types[key]
        value = value.strip()
        try:
            if kind is bool:
                low = value.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                parsed = low in ("true", "1", "yes")
            elif kind is int:
                parsed = int(value)
            elif kind is float:
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None
        if key in PATH_KEYS and parsed and base_dir is not None:
            parsed = str((base_dir / parsed).resolve())
        if key == "corpora" and parsed and base_dir is not None:
            parsed = ",".join(f"{p}={(base_dir / path).resolve()}"
                              for p, path in parse_corpora(parsed))
        setattr(self, key, parsed)

    def override(self, assignments, base_dir: Path | None = None) -> "RunConfig":
        for item in assignments or ():
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            self.set(key.strip(), value, base_dir)
        return self

    def setting_list(self) -> list:
        from .inputs import Setting

        return [Setting.parse(s) for s in self.settings.split(",") if s.strip()]

    def to_text(self, meta: dict | None = None) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        for k, v in (meta or {}).items():
            lines.append(f"meta.{k} = {v}")
        return "\n".join(lines) + "\n"

    def copy(self) -> "RunConfig":
        return dataclasses.replace(self)


def parse_corpora(text: str) -> list:
    """``"ro-en=a.tsv, si-en=b.tsv"`` -> ``[("ro-en", "a.tsv"), ("si-en", "b.tsv")]``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        pair, sep, path = item.partition("=")
        if not sep or not path.strip():
            raise ConfigError(f"corpora entry {item!r} is not pair=path")
        out.append((pair.strip(), path.strip()))
    return out


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key = key.strip()
        if key.startswith("meta."):
            continue
        cfg.set(key, value, base_dir)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path.parent.resolve())
