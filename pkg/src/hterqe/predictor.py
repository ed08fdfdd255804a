"""Sigmoid regression head over a pluggable sentence encoder.

The head maps the encoder's ``[CLS]`` vector ``h`` to ``sigmoid(W . h + b)``.
Two encoders are provided: a learnable hashed bag-of-tokens mean
(``HashedBagEncoder``), and a frozen lookup of externally computed vectors
(``FileEmbeddingEncoder``), which lets real transformer ``[CLS]`` features
drive the rest of the pipeline. Training is minibatch AdamW on MSE.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import QERecord
from .errors import (
    CheckpointError,
    DataError,
    EmptyInput,
    LengthMismatch,
    NoLabels,
    SettingMismatch,
    ShapeMismatch,
)
from .inputs import DEFAULT_MAX_LEN, WHITESPACE, InputSequence, Setting, Tokenizer, build_inputs

CHECKPOINT_MAGIC = b"HTERQE-CHECKPOINT\n"
CHECKPOINT_VERSION = 1


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class TrainConfig:
    epochs: int = 2
    batch_size: int = 32
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    seed: int = 42

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not all(0 < b < 1 for b in self.betas):
            raise ValueError("betas must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


# -- encoders -----------------------------------------------------------------


class HashedBagEncoder:
    """Mean of learnable bucket embeddings over all tokens, markers included."""

    kind = "hashed"
    trainable = True

    def __init__(self, n_buckets: int = 2 ** 16, dim: int = 64, seed: int = 0,
                 init_scale: float = 0.05, table: Optional[np.ndarray] = None):
        self.n_buckets = int(n_buckets)
        self.dim = int(dim)
        self.seed = seed
        self.init_scale = init_scale
        if table is None:
            rng = np.random.default_rng(seed)
            table = rng.uniform(-init_scale, init_scale, size=(self.n_buckets, self.dim))
        if table.shape != (self.n_buckets, self.dim):
            raise ShapeMismatch(f"table shape {table.shape} != ({self.n_buckets}, {self.dim})")
        self.table = np.ascontiguousarray(table, dtype=np.float64)
        self._cache: dict = {}

    def bucket(self, token: str) -> int:
        b = self._cache.get(token)
        if b is None:
            b = zlib.crc32(token.encode("utf-8")) % self.n_buckets
            self._cache[token] = b
        return b

    def prepare(self, seqs: Sequence[InputSequence]):
        """Flatten token buckets for a batch: ``(indices, lengths)``."""
        idx = np.fromiter((self.bucket(t) for s in seqs for t in s.tokens), dtype=np.int64)
        lengths = np.fromiter((len(s.tokens) for s in seqs), dtype=np.int64, count=len(seqs))
        return idx, lengths

    @staticmethod
    def subset(prepared, rows):
        idx, lengths = prepared
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        parts = [idx[starts[r]:starts[r] + lengths[r]] for r in rows]
        return np.concatenate(parts), lengths[rows]

    def forward(self, prepared) -> np.ndarray:
        idx, lengths = prepared
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        summed = np.add.reduceat(self.table[idx], starts, axis=0)
        return summed / lengths[:, None]

    def backward(self, prepared, grad_h: np.ndarray) -> np.ndarray:
        idx, lengths = prepared
        grad = np.zeros_like(self.table)
        per_token = np.repeat(grad_h / lengths[:, None], lengths, axis=0)
        np.add.at(grad, idx, per_token)
        return grad

    def params(self) -> dict:
        return {"table": self.table}

    def describe(self) -> dict:
        return {"kind": self.kind, "n_buckets": self.n_buckets, "dim": self.dim,
                "seed": self.seed, "init_scale": self.init_scale}


class FileEmbeddingEncoder:
    """Frozen vectors keyed by ``(record_id, setting)``."""

    kind = "file"
    trainable = False

    def __init__(self, vectors: dict):
        if not vectors:
            raise EmptyInput("no embedding vectors")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ShapeMismatch(f"embedding vectors have mixed dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.vectors = {(int(k[0]), Setting(k[1])): np.asarray(v, dtype=np.float64)
                        for k, v in vectors.items()}

    @classmethod
    def from_tsv(cls, path) -> "FileEmbeddingEncoder":
        """Read ``record_id <TAB> setting <TAB> space-separated floats`` lines."""
        vectors = {}
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.split("\n"), 1):
            if not line.strip():
                continue
            try:
                rid, setting, values = line.split("\t")
                vec = [float(x) for x in values.split()]
                vectors[(int(rid), Setting.parse(setting))] = vec
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad embedding line ({exc})") from None
        return cls(vectors)

    def prepare(self, seqs: Sequence[InputSequence]) -> np.ndarray:
        out = np.empty((len(seqs), self.dim))
        for i, s in enumerate(seqs):
            try:
                out[i] = self.vectors[(s.record_id, s.origin)]
            except KeyError:
                raise DataError(f"no embedding for record {s.record_id} ({s.origin.value})") from None
        return out

    @staticmethod
    def subset(prepared, rows):
        return prepared[rows]

    def forward(self, prepared) -> np.ndarray:
        return prepared

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


# -- model --------------------------------------------------------------------


@dataclass
class RegressionHead:
    W: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def zeros(cls, dim: int) -> "RegressionHead":
        return cls(np.zeros(dim), np.zeros(1))


class PredictorModel:
    """Encoder plus sigmoid head for one fixed input setting."""

    def __init__(self, encoder, setting: Setting, head: Optional[RegressionHead] = None,
                 tokenizer: Tokenizer = WHITESPACE, max_len: int = DEFAULT_MAX_LEN,
                 partner_threshold: float = 0.1, seed: int = 42):
        self.encoder = encoder
        self.setting = Setting(setting)
        self.head = head if head is not None else RegressionHead.zeros(encoder.dim)
        if self.head.W.shape != (encoder.dim,):
            raise ShapeMismatch(f"head has {self.head.W.shape}, encoder dim is {encoder.dim}")
        self.tokenizer = tokenizer
        self.max_len = max_len
        self.partner_threshold = partner_threshold
        self.seed = seed
        # MT_MT partners for unlabeled inputs are drawn from here
        self.partner_pool: list = []

    def params(self) -> dict:
        p = {"W": self.head.W, "b": self.head.b}
        p.update(self.encoder.params())
        return p

    def sequences(self, records: Sequence[QERecord], epoch: Optional[int] = None) -> list:
        pool = self.partner_pool if epoch is None else records
        return build_inputs(records, self.setting, self.tokenizer, self.max_len, pool=pool,
                            threshold=self.partner_threshold, seed=self.seed, epoch=epoch)

    def forward(self, prepared) -> np.ndarray:
        h = self.encoder.forward(prepared)
        return sigmoid(h @ self.head.W + self.head.b[0])


def predict(model: PredictorModel, seq: InputSequence) -> float:
    if seq.origin != model.setting:
        raise SettingMismatch(f"model expects {model.setting.value}, got {seq.origin.value}")
    return float(model.forward(model.encoder.prepare([seq]))[0])


def mse_loss(preds, golds) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    golds = np.asarray(golds, dtype=np.float64)
    if preds.shape != golds.shape:
        raise LengthMismatch(f"{preds.shape[0]} predictions vs {golds.shape[0]} labels")
    if preds.size == 0:
        raise EmptyInput("empty batch")
    diff = preds - golds
    return float(np.mean(diff * diff))


def loss_and_grads(model: PredictorModel, prepared, golds) -> tuple:
    """MSE of ``sigmoid(W . h + b)`` and its gradients by backpropagation."""
    golds = np.asarray(golds, dtype=np.float64)
    h = model.encoder.forward(prepared)
    y = sigmoid(h @ model.head.W + model.head.b[0])
    loss = mse_loss(y, golds)
    dz = (2.0 / y.shape[0]) * (y - golds) * y * (1.0 - y)
    grads = {"W": h.T @ dz, "b": np.array([dz.sum()])}
    if model.encoder.trainable:
        grads["table"] = model.encoder.backward(prepared, np.outer(dz, model.head.W))
    return loss, grads


# -- optimiser ----------------------------------------------------------------


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: AdamWState, config: TrainConfig, t: int) -> tuple:
    """One decoupled-weight-decay Adam update, in place; returns ``(params, state)``."""
    if t < 1:
        raise ValueError("step index t starts at 1")
    b1, b2 = config.betas
    lr, wd, eps = config.learning_rate, config.weight_decay, config.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        if name not in grads:
            continue
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if wd:
            update += wd * p
        p -= lr * update
    return params, state


# -- training and inference ---------------------------------------------------


def train(model: PredictorModel, records: Sequence[QERecord], config: TrainConfig = None) -> tuple:
    """Fit ``model`` on labeled records; returns ``(model, per-epoch mean losses)``."""
    config = config or TrainConfig()
    records = list(records)
    if not records or any(r.hter is None for r in records):
        raise NoLabels("training needs every record to carry an HTER label")
    golds = np.array([r.hter for r in records], dtype=np.float64)
    n = len(records)
    order_rng = np.random.default_rng(config.seed)
    params = model.params()
    state = AdamWState()
    t = 0
    trace = []
    for epoch in range(config.epochs):
        prepared = model.encoder.prepare(model.sequences(records, epoch=epoch))
        order = order_rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            rows = order[lo:lo + config.batch_size]
            batch = model.encoder.subset(prepared, rows)
            loss, grads = loss_and_grads(model, batch, golds[rows])
            t += 1
            adamw_step(params, grads, state, config, t)
            total += loss * len(rows)
        trace.append(total / n)
    model.partner_pool = records
    return model, trace


def predict_corpus(model: PredictorModel, records: Sequence[QERecord]) -> list:
    """``(record_id, prediction)`` for each record, in input order."""
    records = list(records)
    if not records:
        return []
    if model.setting is Setting.MT_MT and not model.partner_pool:
        raise DataError("MT_MT model has no partner pool; train it or load a checkpoint first")
    preds = model.forward(model.encoder.prepare(model.sequences(records)))
    return [(r.id, float(p)) for r, p in zip(records, preds)]


# -- checkpoints --------------------------------------------------------------


def _pool_to_json(pool) -> list:
    return [[r.id, r.translation_raw, list(r.translation), r.hter] for r in pool]


def _pool_from_json(items) -> list:
    return [QERecord(id=i, source_raw="", translation_raw=raw, source=(), translation=tuple(toks), hter=h)
            for i, raw, toks, h in items]


def save_checkpoint(model: PredictorModel, path) -> None:
    """Write a versioned container: magic line, one JSON header line, raw float64 arrays."""
    arrays = {"W": model.head.W, "b": model.head.b}
    enc = model.encoder.describe()
    if isinstance(model.encoder, HashedBagEncoder):
        arrays["table"] = model.encoder.table
    else:
        keys = sorted(model.encoder.vectors)
        enc["keys"] = [[rid, s.value] for rid, s in keys]
        arrays["vectors"] = np.stack([model.encoder.vectors[k] for k in keys])
    layout = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        arrays[name] = arr
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
    header = {
        "version": CHECKPOINT_VERSION,
        "setting": model.setting.value,
        "encoder": enc,
        "tokenizer": model.tokenizer.describe(),
        "max_len": model.max_len,
        "partner_threshold": model.partner_threshold,
        "seed": model.seed,
        "partner_pool": _pool_to_json(model.partner_pool),
        "arrays": layout,
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(blob + b"\n")
        for arr in arrays.values():
            f.write(arr.tobytes())


def load_checkpoint(path) -> PredictorModel:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    head_end = data.index(b"\n", len(CHECKPOINT_MAGIC))
    header = json.loads(data[len(CHECKPOINT_MAGIC):head_end].decode("utf-8"))
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    body = data[head_end + 1:]
    arrays = {}
    for spec in header["arrays"]:
        raw = body[spec["offset"]:spec["offset"] + spec["nbytes"]]
        arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(spec["shape"]).astype(np.float64)
    enc = header["encoder"]
    if enc["kind"] == "hashed":
        encoder = HashedBagEncoder(enc["n_buckets"], enc["dim"], enc["seed"], enc["init_scale"],
                                   table=arrays["table"])
    elif enc["kind"] == "file":
        keys = [(rid, s) for rid, s in enc["keys"]]
        encoder = FileEmbeddingEncoder(dict(zip(keys, arrays["vectors"])))
    else:
        raise CheckpointError(f"{path}: unknown encoder kind {enc['kind']!r}")
    model = PredictorModel(
        encoder,
        Setting(header["setting"]),
        RegressionHead(arrays["W"], arrays["b"]),
        Tokenizer.from_description(header["tokenizer"]),
        header["max_len"],
        header["partner_threshold"],
        header["seed"],
    )
    model.partner_pool = _pool_from_json(header["partner_pool"])
    return model


@dataclass
class ModelSpec:
    """Recipe for fresh component models; one per input setting."""

    encoder: str = "hashed"
    n_buckets: int = 2 ** 16
    dim: int = 64
    init_scale: float = 0.05
    init_seed: int = 0
    embeddings: Optional[FileEmbeddingEncoder] = None
    tokenizer: Tokenizer = WHITESPACE
    max_len: int = DEFAULT_MAX_LEN
    partner_threshold: float = 0.1
    seed: int = 42

    def build(self, setting: Setting) -> PredictorModel:
        if self.encoder == "hashed":
            enc = HashedBagEncoder(self.n_buckets, self.dim, self.init_seed, self.init_scale)
        elif self.encoder == "file":
            if self.embeddings is None:
                raise DataError("file encoder needs an embeddings table")
            enc = self.embeddings
        else:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        return PredictorModel(enc, setting, None, self.tokenizer, self.max_len,
                              self.partner_threshold, self.seed)

    def describe(self) -> dict:
        return {
            "encoder": self.encoder, "n_buckets": self.n_buckets, "dim": self.dim,
            "init_scale": self.init_scale, "init_seed": self.init_seed,
            "tokenizer": self.tokenizer.mode, "max_len": self.max_len,
            "partner_threshold": self.partner_threshold, "seed": self.seed,
        }
