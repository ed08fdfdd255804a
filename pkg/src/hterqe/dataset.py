"""WMT-QE style corpora: per-line parallel files and TSV."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

from . import ter
from .errors import LineCountMismatch, MissingColumn, MissingPostEdit, ParseError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test", "blind")
TSV_COLUMNS = ("src", "mt", "pe", "hter")


@dataclass(frozen=True)
class LanguagePair:
    source_lang: str
    target_lang: str

    def __post_init__(self):
        if not self.source_lang or not self.target_lang:
            raise ValueError("language codes must be non-empty")
        if self.source_lang == self.target_lang:
            raise ValueError(f"source and target language are both {self.source_lang!r}")

    @classmethod
    def parse(cls, text: str) -> "LanguagePair":
        """Parse ``"ro-en"`` (or ``"ro_en"``) into a pair."""
        sep = "-" if "-" in text else "_"
        src, _, tgt = text.strip().partition(sep)
        return cls(src.lower(), tgt.lower())

    def __str__(self):
        return f"{self.source_lang}-{self.target_lang}"


@dataclass(frozen=True)
class QERecord:
    id: int
    source_raw: str
    translation_raw: str
    source: tuple
    translation: tuple
    post_edit_raw: Optional[str] = None
    post_edit: Optional[tuple] = None
    hter: Optional[float] = None
    provenance: str = "wmt"
    origin_pair: Optional[LanguagePair] = None

    @classmethod
    def from_raw(
        cls,
        id: int,
        source: str,
        translation: str,
        post_edit: Optional[str] = None,
        hter: Optional[float] = None,
        norm: ter.NormalizationConfig = ter.DEFAULT_NORMALIZATION,
        **extra,
    ) -> "QERecord":
        return cls(
            id=id,
            source_raw=source,
            translation_raw=translation,
            source=ter.normalize(source, norm),
            translation=ter.normalize(translation, norm),
            post_edit_raw=post_edit,
            post_edit=ter.normalize(post_edit, norm) if post_edit is not None else None,
            hter=hter,
            **extra,
        )


@dataclass(frozen=True)
class Corpus:
    pair: LanguagePair
    split: str
    records: tuple = field(default=())

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        object.__setattr__(self, "records", tuple(self.records))
        for i, rec in enumerate(self.records):
            if rec.id != i:
                raise ValueError(f"record at position {i} has id {rec.id}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[QERecord]:
        return iter(self.records)

    def __getitem__(self, i) -> QERecord:
        return self.records[i]

    @property
    def labeled(self) -> bool:
        return all(r.hter is not None for r in self.records)

    def hters(self) -> list:
        return [r.hter for r in self.records]


def _parse_hter(text: str, path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", path, line) from None
    if math.isnan(value):
        raise ParseError("HTER is NaN", path, line)
    if not 0.0 <= value <= 1.0:
        logger.warning("%s:%d: HTER %s outside [0, 1], clamped", path, line, text)
        value = ter.clamp_hter(value)
    return value


def _read_lines(path) -> list:
    with open(path, encoding="utf-8", errors="strict", newline="") as f:
        text = f.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [ln[:-1] if ln.endswith("\r") else ln for ln in lines]


def load_parallel_files(
    src_path,
    mt_path,
    pe_path=None,
    hter_path=None,
    pair: LanguagePair = None,
    split: str = "train",
    norm: ter.NormalizationConfig = ter.DEFAULT_NORMALIZATION,
) -> Corpus:
    """Load one-sentence-per-line files; line ``i`` of each file is record ``i``."""
    columns = {"src": _read_lines(src_path), "mt": _read_lines(mt_path)}
    paths = {"src": src_path, "mt": mt_path}
    if pe_path is not None:
        columns["pe"] = _read_lines(pe_path)
        paths["pe"] = pe_path
    if hter_path is not None:
        columns["hter"] = _read_lines(hter_path)
        paths["hter"] = hter_path
    counts = {name: len(lines) for name, lines in columns.items()}
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{paths[k]}={v}" for k, v in counts.items())
        raise LineCountMismatch(f"line counts differ: {detail}")

    records = []
    for i in range(counts["src"]):
        pe = columns["pe"][i] if "pe" in columns else None
        hter = _parse_hter(columns["hter"][i], hter_path, i + 1) if "hter" in columns else None
        records.append(QERecord.from_raw(i, columns["src"][i], columns["mt"][i], pe, hter, norm))
    return Corpus(pair, split, records)


def load_tsv(
    path,
    pair: LanguagePair = None,
    split: str = "train",
    norm: ter.NormalizationConfig = ter.DEFAULT_NORMALIZATION,
) -> Corpus:
    """Load a header-led TSV with columns ``src``, ``mt`` and optionally ``pe``, ``hter``.

    Empty ``pe``/``hter`` cells mean absent. Extra columns are ignored.
    """
    lines = _read_lines(path)
    if not lines:
        raise MissingColumn(f"{path}: empty file, no header")
    header = lines[0].split("\t")
    for required in ("src", "mt"):
        if required not in header:
            raise MissingColumn(f"{path}: header lacks column {required!r}")
    col = {name: header.index(name) for name in TSV_COLUMNS if name in header}

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(cells)}", path, lineno)
        pe = cells[col["pe"]] if "pe" in col and cells[col["pe"]] != "" else None
        hter = None
        if "hter" in col and cells[col["hter"]].strip() != "":
            hter = _parse_hter(cells[col["hter"]].strip(), path, lineno)
        records.append(
            QERecord.from_raw(len(records), cells[col["src"]], cells[col["mt"]], pe, hter, norm)
        )
    return Corpus(pair, split, records)


def format_hter(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def write_tsv(corpus: Corpus | Sequence[QERecord], path) -> None:
    """Write ``src mt pe hter`` TSV; absent fields become empty cells."""
    rows = ["\t".join(TSV_COLUMNS)]
    for rec in corpus:
        cells = [rec.source_raw, rec.translation_raw, rec.post_edit_raw or "", format_hter(rec.hter)]
        for c in cells:
            if "\t" in c or "\n" in c:
                raise ValueError(f"record {rec.id}: tab or newline inside a field")
        rows.append("\t".join(cells))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def relabel(corpus: Corpus, shift_config: ter.ShiftConfig = ter.DEFAULT_SHIFTS) -> Corpus:
    """Recompute every record's HTER from its post-edit."""
    out = []
    for rec in corpus:
        if rec.post_edit is None:
            raise MissingPostEdit(rec.id)
        out.append(replace(rec, hter=ter.compute_hter(rec.translation, rec.post_edit, shift_config)))
    return Corpus(corpus.pair, corpus.split, out)


def reindex(records: Sequence[QERecord]) -> list:
    return [replace(rec, id=i) for i, rec in enumerate(records)]
