"""``hterqe`` command line.

Exit codes: 0 on success, 2 for usage or data errors, 3 when an internal
invariant fails. Config-driven commands write ``manifest.cfg`` into their
output directory; passing that file back as ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, ter
from ._accel import BACKEND
from .config import RunConfig, load_config, parse_corpora
from .dataset import Corpus, LanguagePair, _read_lines, format_hter, load_tsv, relabel, write_tsv
from .ensemble import (
    ADABOOST_DEFAULTS,
    EnsembleModel,
    GBRT_DEFAULTS,
    component_features,
    ensemble_predict,
    stack_train,
)
from .errors import DataError, InvariantViolation, LengthMismatch, LineCountMismatch, NoLabels, QEError
from .inputs import ALL_SETTINGS, DEFAULT_MAX_LEN, Setting, Tokenizer, WHITESPACE, build_inputs, write_audit_tsv
from .metrics import EvalReport, evaluate
from .predictor import (
    FileEmbeddingEncoder,
    ModelSpec,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .zero_shot import (
    CachingClient,
    HTTPTranslationClient,
    MockTranslationClient,
    TranslationCache,
    generate_pseudo_references,
    merge_for_zero_shot,
    select_relevant_pairs,
    split_train_dev,
    tag_origin,
    write_provenance_tsv,
)

logger = logging.getLogger("hterqe")

PRED_COLUMNS = {Setting.SRC_MT: "pred_srcmt", Setting.MT: "pred_mt", Setting.MT_MT: "pred_mtmt"}


# -- config plumbing ----------------------------------------------------------


def _norm(cfg: RunConfig) -> ter.NormalizationConfig:
    return ter.NormalizationConfig(lowercase=cfg.lowercase, split_punct=cfg.split_punct)


def _shifts(cfg: RunConfig) -> ter.ShiftConfig:
    return ter.ShiftConfig(max_block=cfg.max_shift_block, max_distance=cfg.max_shift_distance)


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
                       weight_decay=cfg.weight_decay, betas=(cfg.beta1, cfg.beta2),
                       epsilon=cfg.epsilon, seed=cfg.seed)


def _model_spec(cfg: RunConfig) -> ModelSpec:
    tok = Tokenizer.from_vocab_file(cfg.vocab) if cfg.vocab else WHITESPACE
    embeddings = None
    if cfg.encoder == "file":
        if not cfg.embeddings:
            raise DataError("encoder = file needs an embeddings path")
        embeddings = FileEmbeddingEncoder.from_tsv(cfg.embeddings)
    elif cfg.encoder != "hashed":
        raise DataError(f"unknown encoder {cfg.encoder!r}")
    return ModelSpec(encoder=cfg.encoder, n_buckets=cfg.buckets, dim=cfg.dim,
                     init_scale=cfg.init_scale, init_seed=cfg.init_seed, embeddings=embeddings,
                     tokenizer=tok, max_len=cfg.max_len, partner_threshold=cfg.partner_threshold,
                     seed=cfg.seed)


def _combiner_params(cfg: RunConfig) -> dict:
    if cfg.ensemble == "gbrt":
        return dict(GBRT_DEFAULTS, n_estimators=cfg.gbrt_estimators, learning_rate=cfg.gbrt_learning_rate,
                    min_samples_split=cfg.gbrt_min_samples_split, max_depth=cfg.gbrt_max_depth)
    if cfg.ensemble == "adaboost":
        return dict(ADABOOST_DEFAULTS, n_estimators=cfg.adaboost_estimators,
                    learning_rate=cfg.adaboost_learning_rate, max_depth=cfg.adaboost_max_depth,
                    seed=cfg.seed)
    if cfg.ensemble == "average":
        return {}
    raise DataError(f"unknown ensemble kind {cfg.ensemble!r}")


def _load(path, cfg: RunConfig, split: str, pair=None) -> Corpus:
    if not path:
        raise DataError(f"config has no {split} path")
    pair = pair or LanguagePair.parse(cfg.pair)
    corpus = load_tsv(path, pair, split, _norm(cfg))
    # post-edits without labels: derive HTER on the fly
    if not corpus.labeled and all(r.post_edit is not None for r in corpus):
        corpus = relabel(corpus, _shifts(cfg))
    return corpus


def _require_labels(corpus: Corpus, what: str) -> None:
    if len(corpus) == 0 or not corpus.labeled:
        raise NoLabels(f"{what} corpus must carry an HTER (or post-edit) for every record")


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, cfg: RunConfig, command: str, **meta) -> Path:
    info = {"command": command, "version": __version__, "backend": BACKEND}
    info.update(meta)
    path = out / "manifest.cfg"
    path.write_text(cfg.to_text(info), encoding="utf-8")
    return path


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg.override(args.set, Path.cwd())
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "output", None):
        cfg.output = str(Path(args.output).resolve())
    return cfg


# -- shared artifact I/O ------------------------------------------------------


def _write_predictions(path, records, components: dict, combiner: EnsembleModel) -> np.ndarray:
    feats = component_features(components, records)
    final = ensemble_predict(combiner, feats)
    rows = ["record_id\t" + "\t".join(PRED_COLUMNS[s] for s in ALL_SETTINGS) + "\tpred_ensemble"]
    for rec, f, p in zip(records, feats, final):
        rows.append("\t".join([str(rec.id), *(f"{v:.6f}" for v in f), f"{p:.6f}"]))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return final


def save_ensemble_artifact(out: Path, stacked, records, kind: str) -> None:
    comp_dir = out / "components"
    comp_dir.mkdir(parents=True, exist_ok=True)
    for s in ALL_SETTINGS:
        save_checkpoint(stacked.components[s], comp_dir / f"{s.value}.ckpt")
    doc = {
        "kind": kind,
        "combiner": stacked.combiner.to_dict(),
        "folds": [f.tolist() for f in stacked.folds],
        "fold_seed": stacked.seed,
        "k": stacked.k,
        "record_ids": list(stacked.record_ids),
    }
    (out / "ensemble.json").write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    fold = stacked.fold_of()
    rows = ["record_id\tfold\t" + "\t".join(PRED_COLUMNS[s] for s in ALL_SETTINGS) + "\tgold"]
    for i, rec in enumerate(records):
        rows.append("\t".join([str(rec.id), str(fold[i]), *(f"{v:.6f}" for v in stacked.oof[i]),
                               format_hter(rec.hter)]))
    (out / "oof_features.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_ensemble_artifact(ens_dir, checkpoints=None) -> tuple:
    ens_dir = Path(ens_dir)
    try:
        doc = json.loads((ens_dir / "ensemble.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read ensemble artifact: {exc}") from None
    combiner = EnsembleModel.from_dict(doc["combiner"])
    ckpt_dir = Path(checkpoints) if checkpoints else ens_dir / "components"
    components = {}
    for s in ALL_SETTINGS:
        path = ckpt_dir / f"{s.value}.ckpt"
        if not path.exists():
            raise DataError(f"missing component checkpoint {path}")
        components[s] = load_checkpoint(path)
    return combiner, components


def _stack_and_save(train_corpus: Corpus, cfg: RunConfig, out: Path):
    _require_labels(train_corpus, "training")
    stacked = stack_train(list(train_corpus), _model_spec(cfg), _train_config(cfg), k=cfg.folds,
                          seed=cfg.seed, kind=cfg.ensemble, combiner_params=_combiner_params(cfg),
                          n_jobs=cfg.jobs)
    save_ensemble_artifact(out, stacked, list(train_corpus), cfg.ensemble)
    return stacked


# -- commands -----------------------------------------------------------------


def cmd_label(args) -> int:
    norm = ter.NormalizationConfig(lowercase=not args.case_sensitive, split_punct=not args.keep_punct)
    shifts = ter.NO_SHIFTS if args.no_shifts else ter.DEFAULT_SHIFTS
    mt, pe = _read_lines(args.mt), _read_lines(args.pe)
    if len(mt) != len(pe):
        raise LineCountMismatch(f"line counts differ: {args.mt}={len(mt)}, {args.pe}={len(pe)}")
    alignments = [ter.compute_ter(ter.normalize(h, norm), ter.normalize(r, norm), shifts)
                  for h, r in zip(mt, pe)]
    text = "".join(f"{ter.clamp_hter(a.score):.6f}\n" for a in alignments)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(ter.format_report(alignments), encoding="utf-8")
    return 0


def cmd_build_inputs(args) -> int:
    norm = ter.NormalizationConfig(lowercase=not args.case_sensitive, split_punct=not args.keep_punct)
    corpus = load_tsv(args.data, None, "train", norm)
    pool = load_tsv(args.pool, None, "train", norm).records if args.pool else None
    tok = Tokenizer.from_vocab_file(args.vocab) if args.vocab else WHITESPACE
    setting = Setting.parse(args.setting)
    if setting is Setting.MT_MT and args.epoch is not None:
        _require_labels(Corpus(None, "train", pool) if pool else corpus, "partner pool")
    seqs = build_inputs(list(corpus), setting, tok, args.max_len, pool=pool,
                        threshold=args.threshold, seed=args.seed, epoch=args.epoch)
    write_audit_tsv(seqs, args.out)
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    corpus = _load(cfg.train, cfg, "train")
    _require_labels(corpus, "training")
    out = _output_dir(cfg)
    spec = _model_spec(cfg)
    tcfg = _train_config(cfg)
    settings = cfg.setting_list()
    for s in settings:
        model, trace = train(spec.build(s), list(corpus), tcfg)
        save_checkpoint(model, out / f"{s.value}.ckpt")
        lines = ["epoch\tloss"] + [f"{e}\t{loss:.6f}" for e, loss in enumerate(trace)]
        (out / f"loss_{s.value}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info("%s: final epoch loss %.6f", s.value, trace[-1] if trace else float("nan"))
    _write_manifest(out, cfg, "train", n_train=len(corpus), settings=",".join(s.value for s in settings))
    return 0


def cmd_ensemble(args) -> int:
    cfg = _resolve_config(args)
    corpus = _load(cfg.train, cfg, "train")
    out = _output_dir(cfg)
    stacked = _stack_and_save(corpus, cfg, out)
    meta = {"fold_seed": stacked.seed, "fold_sizes": ",".join(str(len(f)) for f in stacked.folds)}
    if cfg.test:
        test = _load(cfg.test, cfg, "test")
        _write_predictions(out / "predictions.tsv", list(test), stacked.components, stacked.combiner)
        meta["n_test"] = len(test)
    _write_manifest(out, cfg, "ensemble", n_train=len(corpus), **meta)
    return 0


def cmd_predict(args) -> int:
    combiner, components = load_ensemble_artifact(args.ensemble, args.checkpoints)
    if args.embeddings:
        vectors = FileEmbeddingEncoder.from_tsv(args.embeddings)
        for model in components.values():
            if isinstance(model.encoder, FileEmbeddingEncoder):
                model.encoder = vectors
    norm = ter.NormalizationConfig(lowercase=not args.case_sensitive, split_punct=not args.keep_punct)
    corpus = load_tsv(args.data, None, "test", norm)
    _write_predictions(args.out, list(corpus), components, combiner)
    return 0


def _read_prediction_column(path, column: str) -> dict:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln]
    if not lines:
        raise DataError(f"{path}: empty predictions file")
    header = lines[0].split("\t")
    if "record_id" not in header or column not in header:
        raise DataError(f"{path}: needs columns record_id and {column}")
    rid, col = header.index("record_id"), header.index(column)
    out = {}
    for lineno, line in enumerate(lines[1:], 2):
        cells = line.split("\t")
        try:
            out[int(cells[rid])] = float(cells[col])
        except (ValueError, IndexError):
            raise DataError(f"{path}:{lineno}: malformed prediction row") from None
    return out


def _read_gold(path) -> list:
    """Gold HTER from a corpus TSV (``hter`` column) or a one-value-per-line file."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and "\t" in lines[0] and "hter" in lines[0].split("\t"):
        corpus = load_tsv(path)
        _require_labels(corpus, "gold")
        return corpus.hters()
    if lines and lines[-1] == "":
        lines.pop()
    try:
        return [float(x) for x in lines]
    except ValueError:
        raise DataError(f"{path}: gold file is neither a labeled TSV nor one number per line") from None


def _aligned(args) -> tuple:
    preds = _read_prediction_column(args.predictions, args.column)
    gold = _read_gold(args.gold)
    ids = sorted(preds)
    if ids != list(range(len(gold))):
        raise LengthMismatch(f"{len(preds)} predictions do not cover the {len(gold)} gold records")
    return ids, np.array([preds[i] for i in ids]), np.array([gold[i] for i in ids])


def cmd_evaluate(args) -> int:
    _, pred, gold = _aligned(args)
    report = evaluate(pred, gold)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_text(), encoding="utf-8")
    if args.tsv:
        path = Path(args.tsv)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", encoding="utf-8") as f:
            if new:
                f.write(EvalReport.tsv_header("label") + "\n")
            f.write(report.to_tsv_row(args.label or args.column) + "\n")
    return 0


def cmd_plot_data(args) -> int:
    ids, pred, gold = _aligned(args)
    rows = ["index,gold,predicted"] + [f"{i},{g:.6f},{p:.6f}" for i, g, p in zip(ids, gold, pred)]
    Path(args.out).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def _translation_client(cfg: RunConfig):
    if cfg.translator == "mock":
        if not cfg.translation_cache:
            raise DataError("translator = mock needs translation_cache")
        return MockTranslationClient(cfg.translation_cache)
    if cfg.translator == "http":
        if not cfg.translator_endpoint:
            raise DataError("translator = http needs translator_endpoint")
        cache = TranslationCache(cfg.translation_cache or None)
        return CachingClient(HTTPTranslationClient(cfg.translator_endpoint, cfg.rate_limit), cache)
    raise DataError(f"unknown translator {cfg.translator!r}")


def run_zero_shot(cfg: RunConfig) -> dict:
    """The zero-shot pipeline; returns the intermediate objects for inspection."""
    if not cfg.test_pair:
        raise DataError("zero-shot needs test_pair")
    test_pair = LanguagePair.parse(cfg.test_pair)
    available = [tag_origin(_load(path, cfg, "train", LanguagePair.parse(p)))
                 for p, path in parse_corpora(cfg.corpora)]
    relevant = select_relevant_pairs(available, test_pair)
    client = _translation_client(cfg)
    pseudo = []
    for corpus in relevant:
        pseudo.extend(generate_pseudo_references(corpus, client, _shifts(cfg), _norm(cfg)))
    merged = merge_for_zero_shot(relevant, pseudo)
    _require_labels(merged, "merged")

    out = _output_dir(cfg)
    write_tsv(merged, out / "merged.tsv")
    write_provenance_tsv(merged, out / "provenance.tsv")
    rows = ["origin_pair\trecord_id\tpseudo_reference\thter"]
    rows += [f"{p.base.origin_pair}\t{p.base.id}\t{p.pseudo_reference_raw}\t{p.hter_vs_pseudo:.6f}"
             for p in pseudo]
    (out / "pseudo_labels.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    train_part, dev_part = split_train_dev(merged, cfg.dev_fraction, cfg.seed)
    write_tsv(train_part, out / "train.tsv")
    write_tsv(dev_part, out / "dev.tsv")
    ens_dir = out / "ensemble"
    ens_dir.mkdir(exist_ok=True)
    stacked = _stack_and_save(train_part, cfg, ens_dir)
    result = {"relevant": relevant, "pseudo": pseudo, "merged": merged, "train": train_part,
              "dev": dev_part, "stacked": stacked, "dev_report": None}
    if len(dev_part) >= 2:
        dev_pred = _write_predictions(out / "dev_predictions.tsv", list(dev_part),
                                      stacked.components, stacked.combiner)
        try:
            result["dev_report"] = evaluate(dev_pred, dev_part.hters())
            (out / "dev_report.txt").write_text(result["dev_report"].to_text(), encoding="utf-8")
        except DataError as exc:
            logger.warning("dev evaluation skipped: %s", exc)
    if cfg.test:
        test = _load(cfg.test, cfg, "test", test_pair)
        _write_predictions(out / "predictions.tsv", list(test), stacked.components, stacked.combiner)
    _write_manifest(out, cfg, "zero-shot", merged_pair=merged.pair, n_merged=len(merged),
                    n_pseudo=len(pseudo), fold_seed=stacked.seed)
    return result


def cmd_zero_shot(args) -> int:
    run_zero_shot(_resolve_config(args))
    return 0


# -- argument parsing ---------------------------------------------------------


def _text_flags(p):
    p.add_argument("--case-sensitive", action="store_true", help="do not lowercase tokens")
    p.add_argument("--keep-punct", action="store_true", help="do not split punctuation off words")


def _config_flags(p, seed=True):
    p.add_argument("--config", required=True, help="flat key = value run config (or a manifest)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--output", help="output directory (overrides the config's output key)")
    if seed:
        p.add_argument("--seed", type=int, help="base seed for every random choice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hterqe", description="Sentence-level HTER quality estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="HTER of each MT line against its post-edit")
    p.add_argument("--mt", required=True)
    p.add_argument("--pe", required=True)
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--report", help="also write a per-sentence TER report here")
    p.add_argument("--no-shifts", action="store_true", help="plain Levenshtein ratio")
    _text_flags(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("build-inputs", help="write the model input sequences as an audit TSV")
    p.add_argument("--data", required=True, help="corpus TSV")
    p.add_argument("--setting", required=True, help="SRC_MT, MT or MT_MT")
    p.add_argument("--out", required=True)
    p.add_argument("--pool", help="partner pool TSV for MT_MT (default: the data itself)")
    p.add_argument("--epoch", type=int, help="draw training partners for this epoch (needs labels)")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--vocab", help="wordpiece vocabulary, one piece per line")
    p.add_argument("--seed", type=int, default=42)
    _text_flags(p)
    p.set_defaults(func=cmd_build_inputs)

    p = sub.add_parser("train", help="train one predictor per input setting")
    _config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ensemble", help="out-of-fold stacking of the three predictors")
    _config_flags(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("predict", help="score a corpus with a trained ensemble")
    p.add_argument("--ensemble", required=True, help="directory written by the ensemble command")
    p.add_argument("--checkpoints", help="component checkpoint directory (default: ENSEMBLE/components)")
    p.add_argument("--data", required=True, help="corpus TSV")
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", help="replacement table for file-encoder components")
    _text_flags(p)
    p.set_defaults(func=cmd_predict)

    for name, func, help_ in (("evaluate", cmd_evaluate, "Pearson, Spearman, MAE and RMSE"),
                              ("plot-data", cmd_plot_data, "CSV of gold vs predicted by record id")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--predictions", required=True)
        p.add_argument("--gold", required=True, help="labeled corpus TSV or one HTER per line")
        p.add_argument("--column", default="pred_ensemble", help="prediction column to use")
        p.add_argument("--out", required=(name == "plot-data"))
        if name == "evaluate":
            p.add_argument("--tsv", help="append a TSV row to this file")
            p.add_argument("--label", help="first cell of the TSV row (default: the column name)")
        p.set_defaults(func=func)

    p = sub.add_parser("zero-shot", help="pseudo-reference augmentation for an unseen pair")
    _config_flags(p)
    p.set_defaults(func=cmd_zero_shot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"hterqe: internal error: {exc}", file=sys.stderr)
        return 3
    except (QEError, OSError, UnicodeDecodeError) as exc:
        print(f"hterqe: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
