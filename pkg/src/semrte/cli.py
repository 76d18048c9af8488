"""Command-line entry point.

Subcommands: srl-eval, srl-aggregate, merge-aspects, train, eval, compare,
gen-fixture. Exit codes: 0 success, 1 usage/config error, 2 data error,
3 internal invariant violation.

Run configuration is a JSON file with a flat documented schema; CLI flags
override file values. All randomness flows from the single top-level seed:
the encoder init seed is seed+1 and the trainer seed is seed+2 unless the
config sets them explicitly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

from . import evaluation, fixtures, training
from .aspects import (
    PredictedSequence,
    aspect_sets_to_jsonl,
    cap_and_pad,
    dedupe,
    filter_multi_verb,
    group_by_sentence,
    parse_aspect_sets,
)
from .batching import encode_corpus
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    LABELS,
    LabelInventory,
    parse_conll,
    parse_pairs,
    pairs_to_jsonl,
    sentences_to_conll,
    split_train_val,
)
from .encoder import EncoderConfig, SubwordVocab, build_vocab
from .errors import ConfigError, DataError, SemrteError
from .fusion import EntailmentModel, FusionConfig
from .srl_metrics import PRF, FoldAverage, aggregate_folds, extract_spans, pct, span_prf


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# run configuration

_TOP_KEYS = {
    "train_pairs",
    "train_aspects",
    "eval_pairs",
    "eval_aspects",
    "vocab",
    "checkpoint",
    "output_dir",
    "seed",
    "m",
    "split_ratio",
    "chunk_size",
    "ablate_semantics",
    "encoder",
    "fusion",
    "train",
}

_PATH_KEYS = (
    "train_pairs",
    "train_aspects",
    "eval_pairs",
    "eval_aspects",
    "vocab",
    "checkpoint",
    "output_dir",
)


@dataclass
class RunConfig:
    train_pairs: str | None = None
    train_aspects: str | None = None
    eval_pairs: str | None = None
    eval_aspects: str | None = None
    vocab: str | None = None
    checkpoint: str = "out/model.ckpt"
    output_dir: str = "out"
    seed: int = 0
    m: int = 2
    split_ratio: float = 0.8
    chunk_size: int = 3
    ablate_semantics: bool = False
    encoder: EncoderConfig = dataclasses.field(default_factory=EncoderConfig)
    fusion: FusionConfig = dataclasses.field(default_factory=FusionConfig)
    train: training.TrainConfig = dataclasses.field(default_factory=training.TrainConfig)


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {unknown}")
    return cls(**data)


def load_run_config(path: str, overrides: argparse.Namespace | None = None) -> RunConfig:
    """Load and validate a run-config JSON file, applying flag overrides."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    seed = int(raw.get("seed", 0))
    if overrides is not None and getattr(overrides, "seed", None) is not None:
        seed = overrides.seed

    encoder_raw = dict(raw.get("encoder", {}))
    fusion_raw = dict(raw.get("fusion", {}))
    train_raw = dict(raw.get("train", {}))
    encoder_raw.setdefault("seed", seed + 1)
    train_raw.setdefault("seed", seed + 2)

    cfg = RunConfig(
        train_pairs=raw.get("train_pairs"),
        train_aspects=raw.get("train_aspects"),
        eval_pairs=raw.get("eval_pairs"),
        eval_aspects=raw.get("eval_aspects"),
        vocab=raw.get("vocab"),
        checkpoint=raw.get("checkpoint", "out/model.ckpt"),
        output_dir=raw.get("output_dir", "out"),
        seed=seed,
        m=int(raw.get("m", 2)),
        split_ratio=float(raw.get("split_ratio", 0.8)),
        chunk_size=int(raw.get("chunk_size", 3)),
        ablate_semantics=bool(raw.get("ablate_semantics", False)),
        encoder=_build_section(EncoderConfig, encoder_raw, "encoder"),
        fusion=_build_section(FusionConfig, fusion_raw, "fusion"),
        train=_build_section(training.TrainConfig, train_raw, "train"),
    )

    base = os.path.dirname(os.path.abspath(path))
    for key in _PATH_KEYS:
        value = getattr(cfg, key)
        if value is not None and not os.path.isabs(value):
            setattr(cfg, key, os.path.join(base, value))

    if overrides is not None:
        if getattr(overrides, "m", None) is not None:
            cfg.m = overrides.m
        if getattr(overrides, "epochs", None) is not None:
            cfg.train.epochs = overrides.epochs
        if getattr(overrides, "batch_size", None) is not None:
            cfg.train.batch_size = overrides.batch_size
        if getattr(overrides, "learning_rate", None) is not None:
            cfg.train.learning_rate = overrides.learning_rate
        if getattr(overrides, "output_dir", None) is not None:
            cfg.output_dir = overrides.output_dir
        if getattr(overrides, "checkpoint", None) is not None:
            cfg.checkpoint = overrides.checkpoint
        if getattr(overrides, "ablate_semantics", False):
            cfg.ablate_semantics = True
    if not (1 <= cfg.m <= 5):
        raise ConfigError(f"m must be in [1, 5], got {cfg.m}")
    cfg.fusion.num_aspects = cfg.m
    return cfg


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# srl-eval / srl-aggregate

def cmd_srl_eval(args) -> int:
    gold = parse_conll(_read_text(args.gold))
    pred = parse_conll(_read_text(args.pred))
    prf = span_prf(
        [extract_spans(s.labels) for s in gold],
        [extract_spans(s.labels) for s in pred],
    )
    payload = prf.to_json_dict()
    print(
        f"precision={payload['precision']:.2f} recall={payload['recall']:.2f} "
        f"f1={payload['f1']:.2f} (tp={prf.tp} fp={prf.fp} fn={prf.fn})"
    )
    if args.out:
        _write_text(args.out, json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_srl_aggregate(args) -> int:
    folds = []
    for path in args.folds:
        obj = json.loads(_read_text(path))
        try:
            folds.append(
                FoldAverage(
                    precision=float(obj["precision"]) / 100.0,
                    recall=float(obj["recall"]) / 100.0,
                    f1=float(obj["f1"]) / 100.0,
                )
            )
        except (KeyError, TypeError, ValueError):
            raise DataError(f"{path} is not a fold-metric JSON file") from None
    avg = aggregate_folds(folds).to_json_dict()
    print(
        f"average over {len(folds)} folds: precision={avg['precision']:.2f} "
        f"recall={avg['recall']:.2f} f1={avg['f1']:.2f}"
    )
    if args.out:
        _write_text(args.out, json.dumps(avg, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# merge-aspects

def _load_tokens_by_id(path: str) -> dict[str, tuple[str, ...]]:
    tokens_by_id: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            sid = str(obj["sentence_id"])
            tokens = tuple(str(t) for t in obj["tokens"])
        except (json.JSONDecodeError, KeyError, TypeError):
            raise DataError(f"{path}: bad token record at line {lineno}") from None
        tokens_by_id[sid] = tokens
    return tokens_by_id


def cmd_merge_aspects(args) -> int:
    tokens_by_id = _load_tokens_by_id(args.tokens)
    sequences = []
    for model_idx, path in enumerate(args.pred):
        for sent in parse_conll(_read_text(path)):
            sequences.append(
                PredictedSequence(
                    sentence_id=sent.sentence_id,
                    source_model=model_idx,
                    labels=sent.labels,
                )
            )
    unique = dedupe(sequences)
    surviving = filter_multi_verb(unique)
    merged = [
        cap_and_pad(aset, args.m)
        for aset in group_by_sentence(surviving, tokens_by_id)
    ]
    _write_text(args.out, aspect_sets_to_jsonl(merged))
    print(f"read {len(sequences)} sequences from {len(args.pred)} files")
    print(f"removed {len(sequences) - len(unique)} duplicates (rule 1)")
    print(f"removed {len(unique) - len(surviving)} multi-verb sequences (rule 2)")
    print(f"wrote {len(merged)} aspect sets (m={args.m}) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train / eval

def _prepare_training(cfg: RunConfig, m: int, ablate: bool):
    """Parse corpora, build vocab + inventory, and encode the 8/2 split."""
    if not cfg.train_pairs or not cfg.train_aspects:
        raise ConfigError("config must set train_pairs and train_aspects")
    pairs = parse_pairs(_read_text(cfg.train_pairs))
    if not pairs:
        raise DataError(f"{cfg.train_pairs} contains no pairs")
    aspect_sets = {a.sentence_id: a for a in parse_aspect_sets(_read_text(cfg.train_aspects))}

    if cfg.vocab:
        vocab = SubwordVocab.load(cfg.vocab, chunk_size=cfg.chunk_size)
    else:
        tokens = [t for p in pairs for t in p.text1 + p.text2]
        vocab = build_vocab(tokens, chunk_size=cfg.chunk_size)
    inventory = LabelInventory.from_label_sequences(
        row for aset in aspect_sets.values() for row in aset.aspects
    )

    train_pairs, val_pairs = split_train_val(pairs, cfg.split_ratio, cfg.seed)
    max_length = cfg.encoder.max_length
    train_examples = encode_corpus(
        train_pairs, aspect_sets, vocab, inventory, m, max_length, ablate=ablate
    )
    val_examples = encode_corpus(
        val_pairs, aspect_sets, vocab, inventory, m, max_length, ablate=ablate
    )
    return vocab, inventory, train_examples, val_examples


def _run_training(cfg: RunConfig, m: int, ablate: bool, checkpoint_path: str):
    vocab, inventory, train_examples, val_examples = _prepare_training(cfg, m, ablate)
    fusion_cfg = dataclasses.replace(cfg.fusion, num_aspects=m)
    model = EntailmentModel(vocab.size, inventory.num_ids, cfg.encoder, fusion_cfg)

    os.makedirs(cfg.output_dir, exist_ok=True)
    vocab_path = os.path.join(cfg.output_dir, "vocab.txt")
    vocab.save(vocab_path)

    log = training.train(model, train_examples, val_examples, cfg.train, checkpoint_path)
    # Re-save the best checkpoint with the trailer extras eval needs.
    best, _ = load_checkpoint(checkpoint_path)
    save_checkpoint(
        checkpoint_path,
        best,
        extra={
            "roles": list(inventory.roles),
            "chunk_size": cfg.chunk_size,
            "vocab_file": os.path.relpath(vocab_path, os.path.dirname(os.path.abspath(checkpoint_path))),
            "ablate_semantics": ablate,
        },
    )
    return best, vocab, inventory, log


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, overrides=args)
    os.makedirs(cfg.output_dir, exist_ok=True)
    _, _, _, log = _run_training(cfg, cfg.m, cfg.ablate_semantics, cfg.checkpoint)
    log_path = os.path.join(cfg.output_dir, "train_log.jsonl")
    _write_text(log_path, log.to_jsonl())
    for record in log.records:
        print(
            f"epoch {record.epoch}: loss={record.train_loss:.4f} "
            f"val_acc={pct(record.val_accuracy):.2f} val_f1={pct(record.val_f1):.2f}"
        )
    print(f"checkpoint: {log.checkpoint_path}")
    print(f"train log: {log_path}")
    return 0


def _predictions_for(model, trailer, cfg: RunConfig, pairs_path: str, aspects_path: str):
    pairs = parse_pairs(_read_text(pairs_path))
    if not pairs:
        raise DataError(f"{pairs_path} contains no pairs")
    aspect_sets = {a.sentence_id: a for a in parse_aspect_sets(_read_text(aspects_path))}
    try:
        roles = trailer["roles"]
        chunk_size = int(trailer["chunk_size"])
        vocab_file = trailer["vocab_file"]
    except KeyError as exc:
        raise DataError(f"checkpoint trailer is missing {exc.args[0]!r}") from None
    inventory = LabelInventory.from_roles(roles)
    vocab_path = cfg.vocab or os.path.join(
        os.path.dirname(os.path.abspath(cfg.checkpoint)), vocab_file
    )
    vocab = SubwordVocab.load(vocab_path, chunk_size=chunk_size)
    if vocab.size != model.encoder.vocab_size:
        raise DataError(
            f"vocab at {vocab_path} has size {vocab.size}, checkpoint expects "
            f"{model.encoder.vocab_size}"
        )
    m = model.fusion_cfg.num_aspects
    examples = encode_corpus(
        pairs,
        aspect_sets,
        vocab,
        inventory,
        m,
        model.encoder_cfg.max_length,
        ablate=bool(trailer.get("ablate_semantics", False)),
    )
    pred_ids = training.predict(model, examples, batch_size=cfg.train.batch_size)
    return [
        evaluation.Prediction(
            pair_id=ex.pair_id,
            predicted=LABELS[pred],
            gold=LABELS[ex.gold],
            lang=ex.lang,
            predicates1=ex.predicates1,
            predicates2=ex.predicates2,
        )
        for ex, pred in zip(examples, pred_ids)
    ]


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config, overrides=args)
    if not cfg.eval_pairs or not cfg.eval_aspects:
        raise ConfigError("config must set eval_pairs and eval_aspects")
    model, trailer = load_checkpoint(cfg.checkpoint)
    predictions = _predictions_for(model, trailer, cfg, cfg.eval_pairs, cfg.eval_aspects)
    report = evaluation.full_report(predictions)

    if args.sweep:
        m_values = _parse_sweep(args.sweep)

        def run_for_m(m: int) -> float:
            sweep_ckpt = os.path.join(cfg.output_dir, f"sweep_m{m}.ckpt")
            sweep_model, _, _, _ = _run_training(cfg, m, cfg.ablate_semantics, sweep_ckpt)
            sweep_trailer = {
                "roles": trailer["roles"],
                "chunk_size": trailer["chunk_size"],
                "vocab_file": "vocab.txt",
                "ablate_semantics": cfg.ablate_semantics,
            }
            sweep_cfg = dataclasses.replace(cfg)
            sweep_cfg.checkpoint = sweep_ckpt
            sweep_cfg.vocab = os.path.join(cfg.output_dir, "vocab.txt")
            preds = _predictions_for(
                sweep_model, sweep_trailer, sweep_cfg, cfg.eval_pairs, cfg.eval_aspects
            )
            return evaluation.overall_metrics(preds).f1

        report.per_m_f1 = evaluation.aspect_sweep(run_for_m, m_values)
        sweep_path = os.path.join(cfg.output_dir, "sweep.json")
        _write_text(
            sweep_path,
            json.dumps({str(m): pct(f1) for m, f1 in report.per_m_f1.items()}, indent=2)
            + "\n",
        )
        row = "  ".join(f"m={m}: {pct(f1):.2f}" for m, f1 in sorted(report.per_m_f1.items()))
        print(f"aspect sweep F1: {row}")

    payload = report.to_json_dict()
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_text(os.path.join(cfg.output_dir, "report.json"), json.dumps(payload, indent=2, sort_keys=True) + "\n")

    rows = {"overall": payload}
    for lang, sub in (payload.get("per_language") or {}).items():
        rows[f"lang:{lang}"] = sub
    table = evaluation.render_table(rows)
    _write_text(os.path.join(cfg.output_dir, "report.txt"), table)
    print(table, end="")

    lines = [
        json.dumps(
            {
                "id": p.pair_id,
                "gold": p.gold,
                "predicted": p.predicted,
                "lang": p.lang,
                "predicates1": p.predicates1,
                "predicates2": p.predicates2,
            }
        )
        for p in predictions
    ]
    _write_text(os.path.join(cfg.output_dir, "predictions.jsonl"), "\n".join(lines) + "\n")
    print(f"reports written under {cfg.output_dir}")
    return 0


def _parse_sweep(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--sweep expects comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError("--sweep list is empty")
    return values


# ---------------------------------------------------------------------------
# compare / gen-fixture

def cmd_compare(args) -> int:
    report_a = json.loads(_read_text(args.report_a))
    report_b = json.loads(_read_text(args.report_b))
    delta = evaluation.compare_runs(report_a, report_b)
    summary = {
        key: delta[key]
        for key in ("accuracy", "precision", "recall", "f1")
        if key in delta
    }
    print("delta (a - b): " + "  ".join(f"{k}={v:+.2f}" for k, v in summary.items()))
    if args.out:
        _write_text(args.out, json.dumps(delta, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_gen_fixture(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "srl":
        fixture = fixtures.make_srl_fixture(
            n_sentences=args.train_size or 40, seed=args.seed
        )
        _write_text(os.path.join(args.out, "gold.conll"), sentences_to_conll(fixture.gold))
        for idx, model_out in enumerate(fixture.predictions):
            _write_text(
                os.path.join(args.out, f"model_{idx:02d}.conll"),
                sentences_to_conll(model_out),
            )
        token_lines = [
            json.dumps({"sentence_id": sid, "tokens": list(tokens)})
            for sid, tokens in fixture.tokens_by_id.items()
        ]
        _write_text(os.path.join(args.out, "tokens.jsonl"), "\n".join(token_lines) + "\n")
        print(
            f"wrote {len(fixture.gold)} gold sentences and "
            f"{len(fixture.predictions)} prediction files to {args.out}"
        )
        return 0

    n_train = args.train_size or (32 if args.kind == "separable" else 96)
    n_test = args.test_size if args.test_size is not None else (16 if args.kind == "separable" else 48)
    fixture = fixtures.make_pair_fixture(args.kind, n_train, n_test, seed=args.seed)
    _write_text(os.path.join(args.out, "train_pairs.jsonl"), pairs_to_jsonl(fixture.train_pairs))
    _write_text(os.path.join(args.out, "test_pairs.jsonl"), pairs_to_jsonl(fixture.test_pairs))
    _write_text(
        os.path.join(args.out, "aspects.jsonl"),
        aspect_sets_to_jsonl(fixture.aspect_sets.values()),
    )
    config = fixtures.toy_run_config(args.kind, m=args.m, seed=args.seed)
    _write_text(os.path.join(args.out, "config.json"), json.dumps(config, indent=2) + "\n")
    print(
        f"wrote {len(fixture.train_pairs)} train / {len(fixture.test_pairs)} test "
        f"pairs plus aspects and config.json to {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semrte", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("srl-eval", help="span P/R/F1 of a prediction file against gold")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("-o", "--out", default=None, help="write the PRF JSON here")
    p.set_defaults(func=cmd_srl_eval)

    p = sub.add_parser("srl-aggregate", help="average per-fold P/R/F1 files")
    p.add_argument("folds", nargs="+")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_srl_aggregate)

    p = sub.add_parser("merge-aspects", help="merge tagger outputs into aspect sets")
    p.add_argument("--pred", nargs="+", required=True, help="prediction files, one per tagger")
    p.add_argument("--tokens", required=True, help="JSONL of {sentence_id, tokens}")
    p.add_argument("-m", type=int, default=2, help="aspect capacity")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_merge_aspects)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--learning-rate", type=float, dest="learning_rate", default=None)
    p.add_argument("--output-dir", dest="output_dir", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument(
        "--ablate-semantics",
        dest="ablate_semantics",
        action="store_true",
        help="replace every aspect row with all-O before encoding",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output-dir", dest="output_dir", default=None)
    p.add_argument("--sweep", default=None, help="comma-separated aspect capacities to retrain and score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="elementwise delta of two report JSON files")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-fixture", help="generate a synthetic corpus")
    p.add_argument("--kind", required=True, choices=fixtures.KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-size", type=int, dest="train_size", default=None)
    p.add_argument("--test-size", type=int, dest="test_size", default=None)
    p.add_argument("--m", type=int, default=2)
    p.set_defaults(func=cmd_gen_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SemrteError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
