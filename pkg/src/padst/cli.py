"""Command-line entry point: ``padst <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 non-finite
numbers during training, 5 file I/O or checkpoint error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .autodiff import NonFiniteError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, config_fields, read_config_file
from .lexicon import load_lexicon, project_lexicon, save_lexicon
from .metrics import (
    TSV_HEADER,
    EvalReport,
    LexiconClassifier,
    TrigramLM,
    correlation_report,
    evaluate,
    load_embedding_file,
    load_score_file,
    read_table,
    write_report,
)
from .model import ModelConfigError, TransferModel
from .noising import NoiseSpecError
from .pipeline import (
    ExperimentData,
    StageError,
    build_model,
    checkpoint_extra,
    finetune_stage,
    load_lexicon_for,
    prepare_data,
    pretrain_stage,
    run_pipeline,
    transfer_stage,
    translator_for,
    write_transferred,
)
from .text import (
    DEFAULT_TEMPLATES,
    Corpus,
    DataError,
    filter_dataset,
    make_synthetic_corpus,
    read_corpus,
    split_corpus,
    split_sentences,
    tokenize,
    write_corpus,
)

log = logging.getLogger("padst")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code(exc.cause)
    if isinstance(exc, (ConfigError, ModelConfigError, NoiseSpecError)):
        return EXIT_CONFIG
    if isinstance(exc, (NonFiniteError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (CheckpointError, OSError)):
        return EXIT_IO
    if isinstance(exc, (DataError, ValueError, KeyError, json.JSONDecodeError)):
        return EXIT_DATA
    return 1


# argument parsing --------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.lower()
    if low not in ("true", "false", "1", "0", "yes", "no"):
        raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")
    return low in ("true", "1", "yes")


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file; flags override it")
    group = parser.add_argument_group("experiment keys")
    for f in config_fields():
        kind = {"int": int, "float": float, "bool": _bool}.get(f.type, str)
        group.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=kind,
            choices=f.metadata.get("choices"),
            default=argparse.SUPPRESS,
            help=f"{f.metadata['help']} (default: {f.default!r})",
        )


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict[str, object] = dict(read_config_file(args.config)) if getattr(args, "config", None) else {}
    names = {f.name for f in config_fields()}
    values.update({k: v for k, v in vars(args).items() if k in names})
    return ExperimentConfig.from_mapping(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padst", description="Polarity-aware denoising for sentiment transfer.")
    parser.add_argument("--version", action="version", version=f"padst {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-lexicon", help="project a polarity lexicon through the translator")
    p.add_argument("--base", help="base-language lexicon TSV (default: bundled)")
    p.add_argument("--out", required=True, help="output lexicon TSV")
    add_config_flags(p)

    p = sub.add_parser("build-dataset", help="filter raw reviews (or synthesise) and split into corpora")
    p.add_argument("--raw", help="raw reviews, one per line (omit for the synthetic corpus)")
    p.add_argument("--dataset-dir", required=True, help="directory for train/valid/test JSONL")
    add_config_flags(p)

    p = sub.add_parser("pretrain", help="denoising pretraining of the encoder")
    p.add_argument("--out", help="checkpoint path (default: OUT_DIR/pretrained.ckpt)")
    add_config_flags(p)

    p = sub.add_parser("finetune", help="train the sentiment decoders")
    p.add_argument("--checkpoint", help="pretrained checkpoint (omit to start from scratch)")
    p.add_argument("--out", help="checkpoint path (default: OUT_DIR/model.ckpt)")
    add_config_flags(p)

    p = sub.add_parser("transfer", help="flip the sentiment of a corpus")
    p.add_argument("--checkpoint", required=True, help="finetuned checkpoint")
    p.add_argument("--input", required=True, help="labelled JSONL or TSV corpus")
    p.add_argument("--out", required=True, help="output JSONL")
    add_config_flags(p)

    p = sub.add_parser("evaluate", help="score transferred sentences")
    p.add_argument("--hyp", required=True, help="transferred sentences (text lines or JSONL with 'text')")
    p.add_argument("--src", required=True, help="source sentences, aligned with --hyp")
    p.add_argument("--targets", required=True, help="target sentiment per line (or JSONL with 'sentiment')")
    p.add_argument("--lexicon", required=True, help="polarity lexicon TSV used for masking and the classifier")
    p.add_argument("--classifier-scores", help="external index<TAB>score style scores")
    p.add_argument("--lm-scores", help="external index<TAB>log-probability scores")
    p.add_argument("--embeddings", help="external index<TAB>role<TAB>vector file")
    p.add_argument("--lm-corpus", help="corpus for the default trigram LM (default: the sources)")
    p.add_argument("--name", default="system", help="row label in the report")
    p.add_argument("--out-prefix", required=True, help="writes PREFIX.tsv and PREFIX.json")

    p = sub.add_parser("run", help="run every stage and write a complete run directory")
    add_config_flags(p)

    p = sub.add_parser("report", help="collect reports into a table, correlations and figures")
    p.add_argument("reports", nargs="+", help="report .json files or table .tsv files")
    p.add_argument("--out-dir", required=True, help="directory for table.tsv, correlation.tsv and PNGs")
    p.add_argument("--no-figures", action="store_true", help="skip PNG output")
    return parser


# commands ----------------------------------------------------------------

def _text_lines(path: str, fields: tuple[str, ...] = ("text",)) -> list[str]:
    """Lines of a text file, or the first present field of each JSONL object."""
    out = []
    jsonl = path.endswith(".jsonl")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if jsonl:
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    out.append(str(next(obj[f] for f in fields if f in obj)))
                except (json.JSONDecodeError, StopIteration, TypeError):
                    raise DataError(f"{path}:{lineno}: expected an object with one of {fields}") from None
            else:
                out.append(line)
    return out


def cmd_build_lexicon(args) -> int:
    cfg = resolve_config(args)
    base = load_lexicon(args.base) if args.base else load_lexicon_for(cfg)
    projected = project_lexicon(base, translator_for(cfg))
    save_lexicon(projected, args.out)
    print(f"{len(projected)} entries written to {args.out} ({projected.dropped} dropped)")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.dataset_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.raw:
        clf = LexiconClassifier(load_lexicon_for(cfg))
        scored = []
        for review in _text_lines(args.raw):
            for sent in split_sentences(review):
                tokens = tokenize(sent)
                scored.append((tokens, clf.score(tokens)))
        corpus = filter_dataset(scored, cfg.min_len, cfg.rep_limit, cfg.polarity_threshold)
        print(f"kept {len(corpus)} of {len(scored)} sentences")
    else:
        lex = load_lexicon_for(cfg)
        corpus = make_synthetic_corpus(DEFAULT_TEMPLATES, lex, cfg.synthetic_size, cfg.stage_seed("data"))
    splits = split_corpus(corpus, cfg.valid_size, cfg.test_size, cfg.stage_seed("data"))
    for name, part in splits.items():
        write_corpus(part, out / f"{name}.jsonl")
        print(f"{name}: {len(part)} sentences")
    cfg.write(out / "config.resolved")
    return EXIT_OK


def _out_path(args, cfg: ExperimentConfig, default: str) -> Path:
    if args.out:
        return Path(args.out)
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    return Path(cfg.out_dir) / default


def cmd_pretrain(args) -> int:
    cfg = resolve_config(args)
    data = prepare_data(cfg)
    model = pretrain_stage(cfg, build_model(cfg, data), data)
    path = _out_path(args, cfg, "pretrained.ckpt")
    save_checkpoint(model, path, checkpoint_extra(cfg))
    cfg.write(path.with_name(path.name + ".config"))
    print(f"checkpoint written to {path}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = resolve_config(args)
    data = prepare_data(cfg)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        if not isinstance(model, TransferModel):
            raise ConfigError(f"{args.checkpoint} holds a translation model")
        if model.config.variant != cfg.variant:
            raise ConfigError(f"checkpoint variant {model.config.variant} differs from --variant {cfg.variant}")
        data.vocab = model.vocab
    else:
        model = build_model(cfg, data)
    model = finetune_stage(cfg, model, data)
    path = _out_path(args, cfg, "model.ckpt")
    save_checkpoint(model, path, checkpoint_extra(cfg))
    cfg.write(path.with_name(path.name + ".config"))
    print(f"checkpoint written to {path}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    cfg = resolve_config(args)
    model = load_checkpoint(args.checkpoint)
    if not isinstance(model, TransferModel):
        raise ConfigError(f"{args.checkpoint} holds a translation model")
    corpus = read_corpus(args.input, split="test")
    lex = load_lexicon_for(cfg)
    translator = translator_for(cfg)
    data = ExperimentData(lex, project_lexicon(lex, translator), translator, Corpus([]), corpus, [], model.vocab)
    outputs = transfer_stage(cfg, model, data, corpus)
    write_transferred(args.out, corpus, outputs)
    print(f"{len(outputs)} sentences written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    hyps = [h.split() for h in _text_lines(args.hyp)]
    # a transferred JSONL can serve as --src too: its "source" field wins
    srcs = [s.split() for s in _text_lines(args.src, ("source", "text"))]
    targets = [t.strip() for t in _text_lines(args.targets, ("sentiment",)) if t.strip()]
    lex = load_lexicon(args.lexicon)
    lm = None
    if args.lm_corpus:
        lm = TrigramLM([line.split() for line in _text_lines(args.lm_corpus)])
    report = evaluate(
        hyps, srcs, targets, lex, lm=lm,
        classifier_scores=load_score_file(args.classifier_scores) if args.classifier_scores else None,
        lm_scores=load_score_file(args.lm_scores) if args.lm_scores else None,
        embeddings=load_embedding_file(args.embeddings) if args.embeddings else None,
        name=args.name,
    )
    write_report(report, f"{args.out_prefix}.tsv", f"{args.out_prefix}.json")
    print(TSV_HEADER)
    print(report.to_row())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    result = run_pipeline(cfg)
    print(TSV_HEADER)
    print(result.report.to_row())
    print(f"artifacts in {result.out_dir}")
    return EXIT_OK


def load_reports(paths) -> list[EvalReport]:
    reports: list[EvalReport] = []
    for p in paths:
        if str(p).endswith(".json"):
            reports.append(EvalReport.from_json(json.loads(Path(p).read_text(encoding="utf-8"))))
        else:
            reports.extend(read_table(p))
    return reports


def report_table(reports, out_dir: str | Path, figures: bool = True) -> dict[str, Path]:
    """Write table.tsv and, with three or more systems, correlation.tsv and figures."""
    if not reports:
        raise DataError("a report table needs at least one report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {"table": out / "table.tsv"}
    written["table"].write_text("\n".join([TSV_HEADER] + [r.to_row() for r in reports]) + "\n", encoding="utf-8")
    if len(reports) >= 3:
        matrix = correlation_report(reports)
        written["correlation"] = out / "correlation.tsv"
        written["correlation"].write_text(matrix.to_tsv(), encoding="utf-8")
        if figures:
            from .plotting import correlation_heatmap, tradeoff_plot

            written["heatmap"] = correlation_heatmap(matrix, out / "correlation.png")
            written["tradeoff"] = tradeoff_plot(reports, out / "tradeoff.png")
    return written


def cmd_report(args) -> int:
    written = report_table(load_reports(args.reports), args.out_dir, figures=not args.no_figures)
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return EXIT_OK


COMMANDS = {
    "build-lexicon": cmd_build_lexicon,
    "build-dataset": cmd_build_dataset,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "transfer": cmd_transfer,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # mapped to documented exit codes
        code = exit_code(exc)
        print(f"padst {args.command}: error: {exc}", file=sys.stderr)
        if code == 1:
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
