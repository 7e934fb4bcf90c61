"""End-to-end experiment stages driven by an :class:`ExperimentConfig`.

Each stage is a plain function so the CLI subcommands and the library share
one code path. :func:`run_pipeline` writes every artifact under a ``.partial``
name first and renames them only once all stages have succeeded.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .lexicon import PolarityLexicon, default_lexicon, load_lexicon, project_lexicon
from .metrics import EvalReport, TrigramLM, evaluate, write_report
from .model import TransferModel, transfer_batch
from .text import DEFAULT_TEMPLATES, Corpus, Vocab, make_synthetic_corpus, opposite, read_corpus, split_corpus, write_corpus
from .training import derive_seeds, finetune, pretrain
from .translate import make_translator

log = logging.getLogger(__name__)

PRETRAINED_VARIANTS = ("pretrained_enc", "denoised")
ARTIFACTS = ("config.resolved", "model.ckpt", "transferred.jsonl", "report.tsv", "report.json")


class StageError(RuntimeError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentData:
    lexicon: PolarityLexicon
    noise_lexicon: PolarityLexicon
    translator: object
    train: Corpus
    test: Corpus
    general: list[list[str]]
    vocab: Vocab = field(repr=False)


def load_lexicon_for(cfg: ExperimentConfig) -> PolarityLexicon:
    lex = load_lexicon(cfg.lexicon) if cfg.lexicon else default_lexicon()
    return lex.restrict(cfg.pivot_min_abs_score) if cfg.pivot_min_abs_score else lex


def translator_for(cfg: ExperimentConfig):
    return make_translator(cfg.translator, cfg.dict or None, cfg.mt_checkpoint or None)


def prepare_data(cfg: ExperimentConfig) -> ExperimentData:
    """Corpora, lexicons, translator and a vocabulary covering both languages."""
    lex = load_lexicon_for(cfg)
    translator = translator_for(cfg)
    labelled_seed, split_seed, general_seed = derive_seeds(cfg.stage_seed("data"), 3)
    if cfg.train_corpus:
        labelled = read_corpus(cfg.train_corpus)
    else:
        labelled = make_synthetic_corpus(DEFAULT_TEMPLATES, lex, cfg.synthetic_size, labelled_seed)
    if cfg.test_corpus:
        train, test = labelled, read_corpus(cfg.test_corpus, split="test")
    else:
        splits = split_corpus(labelled, cfg.valid_size, cfg.test_size, split_seed)
        train, test = splits["train"], splits["test"]
    if cfg.general_corpus:
        general = read_corpus(cfg.general_corpus).token_lists()
    else:
        general = make_synthetic_corpus(DEFAULT_TEMPLATES, lex, cfg.general_size, general_seed).token_lists()
    clean = train.token_lists() + general
    vocab = Vocab.build(clean + [translator.translate(t) for t in clean])
    return ExperimentData(lex, project_lexicon(lex, translator), translator, train, test, general, vocab)


def build_model(cfg: ExperimentConfig, data: ExperimentData) -> TransferModel:
    return TransferModel(cfg.model_config(), data.vocab, seed=cfg.stage_seed("init"))


def pretrain_stage(cfg: ExperimentConfig, model: TransferModel, data: ExperimentData) -> TransferModel:
    if cfg.variant not in PRETRAINED_VARIANTS:
        log.info("variant %s starts finetuning from random weights", cfg.variant)
        return model
    return pretrain(model, data.general, data.translator, data.noise_lexicon, cfg.noise_spec(),
                    cfg.pretrain_steps, cfg.stage_seed("pretrain"), cfg.train_config())


def finetune_stage(cfg: ExperimentConfig, model: TransferModel, data: ExperimentData) -> TransferModel:
    pos = [list(s.tokens) for s in data.train.by_sentiment("pos")]
    neg = [list(s.tokens) for s in data.train.by_sentiment("neg")]
    return finetune(model, pos, neg, data.translator, data.noise_lexicon, cfg.noise_spec(),
                    cfg.finetune_steps, cfg.stage_seed("finetune"), cfg.train_config())


def transfer_stage(cfg: ExperimentConfig, model: TransferModel, data: ExperimentData, corpus: Corpus) -> list[list[str]]:
    noise = None
    if cfg.noise_at_inference:
        spec = cfg.noise_spec()
        noise = (spec.finetune, spec.mode)
    return transfer_batch(model, corpus.token_lists(), [s.sentiment for s in corpus], data.translator,
                          noise_lexicon=data.noise_lexicon, noise=noise, seed=cfg.stage_seed("transfer"))


def write_transferred(path: str | Path, corpus: Corpus, outputs: Sequence[Sequence[str]]) -> None:
    """JSONL with the transferred text, its target sentiment and the source."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, (s, out) in enumerate(zip(corpus, outputs)):
            row = {
                "id": s.source_id if s.source_id is not None else str(i),
                "text": " ".join(out),
                "sentiment": opposite(s.sentiment),
                "source": s.text,
                "source_sentiment": s.sentiment,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def evaluate_stage(cfg: ExperimentConfig, data: ExperimentData, corpus: Corpus, outputs) -> EvalReport:
    targets = [opposite(s.sentiment) for s in corpus]
    name = cfg.noise_spec().name if cfg.variant == "denoised" else cfg.variant
    return evaluate(outputs, corpus.token_lists(), targets, data.lexicon, lm=TrigramLM(data.general), name=name)


def checkpoint_extra(cfg: ExperimentConfig) -> dict:
    return {"noise": cfg.noise_spec().name, "seed": cfg.seed, "version": __version__,
            "translator": cfg.translator, "dict": cfg.dict}


@dataclass
class RunResult:
    out_dir: Path
    model: TransferModel
    report: EvalReport
    outputs: list[list[str]]
    data: ExperimentData


def run_pipeline(cfg: ExperimentConfig) -> RunResult:
    """translate, noise, pretrain, finetune, transfer, evaluate; artifacts on disk.

    Raises :class:`StageError` naming the failed stage. Files written before
    the failure keep their ``.partial`` suffix.
    """
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("setup", exc) from exc
    partial = {name: out / f"{name}.partial" for name in ARTIFACTS}
    stage = "setup"
    try:
        cfg.write(partial["config.resolved"])
        stage = "data"
        data = prepare_data(cfg)
        (out / "data").mkdir(exist_ok=True)
        write_corpus(data.train, out / "data" / "train.jsonl")
        write_corpus(data.test, out / "data" / "test.jsonl")
        stage = "pretrain"
        model = pretrain_stage(cfg, build_model(cfg, data), data)
        stage = "finetune"
        model = finetune_stage(cfg, model, data)
        save_checkpoint(model, partial["model.ckpt"], checkpoint_extra(cfg))
        stage = "transfer"
        outputs = transfer_stage(cfg, model, data, data.test)
        write_transferred(partial["transferred.jsonl"], data.test, outputs)
        stage = "evaluate"
        report = evaluate_stage(cfg, data, data.test, outputs)
        write_report(report, partial["report.tsv"], partial["report.json"])
    except Exception as exc:
        log.error("stage %s failed: %s", stage, exc)
        raise StageError(stage, exc) from exc
    for name, path in partial.items():
        os.replace(path, out / name)
    return RunResult(out, model, report, outputs, data)
