"""Denoising pretraining of the encoder and sentiment-routed finetuning."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from itertools import islice
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .lexicon import PolarityLexicon
from .model import Decoder, ModelConfig, Seq2Seq, TransferModel, teacher_forced_loss
from .noising import NoiseRates, NoiseSpec, make_denoising_pairs
from .text import BOS_ID, SENTIMENTS, DataError, Vocab

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    batch_size: int = 32
    warmup: int = 0
    clip_norm: float = 1.0
    log_every: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def lr_at(self, step: int) -> float:
        if self.warmup and step < self.warmup:
            return self.lr * (step + 1) / self.warmup
        return self.lr


def derive_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _batches(stream: Iterator[tuple[list[str], list[str]]], size: int) -> Iterator[list[tuple[list[str], list[str]]]]:
    while True:
        batch = list(islice(stream, size))
        if not batch:
            return
        yield batch


def _step(opt: ad.Adam, loss: ad.Tensor, step: int, cfg: TrainConfig) -> float:
    value = float(loss.data)
    if not np.isfinite(value):
        raise ad.NonFiniteError(f"non-finite loss {value} at step {step}", step=step, tensor="loss")
    ad.backward(loss)
    ad.check_finite(((name, p.grad) for name, p in opt.params.items()), step)
    opt.clip(cfg.clip_norm)
    opt.step(cfg.lr_at(step))
    return value


def pretrain(
    model: TransferModel,
    general: Sequence[Sequence[str]],
    translator,
    lexicon: PolarityLexicon,
    noise: NoiseSpec,
    steps: int,
    seed: int,
    train: TrainConfig | None = None,
) -> TransferModel:
    """Train the encoder to reconstruct clean base-language sentences from
    noised translations, through a temporary decoder.

    The temporary decoder is left on ``model.pretrain_decoder`` for inspection
    and dropped by :func:`finetune`; only encoder weights carry over.
    """
    train = train or TrainConfig()
    if steps <= 0:
        return model
    if not general:
        raise DataError("pretraining corpus is empty")
    noise_seed, init_seed, drop_seed = derive_seeds(seed, 3)
    encoders = list(model.encoders().values())
    encoder = encoders[0]
    decoder = Decoder(model.config, np.random.default_rng(init_seed))
    source = [translator.translate(list(t)) for t in general]
    stream = make_denoising_pairs(
        source, general, lexicon, noise.pretrain, noise.mode, noise_seed, epochs=None, shuffle=True
    )
    params = [(f"encoder.{n}", p) for n, p in encoder.named_parameters()]
    params += [(f"pretrain_decoder.{n}", p) for n, p in decoder.named_parameters()]
    opt = ad.Adam(params, train.lr, train.beta1, train.beta2, train.eps)
    drop_rng = np.random.default_rng(drop_seed)
    encoder.train(True, drop_rng)
    decoder.train(True, drop_rng)
    losses = []
    for step, batch in enumerate(islice(_batches(stream, train.batch_size), steps)):
        opt.zero_grad()
        src = [model.source_ids(s) for s, _ in batch]
        tgt = [model.target_ids(t) for _, t in batch]
        losses.append(_step(opt, teacher_forced_loss(encoder, decoder, src, tgt, BOS_ID), step, train))
        if train.log_every and step % train.log_every == 0:
            log.info("pretrain step %d loss %.4f", step, losses[-1])
    for other in encoders[1:]:
        for (_, dst), (_, src_p) in zip(other.named_parameters(), encoder.named_parameters()):
            dst.data[...] = src_p.data
    model.eval()
    decoder.eval()
    model.pretrain_decoder = decoder
    model.history["pretrain"] = losses
    return model


def finetune(
    model: TransferModel,
    pos: Sequence[Sequence[str]],
    neg: Sequence[Sequence[str]],
    translator,
    lexicon: PolarityLexicon,
    noise: NoiseSpec,
    steps: int,
    seed: int,
    train: TrainConfig | None = None,
) -> TransferModel:
    """Alternate pos and neg batches; each batch only trains the route whose
    decoder produces that batch's sentiment."""
    train = train or TrainConfig()
    corpora = {"pos": pos, "neg": neg}
    for name, corpus in corpora.items():
        if not corpus:
            raise DataError(f"finetuning corpus for {name} is empty")
    model.pretrain_decoder = None
    pos_seed, neg_seed, drop_seed = derive_seeds(seed, 3)
    streams = {}
    for sentiment, s in zip(SENTIMENTS, (pos_seed, neg_seed)):
        clean = corpora[sentiment]
        source = [translator.translate(list(t)) for t in clean]
        pairs = make_denoising_pairs(source, clean, lexicon, noise.finetune, noise.mode, s, epochs=None, shuffle=True)
        streams[sentiment] = _batches(pairs, train.batch_size)
    opt = ad.Adam(model.named_parameters(), train.lr, train.beta1, train.beta2, train.eps)
    model.train(True, np.random.default_rng(drop_seed))
    losses: dict[str, list[float]] = {s: [] for s in SENTIMENTS}
    for step in range(steps):
        sentiment = SENTIMENTS[step % 2]
        batch = next(streams[sentiment])
        r = model.route(sentiment)
        model.routing_log.append(("finetune", r.decoder, sentiment))
        opt.zero_grad()
        src = [model.source_ids(s) for s, _ in batch]
        tgt = [model.target_ids(t) for _, t in batch]
        loss = teacher_forced_loss(getattr(model, r.encoder), getattr(model, r.decoder), src, tgt, r.start_id)
        losses[sentiment].append(_step(opt, loss, step, train))
        if train.log_every and step % train.log_every == 0:
            log.info("finetune step %d (%s) loss %.4f", step, sentiment, losses[sentiment][-1])
    model.eval()
    for s in SENTIMENTS:
        model.history[f"finetune_{s}"] = losses[s]
    return model


def train_translator(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
    config: ModelConfig,
    steps: int,
    seed: int,
    train: TrainConfig | None = None,
    vocab: Vocab | None = None,
) -> Seq2Seq:
    """Fit a single-decoder transformer on (base, intermediate) token pairs."""
    train = train or TrainConfig()
    if not pairs:
        raise DataError("parallel corpus is empty")
    if vocab is None:
        vocab = Vocab.build([t for pair in pairs for t in pair])
    init_seed, order_seed, drop_seed = derive_seeds(seed, 3)
    model = Seq2Seq(config, vocab, init_seed)
    stream = make_denoising_pairs(
        [p[0] for p in pairs], [p[1] for p in pairs], _EMPTY_LEXICON, NoiseRates(), "delete",
        order_seed, epochs=None, shuffle=True,
    )
    opt = ad.Adam(model.named_parameters(), train.lr, train.beta1, train.beta2, train.eps)
    model.train(True, np.random.default_rng(drop_seed))
    max_len = config.max_len
    losses = []
    for step, batch in enumerate(islice(_batches(stream, train.batch_size), steps)):
        opt.zero_grad()
        src = [vocab.encode(s)[:max_len] for s, _ in batch]
        tgt = [vocab.encode(t)[: max_len - 1] for _, t in batch]
        losses.append(_step(opt, teacher_forced_loss(model.encoder, model.decoder, src, tgt, BOS_ID), step, train))
    model.eval()
    model.history = {"train": losses}
    return model


_EMPTY_LEXICON = PolarityLexicon({}, "none")
