"""Transformer encoder-decoder and the sentiment-transfer model variants.

Variants differ only in how encoders and decoders are wired:

* ``style_tok``: one encoder, one decoder started with ``<pos>``/``<neg>``.
* ``two_sep``: an independent (encoder, decoder) pair per sentiment.
* ``shared_enc_two_dec``, ``pretrained_enc``, ``denoised``: one shared encoder
  and a decoder per sentiment. The latter two differ from the first only in
  how the encoder was initialised before finetuning.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .text import BOS_ID, EOS_ID, MASK_ID, NEG_ID, PAD_ID, POS_ID, SENTIMENTS, Vocab, opposite

log = logging.getLogger(__name__)

VARIANTS = ("style_tok", "two_sep", "shared_enc_two_dec", "pretrained_enc", "denoised")
PRESETS = {
    "desk": dict(layers=2, heads=2, d_model=64, d_ff=256, max_len=32),
    "large": dict(layers=4, heads=8, d_model=512, d_ff=512, max_len=128),
}
NEG_INF = -1e9
# never emitted by greedy decoding
_BANNED_OUTPUTS = (PAD_ID, BOS_ID, MASK_ID, POS_ID, NEG_ID)


class ModelConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    layers: int = 2
    heads: int = 2
    d_model: int = 64
    d_ff: int = 256
    vocab_size: int = 0
    max_len: int = 32
    variant: str = "shared_enc_two_dec"
    dropout: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.heads < 1 or self.d_model % self.heads:
            raise ModelConfigError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.max_len < 2:
            raise ModelConfigError("max_len must be at least 2")
        if self.layers < 1 or self.d_ff < 1:
            raise ModelConfigError("layers and d_ff must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelConfigError(f"dropout={self.dropout} outside [0, 1)")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        return cls(**{**PRESETS[name], **overrides})

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def architecture(self) -> str:
        if self.variant in ("style_tok", "two_sep"):
            return self.variant
        return "shared_enc_two_dec"


# building blocks ----------------------------------------------------------

class Module:
    training = False
    rng: np.random.Generator | None = None

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "", _seen: set | None = None) -> Iterator[tuple[str, Tensor]]:
        seen = set() if _seen is None else _seen
        for name, value in self._children():
            if isinstance(value, Tensor):
                if value.requires_grad and id(value) not in seen:
                    seen.add(id(value))
                    yield prefix + name, value
            else:
                yield from value.named_parameters(f"{prefix}{name}.", seen)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True, rng: np.random.Generator | None = None) -> "Module":
        for m in self.modules():
            m.training = mode
            if rng is not None:
                m.rng = rng
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _xavier(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        self.weight = ad.parameter(_xavier(rng, d_in, d_out))
        self.bias = ad.parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        y = ad.matmul(x.reshape(-1, x.shape[-1]), self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(*lead, y.shape[-1])


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = ad.parameter(np.ones(d))
        self.bias = ad.parameter(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


class MultiHeadAttention(Module):
    # q/k/v projections carry no bias: a key bias is exactly redundant under softmax
    def __init__(self, d_model: int, heads: int, rng, dropout: float = 0.0):
        self.heads = heads
        self.d_head = d_model // heads
        self.dropout = dropout
        self.q = Linear(d_model, d_model, rng, bias=False)
        self.k = Linear(d_model, d_model, rng, bias=False)
        self.v = Linear(d_model, d_model, rng, bias=False)
        self.out = Linear(d_model, d_model, rng)

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, memory: Tensor, mask: np.ndarray) -> Tensor:
        """``mask`` is additive and broadcastable to [B, heads, Tq, Tk]."""
        b, t, d = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(memory)), self._split(self.v(memory))
        scores = ad.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.d_head)) + mask
        weights = ad.dropout(ad.softmax(scores), self.dropout, self.rng, self.training)
        ctx = ad.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.out(ctx)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng, dropout: float = 0.0):
        self.inner = Linear(d_model, d_ff, rng)
        self.outer = Linear(d_ff, d_model, rng)
        self.dropout = dropout

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.dropout(ad.relu(self.inner(x)), self.dropout, self.rng, self.training)
        return self.outer(h)


class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.norm1 = LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, cfg.dropout)
        self.norm2 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng, cfg.dropout)
        self.dropout = cfg.dropout

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.norm1(x)
        x = x + ad.dropout(self.attn(h, h, mask), self.dropout, self.rng, self.training)
        return x + ad.dropout(self.ff(self.norm2(x)), self.dropout, self.rng, self.training)


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.norm1 = LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, cfg.dropout)
        self.norm2 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, cfg.dropout)
        self.norm3 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng, cfg.dropout)
        self.dropout = cfg.dropout

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray, cross_mask: np.ndarray) -> Tensor:
        drop = lambda t: ad.dropout(t, self.dropout, self.rng, self.training)  # noqa: E731
        h = self.norm1(x)
        x = x + drop(self.self_attn(h, h, self_mask))
        x = x + drop(self.cross_attn(self.norm2(x), memory, cross_mask))
        return x + drop(self.ff(self.norm3(x)))


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class _Stack(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.d_model = cfg.d_model
        self.embed = ad.parameter(rng.normal(0.0, cfg.d_model**-0.5, size=(cfg.vocab_size, cfg.d_model)))
        self.positions = sinusoidal_positions(cfg.max_len + 1, cfg.d_model)
        self.dropout = cfg.dropout

    def _embed(self, ids: np.ndarray) -> Tensor:
        x = ad.embedding(self.embed, ids) * math.sqrt(self.d_model)
        x = x + self.positions[: ids.shape[1]].astype(self.embed.dtype)
        return ad.dropout(x, self.dropout, self.rng, self.training)


class Encoder(_Stack):
    def __init__(self, cfg: ModelConfig, rng):
        super().__init__(cfg, rng)
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.norm = LayerNorm(cfg.d_model)

    def __call__(self, ids: np.ndarray, pad: np.ndarray) -> Tensor:
        mask = padding_mask(pad, self.embed.dtype)
        x = self._embed(ids)
        for layer in self.layers:
            x = layer(x, mask)
        return self.norm(x)


class Decoder(_Stack):
    def __init__(self, cfg: ModelConfig, rng):
        super().__init__(cfg, rng)
        self.layers = [DecoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.norm = LayerNorm(cfg.d_model)
        self.proj = Linear(cfg.d_model, cfg.vocab_size, rng)

    def __call__(self, ids: np.ndarray, memory: Tensor, src_pad: np.ndarray) -> Tensor:
        dtype = self.embed.dtype
        t = ids.shape[1]
        causal = np.triu(np.full((t, t), NEG_INF, dtype=dtype), k=1)
        self_mask = causal[None, None] + padding_mask(ids == PAD_ID, dtype)
        cross_mask = padding_mask(src_pad, dtype)
        x = self._embed(ids)
        for layer in self.layers:
            x = layer(x, memory, self_mask, cross_mask)
        return self.proj(self.norm(x))


def padding_mask(pad: np.ndarray, dtype) -> np.ndarray:
    """[B, T] bool pad flags -> additive [B, 1, 1, T] key mask."""
    return np.where(pad, NEG_INF, 0.0).astype(dtype)[:, None, None, :]


def pad_batch(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    return ids, ids == PAD_ID


# models -------------------------------------------------------------------

@dataclass
class LatentRepresentation:
    z: np.ndarray
    pad: np.ndarray

    @property
    def length(self) -> int:
        return int((~self.pad).sum())


@dataclass
class Route:
    """Encoder/decoder attribute names serving one output sentiment."""

    encoder: str
    decoder: str
    start_id: int


class TransferModel(Module):
    """Encoder(s) and sentiment decoder(s) sharing one vocabulary."""

    def __init__(self, config: ModelConfig, vocab: Vocab, seed: int = 0):
        if config.vocab_size != len(vocab):
            config = ModelConfig(**{**config.to_dict(), "vocab_size": len(vocab)})
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        arch = config.architecture
        if arch == "two_sep":
            self.encoder_pos = Encoder(config, rng)
            self.decoder_pos = Decoder(config, rng)
            self.encoder_neg = Encoder(config, rng)
            self.decoder_neg = Decoder(config, rng)
        elif arch == "style_tok":
            self.encoder = Encoder(config, rng)
            self.decoder = Decoder(config, rng)
        else:
            self.encoder = Encoder(config, rng)
            self.decoder_pos = Decoder(config, rng)
            self.decoder_neg = Decoder(config, rng)
        self.routing_log: list[tuple[str, str, str]] = []
        self.truncated = 0
        self.history: dict[str, list[float]] = {}
        self.pretrain_decoder: Decoder | None = None

    def route(self, sentiment: str) -> Route:
        """Modules whose decoder produces ``sentiment`` text."""
        if sentiment not in SENTIMENTS:
            raise ValueError(f"unknown sentiment tag {sentiment!r}")
        arch = self.config.architecture
        if arch == "two_sep":
            return Route(f"encoder_{sentiment}", f"decoder_{sentiment}", BOS_ID)
        if arch == "style_tok":
            return Route("encoder", "decoder", POS_ID if sentiment == "pos" else NEG_ID)
        return Route("encoder", f"decoder_{sentiment}", BOS_ID)

    def encoders(self) -> dict[str, Encoder]:
        return {n: m for n, m in vars(self).items() if isinstance(m, Encoder)}

    def decoders(self) -> dict[str, Decoder]:
        return {n: m for n, m in vars(self).items() if isinstance(m, Decoder) and n != "pretrain_decoder"}

    def _children(self):
        for name, value in super()._children():
            if name != "pretrain_decoder":
                yield name, value

    # id handling
    def source_ids(self, tokens: Sequence[str]) -> list[int]:
        ids = self.vocab.encode(tokens)
        if len(ids) > self.config.max_len:
            self.truncated += 1
            ids = ids[: self.config.max_len]
        return ids

    def target_ids(self, tokens: Sequence[str]) -> list[int]:
        ids = self.vocab.encode(tokens)
        if len(ids) > self.config.max_len - 1:
            self.truncated += 1
            ids = ids[: self.config.max_len - 1]
        return ids


def teacher_forced_loss(
    encoder: Encoder,
    decoder: Decoder,
    src: Sequence[Sequence[int]],
    tgt: Sequence[Sequence[int]],
    start_id: int,
) -> Tensor:
    src_ids, src_pad = pad_batch(src)
    dec_in, _ = pad_batch([[start_id] + list(t) for t in tgt])
    dec_out, _ = pad_batch([list(t) + [EOS_ID] for t in tgt])
    memory = encoder(src_ids, src_pad)
    logits = decoder(dec_in, memory, src_pad)
    return ad.cross_entropy(logits, dec_out, pad_id=PAD_ID)


def greedy_decode(
    decoder: Decoder,
    memory: Tensor,
    src_pad: np.ndarray,
    start_id: int,
    max_steps: int,
) -> list[list[int]]:
    """Batched argmax decoding; stops at ``<eos>`` or after ``max_steps`` tokens."""
    batch = memory.shape[0]
    ys = np.full((batch, 1), start_id, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)
    with ad.no_grad():
        for _ in range(max_steps):
            logits = decoder(ys, memory, src_pad).data[:, -1].copy()
            logits[:, _BANNED_OUTPUTS] = -np.inf
            nxt = logits.argmax(axis=-1)
            nxt[done] = PAD_ID
            ys = np.concatenate([ys, nxt[:, None]], axis=1)
            done |= nxt == EOS_ID
            if done.all():
                break
    out = []
    for row in ys[:, 1:]:
        seq = []
        for i in row:
            if i in (EOS_ID, PAD_ID):
                break
            seq.append(int(i))
        out.append(seq)
    return out


def encode(model: TransferModel, tokens: Sequence[str], route: str | None = None) -> LatentRepresentation:
    """Latent matrix [T x d_model] for one (already translated) sentence.

    ``route`` picks the encoder of the named sentiment's pair; it is only
    needed for ``two_sep`` models.
    """
    if route is None:
        if model.config.architecture == "two_sep":
            raise ValueError("two_sep models need a route sentiment to pick an encoder")
        route = "pos"
    encoder = getattr(model, model.route(route).encoder)
    ids, pad = pad_batch([model.source_ids(tokens)])
    was_training = encoder.training
    encoder.eval()
    with ad.no_grad():
        z = encoder(ids, pad).data[0]
    encoder.train(was_training)
    return LatentRepresentation(z, pad[0])


def decode(
    model: TransferModel,
    latent: LatentRepresentation,
    sentiment: str,
    mode: str = "greedy",
    targets: Sequence[str] | None = None,
    max_steps: int | None = None,
):
    """Greedy tokens, or teacher-forced logits [T x V] when ``mode='teacher_forced'``."""
    r = model.route(sentiment)
    decoder: Decoder = getattr(model, r.decoder)
    memory = Tensor(latent.z[None])
    pad = latent.pad[None]
    if mode == "teacher_forced":
        if targets is None:
            raise ValueError("teacher_forced decoding needs targets")
        dec_in = np.array([[r.start_id] + model.target_ids(targets)], dtype=np.int64)
        with ad.no_grad():
            return decoder(dec_in, memory, pad).data[0]
    if mode != "greedy":
        raise ValueError(f"unknown decode mode {mode!r}")
    steps = model.config.max_len - 1 if max_steps is None else max_steps
    ids = greedy_decode(decoder, memory, pad, r.start_id, steps)[0]
    return model.vocab.decode(ids)


def transfer_batch(
    model: TransferModel,
    sentences: Sequence[Sequence[str]],
    source_sentiments: Sequence[str],
    translator,
    noise_lexicon=None,
    noise=None,
    seed: int = 0,
    batch_size: int = 64,
) -> list[list[str]]:
    """Flip each sentence's sentiment with the opposite-sentiment decoder.

    Inputs are translated first; if both ``noise_lexicon`` and ``noise`` (rates
    plus mode) are given they are corrupted like finetuning inputs.
    """
    from .noising import apply_noise

    if len(sentences) != len(source_sentiments):
        raise ValueError("one source sentiment per sentence is required")
    for s in source_sentiments:
        if s not in SENTIMENTS:
            raise ValueError(f"unknown sentiment tag {s!r}")
    rng = np.random.default_rng(seed)
    model.eval()
    results: list[list[str] | None] = [None] * len(sentences)
    for src_sent in SENTIMENTS:
        idx = [i for i, s in enumerate(source_sentiments) if s == src_sent]
        if not idx:
            continue
        r = model.route(opposite(src_sent))
        encoder, decoder = getattr(model, r.encoder), getattr(model, r.decoder)
        model.routing_log.append(("transfer", r.decoder, src_sent))
        for start in range(0, len(idx), batch_size):
            chunk = idx[start : start + batch_size]
            srcs = []
            for i in chunk:
                inter = translator.translate(list(sentences[i]))
                if noise is not None and noise_lexicon is not None:
                    rates, mode = noise
                    inter = apply_noise(inter, noise_lexicon, rates.p_general, rates.p_polarity, mode, rng)
                srcs.append(model.source_ids(inter))
            ids, pad = pad_batch(srcs)
            with ad.no_grad():
                memory = encoder(ids, pad)
            outs = greedy_decode(decoder, memory, pad, r.start_id, model.config.max_len - 1)
            for i, out in zip(chunk, outs):
                results[i] = model.vocab.decode(out)
    return results  # type: ignore[return-value]


def transfer(model: TransferModel, tokens: Sequence[str], source_sentiment: str, translator, **kw) -> list[str]:
    return transfer_batch(model, [tokens], [source_sentiment], translator, **kw)[0]


class Seq2Seq(Module):
    """Plain single-decoder model, used for the learned translator."""

    def __init__(self, config: ModelConfig, vocab: Vocab, seed: int = 0):
        if config.vocab_size != len(vocab):
            config = ModelConfig(**{**config.to_dict(), "vocab_size": len(vocab)})
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(config, rng)
        self.decoder = Decoder(config, rng)

    def translate_ids(self, batch: Sequence[Sequence[int]], max_steps: Sequence[int] | int) -> list[list[int]]:
        self.eval()
        ids, pad = pad_batch([list(b)[: self.config.max_len] or [PAD_ID] for b in batch])
        with ad.no_grad():
            memory = self.encoder(ids, pad)
        steps = max_steps if isinstance(max_steps, int) else max(max_steps)
        outs = greedy_decode(self.decoder, memory, pad, BOS_ID, steps)
        if isinstance(max_steps, int):
            return outs
        return [o[:m] for o, m in zip(outs, max_steps)]
