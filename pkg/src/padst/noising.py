"""Polarity-aware corruption of intermediate-language inputs and noise-spec names.

A noise-spec name such as ``WG03P08-AG03P08-M`` encodes general (G) and
polarity (P) corruption probabilities for the pretraining (W) and
finetuning (A) phases, plus the corruption mode: D deletes, M masks.
Digit groups are decimal fractions with the leading zero as the integer
part: ``03`` is 0.3, ``005`` is 0.05 and ``1`` is 1.0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterator, Sequence

import numpy as np

from .lexicon import PolarityLexicon
from .text import MASK

MODES = {"D": "delete", "M": "mask"}

_PROB_RE = re.compile(r"1|0\d*[1-9]")
_DIGITS_RE = re.compile(r"\d+")


class NoiseSpecError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseRates:
    p_general: float = 0.0
    p_polarity: float = 0.0

    def __post_init__(self):
        for name in ("p_general", "p_polarity"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise NoiseSpecError(f"{name}={value} outside [0, 1]")

    @property
    def is_zero(self) -> bool:
        return self.p_general == 0.0 and self.p_polarity == 0.0


@dataclass(frozen=True)
class NoiseSpec:
    pretrain: NoiseRates = field(default_factory=NoiseRates)
    finetune: NoiseRates = field(default_factory=NoiseRates)
    mode: str = "delete"

    def __post_init__(self):
        if self.mode not in MODES.values():
            raise NoiseSpecError(f"unknown noise mode {self.mode!r}")

    @property
    def is_zero(self) -> bool:
        return self.pretrain.is_zero and self.finetune.is_zero

    @property
    def name(self) -> str:
        return render_noise_spec(self)


ZERO_NOISE = NoiseSpec()


def _digits_to_prob(digits: str | None) -> float:
    if digits is None:
        return 0.0
    return float(Decimal(int(digits)).scaleb(1 - len(digits)))


def _prob_to_digits(p: float) -> str:
    if p == 1.0:
        return "1"
    d = Decimal(repr(p)).normalize()
    if not 0 < d < 1:
        raise NoiseSpecError(f"probability {p} has no name encoding")
    return "0" + format(d, "f").split(".")[1]


class _Scanner:
    def __init__(self, text: str):
        self.text, self.pos = text, 0

    def fail(self, what: str):
        raise NoiseSpecError(f"malformed noise spec {self.text!r}: expected {what} at position {self.pos}")

    def expect(self, literal: str) -> None:
        if not self.text.startswith(literal, self.pos):
            self.fail(repr(literal))
        self.pos += len(literal)

    def optional_prob(self, letter: str) -> float:
        if not self.text.startswith(letter, self.pos):
            return 0.0
        self.pos += 1
        m = _DIGITS_RE.match(self.text, self.pos)
        if m is None or not _PROB_RE.fullmatch(m.group()):
            self.fail("a probability ('1' or '0' followed by digits ending in 1-9)")
        self.pos = m.end()
        return _digits_to_prob(m.group())

    def phase(self) -> NoiseRates:
        return NoiseRates(self.optional_prob("G"), self.optional_prob("P"))


def parse_noise_spec(name: str) -> NoiseSpec:
    s = _Scanner(name)
    s.expect("W")
    pretrain = s.phase()
    s.expect("-A")
    finetune = s.phase()
    s.expect("-")
    if s.pos >= len(name) or name[s.pos] not in MODES:
        s.fail("mode 'D' or 'M'")
    mode = MODES[name[s.pos]]
    s.pos += 1
    if s.pos != len(name):
        s.fail("end of name")
    return NoiseSpec(pretrain, finetune, mode)


def render_noise_spec(spec: NoiseSpec) -> str:
    def phase(rates: NoiseRates) -> str:
        out = ""
        if rates.p_general:
            out += "G" + _prob_to_digits(rates.p_general)
        if rates.p_polarity:
            out += "P" + _prob_to_digits(rates.p_polarity)
        return out

    mode = {v: k for k, v in MODES.items()}[spec.mode]
    return f"W{phase(spec.pretrain)}-A{phase(spec.finetune)}-{mode}"


def apply_noise(
    tokens: Sequence[str],
    lexicon: PolarityLexicon,
    p_general: float,
    p_polarity: float,
    mode: str,
    rng: np.random.Generator,
) -> list[str]:
    """Independently corrupt each token: pivots with ``p_polarity``, others with
    ``p_general``. Deletion never empties the sentence; one random token survives."""
    if mode not in MODES.values():
        raise NoiseSpecError(f"unknown noise mode {mode!r}")
    tokens = list(tokens)
    if not tokens:
        return tokens
    probs = np.array([p_polarity if t in lexicon else p_general for t in tokens])
    hit = rng.random(len(tokens)) < probs
    if mode == "mask":
        return [MASK if h else t for t, h in zip(tokens, hit)]
    if hit.all():
        keep = int(rng.integers(len(tokens)))
        return [tokens[keep]]
    return [t for t, h in zip(tokens, hit) if not h]


def make_denoising_pairs(
    source: Sequence[Sequence[str]],
    target: Sequence[Sequence[str]],
    lexicon: PolarityLexicon,
    rates: NoiseRates,
    mode: str,
    seed: int,
    epochs: int | None = 1,
    shuffle: bool = False,
) -> Iterator[tuple[list[str], list[str]]]:
    """Yield (noised source, clean target) pairs.

    ``source`` is the intermediate-language side aligned one-to-one with the
    clean base-language ``target``. ``epochs=None`` streams forever with fresh
    noise on every pass.
    """
    if len(source) != len(target):
        raise ValueError(f"misaligned pairs: {len(source)} sources vs {len(target)} targets")
    rng = np.random.default_rng(seed)
    epoch = 0
    while epochs is None or epoch < epochs:
        order = rng.permutation(len(source)) if shuffle else range(len(source))
        for i in order:
            noised = apply_noise(source[i], lexicon, rates.p_general, rates.p_polarity, mode, rng)
            yield noised, list(target[i])
        epoch += 1
        if not len(source):
            return
