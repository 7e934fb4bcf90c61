"""Forward translation into the intermediate language.

The default translator is a deterministic word cipher: dictionary entries
are substituted directly and every other token is ROT13-rotated. When a
rotated token would land on a dictionary output, rotation continues from that
entry's source word (cycle walking), which keeps the whole mapping a bijection
so :meth:`BilingualDict.invert` is exact.
"""

from __future__ import annotations

import codecs
from pathlib import Path
from typing import Protocol, Sequence

from .text import DataError, Vocab


class Translator(Protocol):
    name: str
    direction: str

    def translate(self, tokens: Sequence[str]) -> list[str]: ...


def rotate(token: str) -> str:
    return codecs.encode(token, "rot13")


class BilingualDict:
    """Case-insensitive base -> intermediate bijection with a rotation fallback."""

    def __init__(self, pairs: dict[str, str] | None = None):
        self.forward: dict[str, str] = {}
        self.backward: dict[str, str] = {}
        self.oov_log: dict[str, str] = {}
        for base, inter in (pairs or {}).items():
            base, inter = base.lower(), inter.lower()
            if base in self.forward and self.forward[base] != inter:
                raise DataError(f"conflicting translations for {base!r}")
            if inter in self.backward and self.backward[inter] != base:
                raise DataError(f"{inter!r} is the translation of both {self.backward[inter]!r} and {base!r}")
            self.forward[base] = inter
            self.backward[inter] = base

    def __len__(self) -> int:
        return len(self.forward)

    @classmethod
    def load(cls, path: str | Path) -> "BilingualDict":
        pairs: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not all(parts):
                    raise DataError(f"{path}:{lineno}: expected base<TAB>intermediate")
                if parts[0].lower() in pairs:
                    raise DataError(f"{path}:{lineno}: duplicate entry {parts[0]!r}")
                pairs[parts[0].lower()] = parts[1]
        return cls(pairs)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for base, inter in self.forward.items():
                fh.write(f"{base}\t{inter}\n")

    def map_token(self, token: str) -> str:
        token = token.lower()
        if token in self.forward:
            return self.forward[token]
        out = rotate(token)
        for _ in range(len(self.backward) + 1):
            if out not in self.backward:
                break
            out = rotate(self.backward[out])
        self.oov_log[out] = token
        return out

    def unmap_token(self, token: str) -> str:
        token = token.lower()
        if token in self.backward:
            return self.backward[token]
        out = rotate(token)
        for _ in range(len(self.forward) + 1):
            if out not in self.forward:
                break
            out = rotate(self.forward[out])
        return out

    def invert(self, tokens: Sequence[str]) -> list[str]:
        return [self.unmap_token(t) for t in tokens]


def cipher_translate(tokens: Sequence[str], dictionary: BilingualDict) -> list[str]:
    return [dictionary.map_token(t) for t in tokens]


class CipherTranslator:
    name = "cipher"
    direction = "base->intermediate"
    target_language = "cipher"

    def __init__(self, dictionary: BilingualDict | None = None):
        self.dictionary = dictionary if dictionary is not None else BilingualDict()

    def translate(self, tokens: Sequence[str]) -> list[str]:
        return cipher_translate(tokens, self.dictionary)

    def invert(self, tokens: Sequence[str]) -> list[str]:
        return self.dictionary.invert(tokens)


class LearnedTranslator:
    """Greedy decoding through a trained :class:`~padst.model.Seq2Seq`."""

    name = "learned"
    direction = "base->intermediate"
    target_language = "learned"

    def __init__(self, model):
        if model is None:
            raise FileNotFoundError("no translation model given")
        if len(model.vocab) <= len(Vocab().itos):
            raise ValueError("translation model has an empty vocabulary")
        self.model = model

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "LearnedTranslator":
        from .checkpoint import load_checkpoint

        if not Path(path).is_file():
            raise FileNotFoundError(f"translation checkpoint {path} does not exist")
        return cls(load_checkpoint(path))

    def translate(self, tokens: Sequence[str]) -> list[str]:
        return self.translate_batch([tokens])[0]

    def translate_batch(self, batch: Sequence[Sequence[str]]) -> list[list[str]]:
        vocab = self.model.vocab
        ids = [vocab.encode(t) for t in batch]
        limits = [2 * len(t) + 5 for t in batch]
        outs = self.model.translate_ids(ids, limits)
        result = []
        for toks, out in zip(batch, outs):
            words = vocab.decode(out)
            # the interface never returns empty output for non-empty input
            result.append(words if words or not toks else list(toks[:1]))
        return result


def make_translator(kind: str = "cipher", dict_path: str | Path | None = None, checkpoint: str | Path | None = None):
    if kind == "cipher":
        return CipherTranslator(BilingualDict.load(dict_path) if dict_path else None)
    if kind == "learned":
        if not checkpoint:
            raise FileNotFoundError("learned translator needs --mt-checkpoint")
        return LearnedTranslator.from_checkpoint(checkpoint)
    raise ValueError(f"unknown translator {kind!r}")


def translate_corpus(translator, sentences: Sequence[Sequence[str]]) -> list[list[str]]:
    if hasattr(translator, "translate_batch"):
        return translator.translate_batch(sentences)
    return [translator.translate(list(s)) for s in sentences]
