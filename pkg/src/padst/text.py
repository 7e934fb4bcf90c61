"""Tokenisation, vocabularies, corpus files and dataset construction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS, MASK, POS_TAG, NEG_TAG = "<pad>", "<unk>", "<bos>", "<eos>", "<mask>", "<pos>", "<neg>"
RESERVED = (PAD, UNK, BOS, EOS, MASK, POS_TAG, NEG_TAG)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, MASK_ID, POS_ID, NEG_ID = range(7)

SENTIMENTS = ("pos", "neg")
LABELS = ("pos", "neg", "unlabeled")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


class DataError(ValueError):
    """Malformed corpus, lexicon or dictionary input."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split off punctuation, split on whitespace.

    >>> tokenize("The food was tasteless.")
    ['the', 'food', 'was', 'tasteless', '.']
    """
    return _TOKEN_RE.findall(text.lower())


def split_sentences(review: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT_RE.split(review.strip()) if s.strip()]


def opposite(sentiment: str) -> str:
    if sentiment not in SENTIMENTS:
        raise ValueError(f"unknown sentiment {sentiment!r}")
    return "neg" if sentiment == "pos" else "pos"


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    sentiment: str = "unlabeled"
    source_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise DataError("sentence has no tokens")
        if any(not t or any(c.isspace() for c in t) for t in self.tokens):
            raise DataError(f"token with whitespace in {self.tokens!r}")
        if self.sentiment not in LABELS:
            raise DataError(f"unknown sentiment label {self.sentiment!r}")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    sentences: list[Sentence] = field(default_factory=list)
    split: str = "train"

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    def by_sentiment(self, sentiment: str) -> list[Sentence]:
        return [s for s in self.sentences if s.sentiment == sentiment]

    def token_lists(self) -> list[list[str]]:
        return [list(s.tokens) for s in self.sentences]


class Vocab:
    """Word-level vocabulary; ids 0..6 are the reserved symbols in ``RESERVED`` order."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            self.add(tok)

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]]) -> "Vocab":
        seen: dict[str, None] = {}
        for toks in sentences:
            for t in toks:
                seen.setdefault(t, None)
        return cls(sorted(seen))

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS_ID:
                break
            if strip and i in (PAD_ID, BOS_ID, POS_ID, NEG_ID):
                continue
            out.append(self.itos[i])
        return out


# corpus files ------------------------------------------------------------

def read_corpus(path: str | Path, fmt: str | None = None, split: str = "train") -> Corpus:
    """Read a JSONL or TSV corpus; text is taken as space-separated tokens."""
    path = Path(path)
    fmt = fmt or ("tsv" if path.suffix == ".tsv" else "jsonl")
    if fmt not in ("jsonl", "tsv"):
        raise DataError(f"unknown corpus format {fmt!r}")
    sentences = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                if fmt == "jsonl":
                    obj = json.loads(line)
                    if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                        raise DataError("expected an object with a string 'text' field")
                    label = obj.get("sentiment", "unlabeled")
                    source_id = obj.get("id")
                    text = obj["text"]
                else:
                    label, sep, text = line.partition("\t")
                    if not sep:
                        raise DataError("expected 'sentiment<TAB>text'")
                    source_id = None
                if label not in LABELS:
                    raise DataError(f"unknown sentiment label {label!r}")
                sentences.append(Sentence(tuple(text.split()), label, source_id))
            except (json.JSONDecodeError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return Corpus(sentences, split)


def write_corpus(corpus: Corpus | Iterable[Sentence], path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("tsv" if path.suffix == ".tsv" else "jsonl")
    if fmt not in ("jsonl", "tsv"):
        raise DataError(f"unknown corpus format {fmt!r}")
    with path.open("w", encoding="utf-8") as fh:
        for s in corpus:
            if fmt == "jsonl":
                obj = {"text": s.text, "sentiment": s.sentiment}
                if s.source_id is not None:
                    obj["id"] = s.source_id
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            else:
                if s.source_id is not None:
                    raise DataError("TSV corpora cannot carry sentence ids")
                fh.write(f"{s.sentiment}\t{s.text}\n")


# dataset construction ------------------------------------------------------

def is_repetitive(tokens: Sequence[str], rep_limit: int = 3) -> bool:
    """True if a token repeats more than ``rep_limit`` times in a row, or one
    token makes up more than half of a sentence of six or more tokens."""
    run = 1
    for prev, cur in zip(tokens, tokens[1:]):
        run = run + 1 if cur == prev else 1
        if run > rep_limit:
            return True
    if len(tokens) >= 6:
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        if max(counts.values()) * 2 > len(tokens):
            return True
    return False


def keep_sentence(tokens: Sequence[str], score: float, min_len=5, rep_limit=3, polarity_threshold=0.5) -> bool:
    return (
        len(tokens) >= min_len
        and not is_repetitive(tokens, rep_limit)
        and score != 0
        and abs(score) >= polarity_threshold
    )


def filter_dataset(
    scored: Iterable[tuple[Sequence[str] | str, float]],
    min_len: int = 5,
    rep_limit: int = 3,
    polarity_threshold: float = 0.5,
    split: str = "train",
) -> Corpus:
    """Keep long, non-repetitive, strongly polar sentences; label by score sign.

    Raw strings are tokenised first; token sequences are used as given.
    """
    kept = []
    for i, (item, score) in enumerate(scored):
        tokens = tokenize(item) if isinstance(item, str) else list(item)
        if keep_sentence(tokens, score, min_len, rep_limit, polarity_threshold):
            kept.append(Sentence(tuple(tokens), "pos" if score > 0 else "neg", str(i)))
    return Corpus(kept, split)


def split_corpus(corpus: Corpus, valid_size: int, test_size: int, seed: int) -> dict[str, Corpus]:
    """Per-sentiment held-out splits, disjoint from train by exact sentence string."""
    rng = np.random.default_rng(seed)
    out = {"train": [], "valid": [], "test": []}
    for sentiment in SENTIMENTS:
        unique: dict[str, Sentence] = {}
        for s in corpus.by_sentiment(sentiment):
            unique.setdefault(s.text, s)
        items = list(unique.values())
        if len(items) < valid_size + test_size:
            raise DataError(
                f"only {len(items)} distinct {sentiment} sentences for {valid_size}+{test_size} held out"
            )
        order = rng.permutation(len(items))
        items = [items[i] for i in order]
        out["valid"] += items[:valid_size]
        out["test"] += items[valid_size : valid_size + test_size]
        held = {s.text for s in items[: valid_size + test_size]}
        out["train"] += [s for s in corpus.by_sentiment(sentiment) if s.text not in held]
    return {name: Corpus(sents, name) for name, sents in out.items()}


# synthetic fixtures --------------------------------------------------------

DEFAULT_TEMPLATES = (
    "the {pivot} {thing} arrived on {day} .",
    "my {person} said the {thing} was {pivot} .",
    "this {thing} is {pivot} for the {place} .",
    "i found the {thing} {pivot} after {number} days .",
    "the {thing} from the {place} looks {pivot} .",
    "overall a {pivot} {thing} for my {person} .",
    "we think the {thing} is {pivot} .",
    "it was a {pivot} {thing} and my {person} agreed .",
)

DEFAULT_FILLERS = {
    "thing": (
        "movie", "book", "phone", "charger", "lamp", "jacket", "blender", "camera",
        "kettle", "backpack", "album", "novel", "printer", "keyboard", "pillow",
    ),
    "person": ("daughter", "son", "wife", "husband", "friend", "mother", "father", "neighbor"),
    "place": ("kitchen", "office", "garden", "bedroom", "car", "school", "garage", "studio"),
    "day": ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"),
    "number": ("two", "three", "four", "five", "six", "ten"),
}

DEFAULT_PIVOTS = {
    "pos": ("great", "good", "excellent", "wonderful", "amazing", "perfect", "nice", "lovely", "fantastic", "awesome"),
    "neg": ("bad", "terrible", "awful", "horrible", "poor", "lousy", "useless", "disappointing", "mediocre", "dreadful"),
}


def _fill(template: str, slots: dict[str, str]) -> str:
    return template.format(**slots)


def make_synthetic_corpus(
    templates: Sequence[str],
    lexicon,
    n: int,
    seed: int,
    pivots: dict[str, Sequence[str]] | None = None,
    fillers: dict[str, Sequence[str]] | None = None,
    split: str = "train",
) -> Corpus:
    """``n`` templated sentences per sentiment, each carrying one lexicon pivot.

    Pivot candidates default to every lexicon entry of the matching label;
    the sentence label is always the label of the inserted pivot.
    """
    fillers = DEFAULT_FILLERS if fillers is None else fillers
    if pivots is None:
        pivots = {lab: sorted(t for t, (_, l) in lexicon.entries.items() if l == lab) for lab in SENTIMENTS}
    pools = {}
    for lab in SENTIMENTS:
        pool = [p for p in pivots.get(lab, ()) if lexicon.label(p) == lab]
        if not pool:
            raise DataError(f"no {lab} pivots available in the lexicon")
        pools[lab] = pool
    for t in templates:
        if "{pivot}" not in t:
            raise DataError(f"template without a {{pivot}} slot: {t!r}")
    rng = np.random.default_rng(seed)
    out = []
    for lab in SENTIMENTS:
        for i in range(n):
            template = templates[rng.integers(len(templates))]
            slots = {name: words[rng.integers(len(words))] for name, words in fillers.items()}
            slots["pivot"] = pools[lab][rng.integers(len(pools[lab]))]
            out.append(Sentence(tuple(_fill(template, slots).split()), lab, f"{lab}-{i}"))
    return Corpus(out, split)
