"""Polarity lexicons: loading, pivot lookup and projection through a translator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .text import DataError

log = logging.getLogger(__name__)

SCORE_LIMIT = 4.0


@dataclass
class PolarityLexicon:
    """token -> (score, label); keys are lowercased, zero scores are excluded."""

    entries: dict[str, tuple[float, str]] = field(default_factory=dict)
    language: str = "en"
    duplicates: int = 0
    dropped: int = 0

    def __post_init__(self):
        cleaned = {}
        for tok, (score, label) in self.entries.items():
            _validate(tok, score, label)
            cleaned[tok.lower()] = (float(score), label)
        self.entries = cleaned

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.entries

    def label(self, token: str) -> str | None:
        entry = self.entries.get(token.lower())
        return entry[1] if entry else None

    def score(self, token: str) -> float:
        entry = self.entries.get(token.lower())
        return entry[0] if entry else 0.0

    def restrict(self, min_abs_score: float) -> "PolarityLexicon":
        """Only entries with |score| >= ``min_abs_score``."""
        kept = {t: e for t, e in self.entries.items() if abs(e[0]) >= min_abs_score}
        return PolarityLexicon(kept, self.language)


def _validate(token: str, score: float, label: str, where: str = "") -> None:
    if label not in ("pos", "neg"):
        raise DataError(f"{where}unknown label {label!r} for {token!r}")
    if score == 0 or (score > 0) != (label == "pos"):
        raise DataError(f"{where}score {score} inconsistent with label {label!r} for {token!r}")
    if abs(score) > SCORE_LIMIT:
        raise DataError(f"{where}score {score} for {token!r} outside [-{SCORE_LIMIT}, {SCORE_LIMIT}]")


def is_pivot(lexicon: PolarityLexicon, token: str) -> str | None:
    """'pos', 'neg', or None for tokens outside the lexicon."""
    return lexicon.label(token)


def load_lexicon(path: str | Path, language: str = "en") -> PolarityLexicon:
    entries: dict[str, tuple[float, str]] = {}
    duplicates = 0
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected token<TAB>score<TAB>label")
            token, raw_score, label = parts
            try:
                score = float(raw_score)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad score {raw_score!r}") from None
            _validate(token, score, label, f"{path}:{lineno}: ")
            key = token.lower()
            if key in entries:
                duplicates += 1
            entries[key] = (score, label)
    if not entries:
        log.warning("lexicon %s is empty", path)
    if duplicates:
        log.warning("lexicon %s: %d duplicate tokens, last entry kept", path, duplicates)
    return PolarityLexicon(entries, language, duplicates=duplicates)


def save_lexicon(lexicon: PolarityLexicon, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for token, (score, label) in lexicon.entries.items():
            fh.write(f"{token}\t{score!r}\t{label}\n")


def default_lexicon() -> PolarityLexicon:
    """The bundled 300-entry English fixture lexicon."""
    with resources.as_file(resources.files("padst.data") / "lexicon_en.tsv") as p:
        return load_lexicon(p, "en")


def project_lexicon(base: PolarityLexicon, translator, language: str | None = None) -> PolarityLexicon:
    """Carry entries into the translator's output language.

    Entries whose translation is not exactly one token are dropped and
    counted; on collisions the larger |score| wins (first seen on ties).
    """
    projected: dict[str, tuple[float, str]] = {}
    dropped = 0
    for token, (score, label) in base.entries.items():
        out = translator.translate([token])
        if len(out) != 1:
            dropped += 1
            continue
        key = out[0].lower()
        if key in projected and abs(projected[key][0]) >= abs(score):
            continue
        projected[key] = (score, label)
    lang = language or getattr(translator, "target_language", f"{base.language}-x")
    return PolarityLexicon(projected, lang, dropped=dropped)
