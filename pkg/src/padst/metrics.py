"""Automatic evaluation: style accuracy, content preservation, fluency.

Content preservation is measured against the *source* sentence, both plainly
(BLEU, cosine similarity) and after every lexicon pivot in both sentences has
been replaced by ``<mask>`` (MaskBLEU, MaskSim), so intended sentiment edits
are not penalised.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .lexicon import PolarityLexicon
from .text import MASK, DataError

log = logging.getLogger(__name__)

COLUMNS = ("Acc", "Sim", "M/Sim", "B", "M/B", "LM", "Len", "Avg")
BLEU_EPSILON = 0.1
VADER_ALPHA = 15.0


class Classifier(Protocol):
    def score(self, tokens: Sequence[str]) -> float: ...


class Embedder(Protocol):
    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


class LanguageModel(Protocol):
    def logprob(self, tokens: Sequence[str]) -> float: ...


def mask_pivots(tokens: Sequence[str], lexicon: PolarityLexicon) -> list[str]:
    return [MASK if t in lexicon else t for t in tokens]


# BLEU -----------------------------------------------------------------------

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypothesis: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU in [0, 100].

    Orders run up to ``min(max_n, len(hypothesis))``. A zero match count at
    order >= 2 is floored to 0.1 before dividing; a zero unigram match gives 0.
    Brevity penalty exp(1 - r/c) applies when the hypothesis is shorter.
    """
    if not reference:
        raise ValueError("reference must be non-empty")
    c, r = len(hypothesis), len(reference)
    if c == 0:
        return 0.0
    log_sum = 0.0
    orders = min(max_n, c)
    for n in range(1, orders + 1):
        hyp_counts = _ngrams(hypothesis, n)
        ref_counts = _ngrams(reference, n)
        matched = sum(min(k, ref_counts[g]) for g, k in hyp_counts.items())
        total = c - n + 1
        if matched == 0:
            if n == 1:
                return 0.0
            matched = BLEU_EPSILON
        log_sum += math.log(matched / total)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_sum / orders)


def mask_bleu(hypothesis: Sequence[str], source: Sequence[str], lexicon: PolarityLexicon, max_n: int = 4) -> float:
    return bleu(mask_pivots(hypothesis, lexicon), mask_pivots(source, lexicon), max_n)


# similarity -------------------------------------------------------------------

class TfidfEmbedder:
    """L2-normalised TF-IDF bag of words over a fitted vocabulary.

    Uses smoothed idf, ``ln((1 + N) / (1 + df)) + 1``; tokens unseen at fit time
    are ignored.
    """

    def __init__(self, documents: Iterable[Sequence[str]] = ()):
        self.index: dict[str, int] = {}
        self.idf = np.zeros(0)
        docs = list(documents)
        if docs:
            self.fit(docs)

    def fit(self, documents: Iterable[Sequence[str]]) -> "TfidfEmbedder":
        df: Counter = Counter()
        n = 0
        for doc in documents:
            n += 1
            df.update(set(doc))
        self.index = {tok: i for i, tok in enumerate(sorted(df))}
        self.idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in sorted(df)])
        return self

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        vec = np.zeros(len(self.index))
        for tok, k in Counter(tokens).items():
            i = self.index.get(tok)
            if i is not None:
                vec[i] = k * self.idf[i]
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        log.warning("zero embedding vector; similarity defined as 0")
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def similarity(a: Sequence[str], b: Sequence[str], embedder: Embedder) -> float:
    if not a or not b:
        raise ValueError("similarity needs non-empty sentences")
    return cosine(embedder.embed(a), embedder.embed(b))


def mask_sim(a: Sequence[str], b: Sequence[str], embedder: Embedder, lexicon: PolarityLexicon) -> float:
    return similarity(mask_pivots(a, lexicon), mask_pivots(b, lexicon), embedder)


# style --------------------------------------------------------------------------

class LexiconClassifier:
    """Signed sum of lexicon scores squashed to (-1, 1) by s / sqrt(s^2 + 15)."""

    def __init__(self, lexicon: PolarityLexicon, alpha: float = VADER_ALPHA):
        self.lexicon = lexicon
        self.alpha = alpha

    def score(self, tokens: Sequence[str]) -> float:
        s = sum(self.lexicon.score(t) for t in tokens)
        return s / math.sqrt(s * s + self.alpha)


def style_accuracy(
    outputs: Sequence[Sequence[str]],
    targets: Sequence[str],
    classifier: Classifier | None = None,
    scores: Sequence[float] | None = None,
) -> float:
    """Percent of outputs whose classifier sign matches the target label; 0 is a miss."""
    if not outputs:
        raise ValueError("style accuracy of an empty output set is undefined")
    if len(targets) != len(outputs):
        raise ValueError("one target label per output is required")
    if scores is None:
        if classifier is None:
            raise ValueError("need a classifier or precomputed scores")
        scores = [classifier.score(o) for o in outputs]
    hits = sum((s > 0 and t == "pos") or (s < 0 and t == "neg") for s, t in zip(scores, targets))
    return 100.0 * hits / len(outputs)


# fluency --------------------------------------------------------------------------

class TrigramLM:
    """Add-k smoothed word trigram model; ``logprob`` is the natural-log total
    over the sentence's tokens (no end-of-sentence term)."""

    BOS = "<s>"
    UNK = "<unk>"

    def __init__(self, sentences: Iterable[Sequence[str]] = (), k: float = 0.1):
        self.k = k
        self.tri: Counter = Counter()
        self.bi: Counter = Counter()
        self.vocab: set[str] = {self.UNK}
        sentences = list(sentences)
        if sentences:
            self.fit(sentences)

    def fit(self, sentences: Iterable[Sequence[str]]) -> "TrigramLM":
        for s in sentences:
            self.vocab.update(s)
        for s in sentences:
            padded = [self.BOS, self.BOS] + [self._norm(t) for t in s]
            for i in range(2, len(padded)):
                self.tri[tuple(padded[i - 2 : i + 1])] += 1
                self.bi[tuple(padded[i - 2 : i])] += 1
        return self

    def _norm(self, token: str) -> str:
        return token if token in self.vocab else self.UNK

    def logprob(self, tokens: Sequence[str]) -> float:
        padded = [self.BOS, self.BOS] + [self._norm(t) for t in tokens]
        v = len(self.vocab)
        total = 0.0
        for i in range(2, len(padded)):
            num = self.tri[tuple(padded[i - 2 : i + 1])] + self.k
            den = self.bi[tuple(padded[i - 2 : i])] + self.k * v
            total += math.log(num / den)
        return total


def fluency(outputs: Sequence[Sequence[str]], lm: LanguageModel | None = None, scores: Sequence[float] | None = None) -> float:
    if scores is None:
        if lm is None:
            raise ValueError("need a language model or precomputed scores")
        scores = [lm.logprob(o) for o in outputs]
    return float(np.mean(scores)) if len(scores) else float("nan")


# aggregation ----------------------------------------------------------------------

def aggregate(acc: float, mask_sim_score: float, mask_bleu_score: float) -> float:
    """Mean of accuracy, 100 * MaskSim and MaskBLEU."""
    return (acc + 100.0 * mask_sim_score + mask_bleu_score) / 3.0


@dataclass
class EvalReport:
    acc: float
    sim: float
    mask_sim: float
    bleu: float
    mask_bleu: float
    lm: float
    len: float
    avg: float = field(default=float("nan"))
    name: str = "system"
    details: list[dict] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if math.isnan(self.avg):
            self.avg = aggregate(self.acc, self.mask_sim, self.mask_bleu)

    def values(self) -> tuple[float, ...]:
        return (self.acc, self.sim, self.mask_sim, self.bleu, self.mask_bleu, self.lm, self.len, self.avg)

    def to_row(self) -> str:
        fmt = ("{:.1f}", "{:.3f}", "{:.3f}", "{:.1f}", "{:.1f}", "{:.1f}", "{:.1f}", "{:.1f}")
        return "\t".join([self.name] + [f.format(v) for f, v in zip(fmt, self.values())])

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: Mapping) -> "EvalReport":
        return cls(**{k: d[k] for k in ("acc", "sim", "mask_sim", "bleu", "mask_bleu", "lm", "len", "avg", "name")},
                   details=list(d.get("details", [])))

    @classmethod
    def from_row(cls, name: str, values: Sequence[float]) -> "EvalReport":
        acc, sim, msim, b, mb, lm, ln, avg = (float(v) for v in values)
        return cls(acc, sim, msim, b, mb, lm, ln, avg, name)


TSV_HEADER = "\t".join(("Model",) + COLUMNS)


def write_report(report: EvalReport, tsv_path: str | Path, json_path: str | Path | None = None) -> None:
    Path(tsv_path).write_text(TSV_HEADER + "\n" + report.to_row() + "\n", encoding="utf-8")
    if json_path is not None:
        Path(json_path).write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")


def read_table(path: str | Path) -> list[EvalReport]:
    """Read a Table-style TSV (header plus one row per system)."""
    reports = []
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header[1:]) != COLUMNS:
            raise DataError(f"{path}: header must be Model + {COLUMNS}")
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(COLUMNS) + 1:
                raise DataError(f"{path}:{lineno}: expected {len(COLUMNS) + 1} columns")
            reports.append(EvalReport.from_row(parts[0], parts[1:]))
    return reports


def load_score_file(path: str | Path) -> dict[int, float]:
    """``sentence_index<TAB>score`` lines."""
    scores = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                idx, value = line.rstrip("\n").split("\t")
                scores[int(idx)] = float(value)
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected sentence_index<TAB>score") from None
    return scores


EMBEDDING_ROLES = ("src", "hyp", "src_masked", "hyp_masked")


def load_embedding_file(path: str | Path) -> dict[str, dict[int, np.ndarray]]:
    """``sentence_index<TAB>role<TAB>v1 v2 ...`` lines, role in EMBEDDING_ROLES."""
    out: dict[str, dict[int, np.ndarray]] = {r: {} for r in EMBEDDING_ROLES}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 or parts[1] not in EMBEDDING_ROLES:
                raise DataError(f"{path}:{lineno}: expected sentence_index<TAB>role<TAB>vector")
            try:
                out[parts[1]][int(parts[0])] = np.array([float(x) for x in parts[2].split()])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad number") from None
    return out


def _ordered(scores: Mapping[int, float], n: int, what: str) -> list[float]:
    missing = [i for i in range(n) if i not in scores]
    if missing:
        raise DataError(f"{what} scores missing for sentence index {missing[0]}")
    return [scores[i] for i in range(n)]


def evaluate(
    hypotheses: Sequence[Sequence[str]],
    sources: Sequence[Sequence[str]],
    targets: Sequence[str],
    lexicon: PolarityLexicon,
    classifier: Classifier | None = None,
    embedder: Embedder | None = None,
    lm: LanguageModel | None = None,
    classifier_scores: Mapping[int, float] | None = None,
    lm_scores: Mapping[int, float] | None = None,
    embeddings: Mapping[str, Mapping[int, np.ndarray]] | None = None,
    name: str = "system",
) -> EvalReport:
    """Score transferred sentences against their sources.

    Scorers default to the lexicon classifier, a TF-IDF embedder fitted on the
    sources and hypotheses (plain and masked), and a trigram LM fitted on the
    sources. Precomputed per-sentence scores override the matching scorer.
    """
    n = len(hypotheses)
    if n == 0:
        raise ValueError("nothing to evaluate")
    if not (len(sources) == len(targets) == n):
        raise ValueError("hypotheses, sources and targets must align")
    masked_h = [mask_pivots(h, lexicon) for h in hypotheses]
    masked_s = [mask_pivots(s, lexicon) for s in sources]
    classifier = classifier or LexiconClassifier(lexicon)
    clf = _ordered(classifier_scores, n, "classifier") if classifier_scores else [classifier.score(h) for h in hypotheses]
    if lm_scores:
        lmv = _ordered(lm_scores, n, "LM")
    else:
        lm = lm or TrigramLM(sources)
        lmv = [lm.logprob(h) for h in hypotheses]
    if embeddings:
        vec = {r: [embeddings[r].get(i) for i in range(n)] for r in EMBEDDING_ROLES}
        for r, vs in vec.items():
            if any(v is None for v in vs):
                raise DataError(f"embeddings missing for role {r}")
        sims = [cosine(h, s) for h, s in zip(vec["hyp"], vec["src"])]
        msims = [cosine(h, s) for h, s in zip(vec["hyp_masked"], vec["src_masked"])]
    else:
        embedder = embedder or TfidfEmbedder(list(sources) + list(hypotheses) + masked_s + masked_h)
        sims = [cosine(embedder.embed(h), embedder.embed(s)) for h, s in zip(hypotheses, sources)]
        msims = [cosine(embedder.embed(h), embedder.embed(s)) for h, s in zip(masked_h, masked_s)]
    bleus = [bleu(h, s) for h, s in zip(hypotheses, sources)]
    mbleus = [bleu(h, s) for h, s in zip(masked_h, masked_s)]
    acc = style_accuracy(hypotheses, targets, scores=clf)
    details = []
    for i in range(n):
        correct = (clf[i] > 0 and targets[i] == "pos") or (clf[i] < 0 and targets[i] == "neg")
        details.append({
            "index": i, "source": " ".join(sources[i]), "hypothesis": " ".join(hypotheses[i]),
            "target": targets[i], "style_score": clf[i], "correct": bool(correct),
            "sim": sims[i], "mask_sim": msims[i], "bleu": bleus[i], "mask_bleu": mbleus[i],
            "lm": lmv[i], "len": len(hypotheses[i]),
        })
    return EvalReport(
        acc=acc,
        sim=float(np.mean(sims)),
        mask_sim=float(np.mean(msims)),
        bleu=float(np.mean(bleus)),
        mask_bleu=float(np.mean(mbleus)),
        lm=float(np.mean(lmv)),
        len=float(np.mean([len(h) for h in hypotheses])),
        name=name,
        details=details,
    )


# correlations ---------------------------------------------------------------------

@dataclass
class CorrelationMatrix:
    columns: tuple[str, ...]
    values: np.ndarray

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.columns.index(a), self.columns.index(b)])

    def to_tsv(self) -> str:
        lines = ["\t".join(("",) + self.columns)]
        for name, row in zip(self.columns, self.values):
            lines.append("\t".join([name] + ["NA" if np.isnan(v) else f"{v:.3f}" for v in row]))
        return "\n".join(lines) + "\n"


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        return float("nan")
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


def correlation_report(reports: Sequence[EvalReport], columns: Sequence[str] = COLUMNS) -> CorrelationMatrix:
    """Pairwise Pearson correlations between metric columns across systems.

    Constant columns have undefined correlation and are reported as NaN,
    including on the diagonal.
    """
    if len(reports) < 3:
        raise ValueError("correlations need at least three reports")
    table = np.array([r.values() for r in reports], dtype=np.float64)
    idx = [COLUMNS.index(c) for c in columns]
    k = len(idx)
    out = np.full((k, k), np.nan)
    for a in range(k):
        for b in range(a, k):
            if a == b:
                if np.ptp(table[:, idx[a]]) > 0:
                    out[a, a] = 1.0
                continue
            out[a, b] = out[b, a] = pearson(table[:, idx[a]], table[:, idx[b]])
    return CorrelationMatrix(tuple(columns), out)
