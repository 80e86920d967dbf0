"""In-context example selection: random, token overlap, embedding cosine.

The overlap route builds per-dataset TF-IDF statistics (tf(t,d) = raw count,
idf(t) = ln(N/df(t))), drops stop words, punctuation-only tokens and the
bottom decile of TF-IDF weights, then scores shared tokens between the target
and every candidate. Candidate scoring runs through a compiled kernel when
the extension is built, with a bit-identical pure-Python fallback.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from itertools import count
from pathlib import Path

import numpy as np

from . import _kernels
from .corpus import Document
from .errors import (
    EmbeddingTableFormatError,
    EmptyCorpus,
    MissingVector,
    ModelMismatch,
    NoCandidates,
)

log = logging.getLogger("histner.retrieval")

STOPWORD_LANGUAGES = ("de", "en", "fi", "fr", "sv")

_model_keys = count(1)


def _is_punct(token: str) -> bool:
    return bool(token) and all(unicodedata.category(c).startswith("P") for c in token)


@dataclass(frozen=True)
class StopwordList:
    language: str
    words: frozenset[str]

    def __contains__(self, token: str) -> bool:
        return token.casefold() in self.words

    @classmethod
    def empty(cls) -> "StopwordList":
        return cls("", frozenset())


def load_stopwords(language: str) -> StopwordList:
    """Load the bundled stop-word list for a language code.

    Unknown languages get an empty list with a warning, so pipelines over
    corpora outside the bundled five stay runnable.
    """
    lang = language.lower()
    if lang not in STOPWORD_LANGUAGES:
        log.warning("no stop-word list for language %r, using none", language)
        return StopwordList(language, frozenset())
    data = resources.files("histner").joinpath(f"data/stopwords/{lang}.txt")
    words = frozenset(w.casefold() for w in data.read_text(encoding="utf-8").split())
    return StopwordList(lang, words)


# ----------------------------------------------------------------------
# TF-IDF model and bottom-decile filtering

@dataclass
class TfIdfModel:
    """Corpus-level term statistics over stop-word/punctuation-free tokens."""

    doc_count: int
    document_frequency: dict[str, int]
    tfidf: dict[str, dict[str, float]]
    corpus_scope: list[str]
    term_counts: dict[str, Counter] = field(repr=False, default_factory=dict)
    idf: dict[str, float] = field(repr=False, default_factory=dict)
    decile_threshold: float = 0.0
    key: int = 0


def linear_percentile(sorted_values, q: float) -> float:
    """Percentile with linear interpolation over pre-sorted values."""
    n = len(sorted_values)
    if n == 0:
        return 0.0
    h = (n - 1) * q
    f = math.floor(h)
    c = min(f + 1, n - 1)
    return sorted_values[f] + (h - f) * (sorted_values[c] - sorted_values[f])


def build_tfidf(corpus, stopwords) -> TfIdfModel:
    """Count term statistics over the given documents.

    Stop words and punctuation-only tokens never enter the counts. The model
    also fixes the global bottom-decile threshold used by the token filter.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot build term statistics from zero documents")
    term_counts: dict[str, Counter] = {}
    scope: list[str] = []
    for doc in corpus:
        if doc.doc_id in term_counts:
            raise ModelMismatch(f"duplicate doc_id {doc.doc_id!r} in corpus")
        term_counts[doc.doc_id] = Counter(
            t for t in doc.surfaces if t not in stopwords and not _is_punct(t)
        )
        scope.append(doc.doc_id)

    doc_count = len(corpus)
    document_frequency: Counter = Counter()
    for counts in term_counts.values():
        document_frequency.update(counts.keys())
    idf = {t: math.log(doc_count / df) for t, df in document_frequency.items()}
    tfidf = {
        doc_id: {t: c * idf[t] for t, c in counts.items()}
        for doc_id, counts in term_counts.items()
    }
    all_values = sorted(v for per_doc in tfidf.values() for v in per_doc.values())
    threshold = linear_percentile(all_values, 0.10)
    return TfIdfModel(
        doc_count=doc_count,
        document_frequency=dict(document_frequency),
        tfidf=tfidf,
        corpus_scope=scope,
        term_counts=term_counts,
        idf=idf,
        decile_threshold=threshold,
        key=next(_model_keys),
    )


@dataclass(frozen=True)
class FilteredDoc:
    """A document reduced to the tokens that survive filtering.

    term_frequency is the kept-token multiset; kept_count is the number of
    distinct kept tokens (the |T(d)| denominator of the overlap score).
    """

    doc_id: str
    term_frequency: dict[str, int]
    kept_count: int
    tfidf: dict[str, float]
    model_key: int

    @property
    def kept_tokens(self) -> dict[str, int]:
        return self.term_frequency


def filter_bottom_decile(model: TfIdfModel, doc: Document) -> FilteredDoc:
    """Drop this document's tokens whose tf-idf falls strictly below the
    corpus-wide 10th-percentile threshold; ties at the threshold stay."""
    counts = model.term_counts.get(doc.doc_id)
    if counts is None:
        raise ModelMismatch(f"document {doc.doc_id!r} is not in the model scope")
    scores = model.tfidf[doc.doc_id]
    kept = {t: c for t, c in counts.items() if scores[t] >= model.decile_threshold}
    return FilteredDoc(
        doc_id=doc.doc_id,
        term_frequency=kept,
        kept_count=len(kept),
        tfidf={t: scores[t] for t in kept},
        model_key=model.key,
    )


def overlap_score(target: FilteredDoc, candidate: FilteredDoc) -> float:
    """Shared-token similarity weighted by tf-idf and relative frequency.

    Symmetric in its arguments; 0 whenever either side kept nothing.
    """
    if target.model_key != candidate.model_key:
        raise ModelMismatch("filtered documents come from different models")
    if target.kept_count == 0 or candidate.kept_count == 0:
        return 0.0
    kt = float(target.kept_count)
    kc = float(candidate.kept_count)
    score = 0.0
    for t in sorted(target.term_frequency.keys() & candidate.term_frequency.keys()):
        score += (target.tfidf[t] + candidate.tfidf[t]) * (
            target.term_frequency[t] / kt + candidate.term_frequency[t] / kc
        )
    return score


# ----------------------------------------------------------------------
# Embedding tables (wire format: "HNE-EMB v1 <dimension> <model_id>")

EMBEDDING_MAGIC = "HNE-EMB"
EMBEDDING_VERSION = "v1"


@dataclass
class EmbeddingTable:
    dimension: int
    model_id: str
    vectors: dict[str, np.ndarray]

    def vector(self, doc_id: str) -> np.ndarray:
        try:
            return self.vectors[doc_id]
        except KeyError:
            raise MissingVector(f"no embedding vector for {doc_id!r}") from None


def load_embedding_table(path) -> EmbeddingTable:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split(" ", 3)
        if len(parts) < 3 or parts[0] != EMBEDDING_MAGIC or parts[1] != EMBEDDING_VERSION:
            raise EmbeddingTableFormatError(f"{path.name}: bad header {header!r}")
        try:
            dimension = int(parts[2])
        except ValueError:
            raise EmbeddingTableFormatError(f"{path.name}: bad dimension in {header!r}") from None
        if dimension < 1:
            raise EmbeddingTableFormatError(f"{path.name}: dimension must be positive")
        model_id = parts[3] if len(parts) > 3 else ""
        vectors: dict[str, np.ndarray] = {}
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            doc_id, sep, rest = line.partition("\t")
            if not sep or not doc_id:
                raise EmbeddingTableFormatError(f"{path.name}:{line_no}: missing doc_id field")
            if doc_id in vectors:
                raise EmbeddingTableFormatError(f"{path.name}:{line_no}: duplicate id {doc_id!r}")
            try:
                vec = np.array([float(x) for x in rest.split(" ")], dtype=np.float64)
            except ValueError:
                raise EmbeddingTableFormatError(f"{path.name}:{line_no}: non-numeric value") from None
            if vec.shape[0] != dimension:
                raise EmbeddingTableFormatError(
                    f"{path.name}:{line_no}: expected {dimension} floats, got {vec.shape[0]}")
            vectors[doc_id] = vec
    return EmbeddingTable(dimension, model_id, vectors)


def write_embedding_table(table: EmbeddingTable, path) -> None:
    lines = [f"{EMBEDDING_MAGIC} {EMBEDDING_VERSION} {table.dimension} {table.model_id}"]
    for doc_id, vec in table.vectors.items():
        if "\t" in doc_id:
            raise EmbeddingTableFormatError(f"doc_id {doc_id!r} contains a tab")
        if len(vec) != table.dimension:
            raise EmbeddingTableFormatError(f"vector for {doc_id!r} has wrong dimension")
        lines.append(doc_id + "\t" + " ".join("%.8g" % float(x) for x in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# Ranking

@dataclass(frozen=True)
class SimilarityResult:
    candidate_id: str
    score: float


@dataclass
class _CsrArrays:
    row_of: dict[str, int]
    indptr: np.ndarray
    ids: np.ndarray
    tf: np.ndarray
    tfidf: np.ndarray


class RetrievalIndex:
    """Filtered documents plus cached array form for batch scoring."""

    def __init__(self, model: TfIdfModel, filtered: dict[str, FilteredDoc],
                 embeddings: EmbeddingTable | None = None):
        self.model = model
        self.filtered = filtered
        self.embeddings = embeddings
        self._csr: _CsrArrays | None = None

    @classmethod
    def build(cls, documents, stopwords, embeddings: EmbeddingTable | None = None
              ) -> "RetrievalIndex":
        documents = list(documents)
        model = build_tfidf(documents, stopwords)
        filtered = {d.doc_id: filter_bottom_decile(model, d) for d in documents}
        return cls(model, filtered, embeddings)

    def _arrays(self) -> _CsrArrays:
        if self._csr is None:
            # Token ids follow sorted vocabulary order, so ascending-id kernel
            # accumulation matches the sorted-token order of overlap_score().
            vocab = sorted({t for fd in self.filtered.values() for t in fd.term_frequency})
            tok2id = {t: i for i, t in enumerate(vocab)}
            row_of: dict[str, int] = {}
            indptr = [0]
            ids: list[int] = []
            tf: list[float] = []
            tfidf: list[float] = []
            for doc_id in sorted(self.filtered):
                fd = self.filtered[doc_id]
                row_of[doc_id] = len(indptr) - 1
                for tok in sorted(fd.term_frequency):
                    ids.append(tok2id[tok])
                    tf.append(float(fd.term_frequency[tok]))
                    tfidf.append(fd.tfidf[tok])
                indptr.append(len(ids))
            self._csr = _CsrArrays(
                row_of=row_of,
                indptr=np.array(indptr, dtype=np.int64),
                ids=np.array(ids, dtype=np.int32),
                tf=np.array(tf, dtype=np.float64),
                tfidf=np.array(tfidf, dtype=np.float64),
            )
        return self._csr


def _clean_pool(target: str, candidates) -> list[str]:
    pool = list(dict.fromkeys(candidates))
    pool = [c for c in pool if c != target]
    if not pool:
        raise NoCandidates(f"no candidates left for target {target!r}")
    return pool


def _top_k(pairs: list[SimilarityResult], k: int) -> list[str]:
    ranked = sorted(pairs, key=lambda r: (-r.score, r.candidate_id))
    return [r.candidate_id for r in ranked[:k]]


def lexical_similarities(index: RetrievalIndex, target: str, candidates) -> list[SimilarityResult]:
    """Overlap score of the target against each candidate, in candidate order."""
    if target not in index.filtered:
        raise ModelMismatch(f"target {target!r} is not in the index")
    missing = [c for c in candidates if c not in index.filtered]
    if missing:
        raise ModelMismatch(f"candidates {missing[:3]} are not in the index")
    csr = index._arrays()
    t_row = csr.row_of[target]
    lo, hi = csr.indptr[t_row], csr.indptr[t_row + 1]
    rows = np.array([csr.row_of[c] for c in candidates], dtype=np.int64)
    out = np.empty(len(candidates), dtype=np.float64)
    _kernels.overlap_scores(csr.ids[lo:hi], csr.tf[lo:hi], csr.tfidf[lo:hi],
                            csr.indptr, csr.ids, csr.tf, csr.tfidf, rows, out)
    return [SimilarityResult(c, s) for c, s in zip(candidates, out.tolist())]


def rank_lexical(index: RetrievalIndex, target: str, candidates, k: int) -> list[str]:
    """Top-k candidates by overlap score, ties broken by ascending doc_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = _clean_pool(target, candidates)
    return _top_k(lexical_similarities(index, target, pool), k)


def embedding_similarities(target: str, candidates, table: EmbeddingTable
                           ) -> list[SimilarityResult]:
    """Cosine similarity of the target vector against each candidate vector.

    Zero-norm vectors have no defined cosine; they are scored -inf with a
    warning so they always rank last.
    """
    t_vec = table.vector(target)
    t_norm = float(np.linalg.norm(t_vec))
    matrix = np.stack([table.vector(c) for c in candidates])
    norms = np.linalg.norm(matrix, axis=1)
    results: list[SimilarityResult] = []
    if t_norm == 0.0:
        log.warning("zero-norm embedding for target %r, cosine undefined", target)
        return [SimilarityResult(c, float("-inf")) for c in candidates]
    dots = matrix @ t_vec
    for c, dot, norm in zip(candidates, dots, norms):
        if norm == 0.0:
            log.warning("zero-norm embedding for candidate %r, ranked last", c)
            results.append(SimilarityResult(c, float("-inf")))
        else:
            # rounding can push |cos| a few ulp past 1; keep the invariant
            cos = min(1.0, max(-1.0, float(dot / (norm * t_norm))))
            results.append(SimilarityResult(c, cos))
    return results


def rank_embedding(target: str, candidates, k: int, table: EmbeddingTable) -> list[str]:
    """Top-k candidates by cosine similarity, same tie rule as rank_lexical."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = _clean_pool(target, candidates)
    return _top_k(embedding_similarities(target, pool, table), k)


def rank_random(target: str, candidates, k: int, seed: int, run_index: int) -> list[str]:
    """Draw k distinct candidates, reproducibly keyed by (seed, run, target).

    Only random.Random.random() is consumed (its sequence is stable across
    Python versions and platforms); selection is a partial Fisher-Yates
    shuffle over the sorted pool.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = sorted(_clean_pool(target, candidates))
    material = f"{seed}\x1f{run_index}\x1f{target}".encode("utf-8")
    key = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
    rng = random.Random(key)
    n = len(pool)
    take = min(k, n)
    for i in range(take):
        j = i + int(rng.random() * (n - i))
        if j >= n:
            j = n - 1
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:take]
