"""Entity-level strict/fuzzy micro P/R/F1 and cross-run statistics.

Strict credits a prediction only on identical (start, end, label); fuzzy
needs at least one token of overlap and the same label, matched greedily in
gold start order against the first free prediction. Micro scores aggregate
summed counts over all documents. Cross-run means come with Student-t
confidence half-widths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import stats as _scipy_stats

from .corpus import EntitySpan
from .errors import InvalidSpans, TooFewRuns

MODES = ("strict", "fuzzy")


@dataclass(frozen=True)
class MatchSetting:
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


STRICT = MatchSetting("strict")
FUZZY = MatchSetting("fuzzy")


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_label: dict[str, tuple[int, int, int]] = field(default_factory=dict)


@dataclass
class ScoreReport:
    dataset_id: str
    method_tag: str
    run_label: str  # "0".."n-1" or "voted"
    mode: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_label: dict[str, tuple[int, int, int]]


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    half_width: float
    n: int
    confidence: float = 0.95


def _validate(spans, side: str) -> list[EntitySpan]:
    ordered = sorted(spans)
    prev_end = None
    for s in ordered:
        if s.start < 0 or s.end <= s.start:
            raise InvalidSpans(f"{side} span {s} is malformed")
        if prev_end is not None and s.start < prev_end:
            raise InvalidSpans(f"{side} spans overlap at {s}")
        prev_end = s.end
    return ordered


def _overlaps(a: EntitySpan, b: EntitySpan) -> bool:
    return a.start < b.end and b.start < a.end


def score_document(pred, gold, mode: MatchSetting) -> MatchCounts:
    """Count tp/fp/fn for one document under the given match setting."""
    pred = _validate(pred, "predicted")
    gold = _validate(gold, "gold")

    matched_pred = [False] * len(pred)
    matched_gold = [False] * len(gold)
    if mode.mode == "strict":
        pred_index = {(p.start, p.end, p.label): i for i, p in enumerate(pred)}
        for gi, g in enumerate(gold):
            pi = pred_index.get((g.start, g.end, g.label))
            if pi is not None and not matched_pred[pi]:
                matched_pred[pi] = True
                matched_gold[gi] = True
    else:
        # Greedy in gold order: first free prediction with overlap + label.
        for gi, g in enumerate(gold):
            for pi, p in enumerate(pred):
                if matched_pred[pi] or p.label != g.label:
                    continue
                if _overlaps(p, g):
                    matched_pred[pi] = True
                    matched_gold[gi] = True
                    break

    counts = MatchCounts()
    per_label: dict[str, list[int]] = {}

    def bucket(label: str) -> list[int]:
        return per_label.setdefault(label, [0, 0, 0])

    for gi, g in enumerate(gold):
        if matched_gold[gi]:
            counts.tp += 1
            bucket(g.label)[0] += 1
        else:
            counts.fn += 1
            bucket(g.label)[2] += 1
    for pi, p in enumerate(pred):
        if not matched_pred[pi]:
            counts.fp += 1
            bucket(p.label)[1] += 1
    counts.per_label = {k: tuple(v) for k, v in sorted(per_label.items())}
    return counts


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def micro_f1(doc_counts, *, dataset_id: str = "", method_tag: str = "",
             run_label: str = "", mode: str = "strict") -> ScoreReport:
    """Aggregate per-document counts into one micro-averaged report."""
    doc_counts = list(doc_counts)
    if not doc_counts:
        raise ValueError("micro_f1 needs at least one document")
    tp = sum(c.tp for c in doc_counts)
    fp = sum(c.fp for c in doc_counts)
    fn = sum(c.fn for c in doc_counts)
    per_label: dict[str, list[int]] = {}
    for c in doc_counts:
        for label, (ltp, lfp, lfn) in c.per_label.items():
            bucket = per_label.setdefault(label, [0, 0, 0])
            bucket[0] += ltp
            bucket[1] += lfp
            bucket[2] += lfn
    precision, recall, f1 = _prf(tp, fp, fn)
    return ScoreReport(
        dataset_id=dataset_id, method_tag=method_tag, run_label=run_label,
        mode=mode, tp=tp, fp=fp, fn=fn,
        precision=precision, recall=recall, f1=f1,
        per_label={k: tuple(v) for k, v in sorted(per_label.items())},
    )


def aggregate_runs(f1_per_run, confidence: float = 0.95) -> AggregateStat:
    """Mean and Student-t confidence half-width over per-run scores."""
    values = [float(v) for v in f1_per_run]
    n = len(values)
    if n < 2:
        raise TooFewRuns(f"need at least 2 runs, got {n}")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / (n - 1)
    stddev = math.sqrt(variance)
    quantile = float(_scipy_stats.t.ppf(1.0 - (1.0 - confidence) / 2.0, n - 1))
    half_width = quantile * stddev / math.sqrt(n)
    return AggregateStat(mean=mean, half_width=half_width, n=n, confidence=confidence)
