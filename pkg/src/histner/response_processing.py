"""Turn a model reply into entity spans on the target document.

parse_reply extracts the first well-formed bracketed tuple list from the raw
text, riding over code fences, surrounding prose, single quotes and trailing
commas. align then anchors each predicted surface to the leftmost unassigned
occurrence of its whitespace tokens in the target, case-sensitively first.

The alignment is a reconstruction: surface-form replies cannot distinguish
repeated mentions, so a prediction lands on the leftmost free occurrence.
Predictions that match nothing, carry an unknown label, or collide with an
earlier span are dropped with a reason, never silently.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

from .corpus import Document, EntitySpan, LabelSet
from .errors import UnparseableReply

_PAIR = re.compile(
    r"\(\s*(?P<q1>['\"])(?P<surface>(?:\\.|(?!(?P=q1)).)*)(?P=q1)\s*,\s*"
    r"(?P<q2>['\"])(?P<label>(?:\\.|(?!(?P=q2)).)*)(?P=q2)\s*,?\s*\)",
    re.DOTALL,
)


@dataclass(frozen=True)
class RawPrediction:
    surface: str
    label: str
    order: int


@dataclass(frozen=True)
class DroppedPrediction:
    prediction: RawPrediction
    reason: str  # UnknownLabel | NoMatch | Overlap


@dataclass
class ParsedReply:
    predictions: list[RawPrediction]
    warnings: list[str] = field(default_factory=list)


@dataclass
class AlignedPrediction:
    spans: list[EntitySpan]
    dropped: list[DroppedPrediction] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _bracket_candidates(text: str):
    """Yield top-level [...] segments in reading order, quote-aware."""
    i = 0
    n = len(text)
    while i < n:
        if text[i] == "[":
            depth = 0
            j = i
            quote = None
            while j < n:
                c = text[j]
                if quote:
                    if c == "\\":
                        j += 1
                    elif c == quote:
                        quote = None
                elif c in "'\"":
                    quote = c
                elif c == "[":
                    depth += 1
                elif c == "]":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            if j < n and depth == 0:
                yield text[i:j + 1]
                i = j + 1
                continue
        i += 1


def _pairs_from_literal(value) -> list[tuple[str, str]] | None:
    if not isinstance(value, list):
        return None
    pairs = []
    for item in value:
        if (isinstance(item, tuple) and len(item) == 2
                and all(isinstance(x, str) for x in item)):
            pairs.append((item[0], item[1]))
        else:
            return None
    return pairs


def _try_parse_segment(segment: str) -> tuple[list[tuple[str, str]], bool] | None:
    """Parse one bracketed segment; returns (pairs, needed_repair) or None."""
    stripped = segment.strip()
    try:
        pairs = _pairs_from_literal(ast.literal_eval(stripped))
        if pairs is not None:
            return pairs, False
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        pass
    # Repair route: pull quoted pairs out positionally.
    matches = list(_PAIR.finditer(stripped))
    if matches:
        pairs = []
        for m in matches:
            surface = m.group("surface").replace('\\"', '"').replace("\\'", "'") \
                                        .replace("\\\\", "\\")
            label = m.group("label").replace('\\"', '"').replace("\\'", "'") \
                                    .replace("\\\\", "\\")
            pairs.append((surface, label))
        return pairs, True
    if re.fullmatch(r"\[\s*,?\s*\]", stripped):
        return [], False
    return None


def parse_reply(raw: str) -> ParsedReply:
    """Extract (surface, label) predictions from a raw reply, in reply order.

    The first well-formed bracketed list wins. Raises UnparseableReply when
    no bracketed list can be recovered at all; an empty list is legal but
    flagged, since the prompt forbids it.
    """
    warnings: list[str] = []
    skipped = 0
    found_any_bracket = False
    for segment in _bracket_candidates(raw):
        found_any_bracket = True
        parsed = _try_parse_segment(segment)
        if parsed is None:
            skipped += 1
            continue
        pairs, needed_repair = parsed
        if skipped:
            warnings.append(f"skipped {skipped} unparseable bracketed segment(s) "
                            "before the entity list")
        if needed_repair:
            warnings.append("entity list recovered by positional repair parsing")
        predictions: list[RawPrediction] = []
        for order, (surface, label) in enumerate(pairs):
            if not surface.strip():
                warnings.append(f"prediction {order} has an empty surface, ignored")
                continue
            predictions.append(RawPrediction(surface.strip(), label, order))
        if not predictions:
            warnings.append("EmptyReply: the reply contains an empty entity list")
        return ParsedReply(predictions, warnings)
    if found_any_bracket:
        raise UnparseableReply("bracketed segments found but none parse as a tuple list")
    raise UnparseableReply("no bracketed list in reply")


def _find_occurrences(needle: list[str], haystack: tuple[str, ...]) -> list[int]:
    hits = []
    limit = len(haystack) - len(needle)
    for start in range(limit + 1):
        if all(haystack[start + i] == needle[i] for i in range(len(needle))):
            hits.append(start)
    return hits


def align(predictions, target: Document, labels: LabelSet) -> AlignedPrediction:
    """Assign each prediction, in reply order, to target tokens.

    Labels are matched against the label set after trimming and case folding;
    the canonical label spelling is kept. Surfaces are whitespace-tokenized
    and matched exactly (case-sensitive pass, then case-insensitive); each
    prediction takes the leftmost occurrence not already covered.
    """
    canonical = {label.strip().upper(): label for label in labels}
    surfaces = target.surfaces
    folded = tuple(s.casefold() for s in surfaces)
    taken = [False] * len(surfaces)
    spans: list[EntitySpan] = []
    dropped: list[DroppedPrediction] = []
    warnings: list[str] = []

    def place(occurrences: list[int], width: int, label: str) -> bool:
        for start in occurrences:
            end = start + width
            if not any(taken[start:end]):
                for i in range(start, end):
                    taken[i] = True
                spans.append(EntitySpan(start, end, label))
                return True
        return False

    for pred in predictions:
        label = canonical.get(pred.label.strip().upper())
        if label is None:
            dropped.append(DroppedPrediction(pred, "UnknownLabel"))
            continue
        needle = pred.surface.split()
        if not needle or len(needle) > len(surfaces):
            dropped.append(DroppedPrediction(pred, "NoMatch"))
            continue
        exact = _find_occurrences(needle, surfaces)
        if place(exact, len(needle), label):
            continue
        loose = _find_occurrences([t.casefold() for t in needle], folded)
        if place(loose, len(needle), label):
            warnings.append(f"{pred.surface!r} matched case-insensitively")
            continue
        reason = "Overlap" if (exact or loose) else "NoMatch"
        dropped.append(DroppedPrediction(pred, reason))

    spans.sort()
    return AlignedPrediction(spans=spans, dropped=dropped, warnings=warnings)
