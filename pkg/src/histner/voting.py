"""Per-token majority voting over repeated-run predictions.

With the standard three runs a tag wins with two votes; a three-way split
leaves the token untagged. The voted sequence is then repaired to valid IOB
through the codec's dangling-inside rule, since token-wise voting can strand
an I- tag without its opener.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus import Document, repair_iob
from .errors import LengthMismatch


@dataclass(frozen=True)
class RunTags:
    doc_id: str
    run_index: int
    tags: tuple[str, ...]


def majority_vote(runs, doc: Document) -> list[str]:
    """Combine n >= 2 tag sequences by plurality; ties yield O.

    For n = 3 this is exactly the 2-of-3 rule: a tag present in at least two
    runs wins, and three distinct tags leave the token untagged.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise LengthMismatch("voting needs at least two runs")
    sequences = [list(r.tags) if isinstance(r, RunTags) else list(r) for r in runs]
    for seq in sequences:
        if len(seq) != len(doc):
            raise LengthMismatch(
                f"run has {len(seq)} tags for document {doc.doc_id!r} of length {len(doc)}")

    voted: list[str] = []
    for position in range(len(doc)):
        counts = Counter(seq[position] for seq in sequences)
        ranked = counts.most_common(2)
        top_tag, top_count = ranked[0]
        if len(ranked) > 1 and ranked[1][1] == top_count:
            voted.append("O")
        else:
            voted.append(top_tag)
    return repair_iob(voted)
