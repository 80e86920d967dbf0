"""Token/tag TSV ingestion and the IOB span codec.

Input files are UTF-8, tab separated. Lines starting with '#' carry metadata;
a comment of the form ``# document_id = <id>`` opens a new document. When a
file has no such boundary comments, blank lines delimit documents instead.
Column names come from a ``# `` header comment (or, for compatibility with
production HIPE files, from a leading bare ``TOKEN<TAB>...`` row); the first
column is always the token surface.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DanglingInsideTag,
    DatasetError,
    InvalidSpans,
    MalformedRow,
    OverlappingSpans,
    UnknownTagSyntax,
)

log = logging.getLogger("histner.corpus")

DEFAULT_TAG_COLUMN = "NE-COARSE-LIT"
DUMP_FORMAT = "histner-dataset"
DUMP_VERSION = 1

SPLITS = ("train", "dev", "test")

_DOC_BOUNDARY = re.compile(r"#\s*(?:[\w.-]+:)?document_id\s*=\s*(\S+)")
_META_COMMENT = re.compile(r"#\s*([\w.-]+)\s*=\s*(.*\S)\s*$")


@dataclass(frozen=True, slots=True)
class Token:
    surface: str
    index: int


@dataclass(frozen=True, order=True, slots=True)
class EntitySpan:
    """Half-open token range [start, end) carrying an entity label."""

    start: int
    end: int
    label: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    dataset_id: str
    language: str
    split: str
    tokens: tuple[Token, ...]
    gold: tuple[EntitySpan, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    @property
    def text(self) -> str:
        """Token surfaces joined by single spaces, the passage form used everywhere."""
        return " ".join(t.surface for t in self.tokens)

    def span_text(self, span: EntitySpan) -> str:
        return " ".join(t.surface for t in self.tokens[span.start:span.end])


@dataclass(frozen=True)
class LabelSet:
    dataset_id: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise DatasetError(f"label set for {self.dataset_id!r} is empty")
        if len(set(self.labels)) != len(self.labels):
            raise DatasetError(f"label set for {self.dataset_id!r} has duplicates")

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __iter__(self):
        return iter(self.labels)


@dataclass(frozen=True)
class ParseWarning:
    source: str
    line: int | None
    code: str
    message: str

    def __str__(self) -> str:
        loc = f"{self.source}:{self.line}" if self.line is not None else self.source
        return f"{loc}: [{self.code}] {self.message}"


@dataclass
class Dataset:
    dataset_id: str
    language: str
    documents: list[Document]
    label_set: LabelSet
    warnings: list[ParseWarning] = field(default_factory=list)

    def split(self, name: str) -> list[Document]:
        return [d for d in self.documents if d.split == name]

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}


# ----------------------------------------------------------------------
# IOB codec

def decode_iob(tags, *, strict: bool = False) -> tuple[list[EntitySpan], list[str]]:
    """Decode per-token IOB tags into sorted, non-overlapping spans.

    Recovery mode (default) repairs a dangling I-X by treating it as B-X and
    maps unknown tag syntax to O, returning a warning message for each repair.
    Strict mode raises instead.
    """
    spans: list[EntitySpan] = []
    warnings: list[str] = []
    append = spans.append
    open_start = -1
    open_label = ""

    for i, tag in enumerate(tags):
        if tag == "O":
            if open_start >= 0:
                append(EntitySpan(open_start, i, open_label))
                open_start = -1
            continue
        head = tag[:2]
        label = tag[2:]
        if head == "B-" and label:
            if open_start >= 0:
                append(EntitySpan(open_start, i, open_label))
            open_start, open_label = i, label
        elif head == "I-" and label:
            if open_start >= 0 and open_label == label:
                continue
            if strict:
                raise DanglingInsideTag(f"I-{label} at token {i} without an open B-{label}")
            warnings.append(f"dangling I-{label} at token {i} treated as B-{label}")
            if open_start >= 0:
                append(EntitySpan(open_start, i, open_label))
            open_start, open_label = i, label
        else:
            if strict:
                raise UnknownTagSyntax(f"tag {tag!r} at token {i} is not O/B-X/I-X")
            warnings.append(f"unknown tag {tag!r} at token {i} treated as O")
            if open_start >= 0:
                append(EntitySpan(open_start, i, open_label))
                open_start = -1
    if open_start >= 0:
        append(EntitySpan(open_start, len(tags), open_label))
    return spans, warnings


def spans_from_iob(tags, *, strict: bool = False) -> list[EntitySpan]:
    """Decode tags into spans, logging any repairs instead of returning them."""
    spans, warnings = decode_iob(tags, strict=strict)
    for w in warnings:
        log.debug("iob repair: %s", w)
    return spans


def iob_from_spans(spans, length: int) -> list[str]:
    """Encode non-overlapping spans as per-token IOB tags (inverse of spans_from_iob)."""
    spans = list(spans)
    if any(spans[i].start > spans[i + 1].start for i in range(len(spans) - 1)):
        spans.sort()
    tags = ["O"] * length
    prev_end = 0
    for span in spans:
        start, end = span.start, span.end
        if not (0 <= start < end <= length):
            raise InvalidSpans(f"span {span} out of bounds for length {length}")
        if start < prev_end:
            raise OverlappingSpans(f"span {span} overlaps a previous span")
        prev_end = end
        tags[start] = "B-" + span.label
        if end > start + 1:
            tags[start + 1:end] = ["I-" + span.label] * (end - start - 1)
    return tags


def repair_iob(tags) -> list[str]:
    """Round tags through the codec so the result is valid IOB."""
    spans, _ = decode_iob(tags)
    return iob_from_spans(spans, len(tags))


# ----------------------------------------------------------------------
# File parsing

def _resolve_tag_index(header: list[str] | None, ncols: int, tag_column: str,
                       source: str) -> int:
    """Map a tag column name to its cell index for rows with `ncols` cells."""
    if header is not None:
        if tag_column in header:
            pos = header.index(tag_column)
            # Header may name all columns (surface first) or only the tag columns.
            if len(header) == ncols:
                return pos
            if len(header) == ncols - 1:
                return pos + 1
            return pos if pos < ncols else ncols - 1
        raise DatasetError(f"{source}: tag column {tag_column!r} not in header {header}")
    if ncols >= 2:
        return 1
    raise DatasetError(f"{source}: no header and rows have a single column")


class _DocBuilder:
    def __init__(self, doc_id: str, first_line: int):
        self.doc_id = doc_id
        self.first_line = first_line
        self.surfaces: list[str] = []
        self.tags: list[str] = []


def parse_file(path, tag_column: str = DEFAULT_TAG_COLUMN, *, split: str,
               dataset_id: str = "", language: str = "",
               strict: bool = False) -> tuple[list[Document], list[ParseWarning]]:
    """Parse one token/tag TSV file into documents with decoded gold spans."""
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}")
    path = Path(path)
    source = path.name
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()

    has_boundaries = any(_DOC_BOUNDARY.match(ln) for ln in lines)
    warnings: list[ParseWarning] = []
    documents: list[Document] = []
    metadata: dict[str, str] = {}
    header: list[str] | None = None
    tag_index: int | None = None
    builder: _DocBuilder | None = None
    anon_count = 0
    seen_rows = False

    def flush(line_no: int | None):
        nonlocal builder, anon_count
        if builder is None:
            return
        if not builder.surfaces:
            warnings.append(ParseWarning(source, builder.first_line, "empty_document",
                                         f"document {builder.doc_id!r} has no tokens, skipped"))
            builder = None
            return
        spans, repairs = decode_iob(builder.tags, strict=strict)
        for msg in repairs:
            warnings.append(ParseWarning(source, builder.first_line, "iob_repair",
                                         f"{builder.doc_id}: {msg}"))
        tokens = tuple(Token(s, i) for i, s in enumerate(builder.surfaces))
        documents.append(Document(
            doc_id=builder.doc_id,
            dataset_id=dataset_id or metadata.get("dataset", path.stem),
            language=language or metadata.get("language", ""),
            split=split,
            tokens=tokens,
            gold=tuple(spans),
        ))
        builder = None

    def new_builder(doc_id: str, line_no: int):
        nonlocal builder
        flush(line_no)
        builder = _DocBuilder(doc_id, line_no)

    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            if not has_boundaries:
                flush(line_no)
            continue
        if line.startswith("#"):
            bound = _DOC_BOUNDARY.match(line)
            if bound:
                new_builder(bound.group(1), line_no)
                continue
            meta = _META_COMMENT.match(line)
            if meta:
                metadata.setdefault(meta.group(1), meta.group(2))
                continue
            body = line.lstrip("#").strip()
            cells = body.split("\t")
            if len(cells) >= 2 and header is None and not seen_rows:
                header = cells
            continue
        cells = line.split("\t")
        if not seen_rows and header is None and cells[0] == "TOKEN" and len(cells) >= 2:
            # Production HIPE files carry the column header as a bare first row.
            header = cells
            continue
        seen_rows = True
        if tag_index is None:
            tag_index = _resolve_tag_index(header, len(cells), tag_column, source)
            if header is None:
                warnings.append(ParseWarning(source, line_no, "no_header",
                                             "no column header found, taking column 2 as tags"))
        if builder is None:
            if has_boundaries:
                if strict:
                    raise MalformedRow(f"{source}:{line_no}: row before any document boundary")
                warnings.append(ParseWarning(source, line_no, "row_outside_document",
                                             "row before any document_id comment"))
            anon_count += 1
            new_builder(f"{path.stem}#{anon_count:04d}", line_no)
        surface = cells[0]
        if not surface:
            if strict:
                raise MalformedRow(f"{source}:{line_no}: empty token surface")
            warnings.append(ParseWarning(source, line_no, "malformed_row",
                                         "empty token surface, row skipped"))
            continue
        if len(cells) <= tag_index:
            if strict:
                raise MalformedRow(f"{source}:{line_no}: expected at least "
                                   f"{tag_index + 1} columns, got {len(cells)}")
            warnings.append(ParseWarning(source, line_no, "malformed_row",
                                         f"missing tag cell, token kept with tag O"))
            tag = "O"
        else:
            tag = cells[tag_index].strip()
        builder.surfaces.append(surface)
        builder.tags.append(tag)
    flush(None)

    if strict and not documents:
        raise DatasetError(f"{source}: no documents parsed")
    return documents, warnings


@dataclass(frozen=True)
class DatasetPaths:
    """Where a dataset's split files live, plus parsing options."""

    dataset_id: str
    language: str = ""
    tag_column: str = DEFAULT_TAG_COLUMN
    train: str | None = None
    dev: str | None = None
    test: str | None = None
    labels: tuple[str, ...] | None = None
    strict: bool = False


def load_dataset(paths: DatasetPaths) -> Dataset:
    """Parse all split files of a dataset and assemble its label set."""
    documents: list[Document] = []
    warnings: list[ParseWarning] = []
    language = paths.language
    for split in SPLITS:
        location = getattr(paths, split)
        if location is None:
            continue
        docs, warns = parse_file(location, paths.tag_column, split=split,
                                 dataset_id=paths.dataset_id, language=language,
                                 strict=paths.strict)
        documents.extend(docs)
        warnings.extend(warns)
        if not language and docs:
            language = docs[0].language
    if not documents:
        raise DatasetError(f"dataset {paths.dataset_id!r} has no documents")

    seen_ids: set[str] = set()
    for doc in documents:
        if doc.doc_id in seen_ids:
            raise DatasetError(f"duplicate doc_id {doc.doc_id!r} in {paths.dataset_id!r}")
        seen_ids.add(doc.doc_id)

    observed: list[str] = []
    for doc in documents:
        for span in doc.gold:
            if span.label not in observed:
                observed.append(span.label)
    if paths.labels is not None:
        missing = [lbl for lbl in observed if lbl not in paths.labels]
        if missing:
            raise DatasetError(f"declared label set misses observed labels {missing}")
        labels = tuple(paths.labels)
    else:
        labels = tuple(observed)
    if not labels:
        raise DatasetError(f"dataset {paths.dataset_id!r} has no entity labels")

    for w in warnings:
        log.warning("%s", w)
    return Dataset(paths.dataset_id, language, documents,
                   LabelSet(paths.dataset_id, labels), warnings)


# ----------------------------------------------------------------------
# Canonical JSON dump (cache format, also the input of the embedding exporter)

def dump_dataset(dataset: Dataset, path) -> None:
    payload = {
        "format": DUMP_FORMAT,
        "version": DUMP_VERSION,
        "dataset_id": dataset.dataset_id,
        "language": dataset.language,
        "labels": list(dataset.label_set.labels),
        "documents": [
            {
                "doc_id": d.doc_id,
                "split": d.split,
                "tokens": [t.surface for t in d.tokens],
                "spans": [{"start": s.start, "end": s.end, "label": s.label}
                          for s in d.gold],
            }
            for d in dataset.documents
        ],
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n",
                          encoding="utf-8")


def load_dataset_dump(path) -> Dataset:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != DUMP_FORMAT:
        raise DatasetError(f"{path}: not a {DUMP_FORMAT} dump")
    if payload.get("version") != DUMP_VERSION:
        raise DatasetError(f"{path}: unsupported dump version {payload.get('version')!r}")
    documents = []
    for entry in payload["documents"]:
        tokens = tuple(Token(s, i) for i, s in enumerate(entry["tokens"]))
        spans = tuple(sorted(EntitySpan(s["start"], s["end"], s["label"])
                             for s in entry["spans"]))
        prev_end = 0
        for span in spans:
            if not (0 <= span.start < span.end <= len(tokens)):
                raise DatasetError(f"{path}: span {span} out of bounds "
                                   f"in {entry['doc_id']!r}")
            if span.start < prev_end:
                raise DatasetError(f"{path}: overlapping spans in {entry['doc_id']!r}")
            prev_end = span.end
        documents.append(Document(entry["doc_id"], payload["dataset_id"],
                                  payload["language"], entry["split"], tokens, spans))
    label_set = LabelSet(payload["dataset_id"], tuple(payload["labels"]))
    return Dataset(payload["dataset_id"], payload["language"], documents, label_set)
