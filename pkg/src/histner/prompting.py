"""Prompt rendering for the zero-shot and few-shot annotation task.

Rendering is byte-stable: the instruction block is a fixed template shared by
both modes, the label set is substituted in declared order, and passages are
token surfaces joined by single spaces. Golden files under tests/fixtures pin
the exact output.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .corpus import Document, EntitySpan, LabelSet
from .errors import EmptyDocument, EmptyExamples

INSTRUCTIONS = """\
Your task is to identify and label named entities in the passage below using the following entity label set: {label_set}

Important guidelines:
- There should be no overlap between different entities (i.e., no nested or intersecting spans).
- Only include spans that match one of the specified labels.
- Be precise and only extract valid named entities.
- Do not return an empty list. There are always some entities in the passage.

Output format:

A Python list of tuples, where each tuple is of the form: ("entity text", "entity label").

Do not include any explanation or introductory text. Your output must be *only* a valid Python list of tuples."""


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    fingerprint: str
    method_tag: str


@dataclass(frozen=True)
class PromptRequest:
    """A target passage plus the (possibly empty) retrieved example block."""

    target_doc: Document
    examples: tuple[tuple[Document, tuple[EntitySpan, ...]], ...]
    label_set: LabelSet
    method_tag: str = "baseline"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_annotation(pairs) -> str:
    """Render (surface, label) pairs as the bracketed tuple-list reply syntax.

    Double quotes with backslash escaping, the strictest form the reply
    parser accepts, so in-context examples teach the exact expected output.
    """
    return "[" + ", ".join(f"({_quote(s)}, {_quote(l)})" for s, l in pairs) + "]"


def annotation_pairs(doc: Document, spans) -> list[tuple[str, str]]:
    """Gold spans as (space-joined surface, label) pairs in span order."""
    return [(doc.span_text(span), span.label) for span in sorted(spans)]


def _fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _instruction_block(labels: LabelSet) -> str:
    return INSTRUCTIONS.format(label_set=", ".join(labels))


def render_zero_shot(target: Document, labels: LabelSet,
                     method_tag: str = "baseline") -> RenderedPrompt:
    if len(target) == 0:
        raise EmptyDocument(f"document {target.doc_id!r} has no tokens")
    text = _instruction_block(labels) + f"\n\nPassage: {target.text}"
    return RenderedPrompt(text, _fingerprint(text), method_tag)


def render_few_shot(target: Document, examples, labels: LabelSet,
                    method_tag: str, max_example_chars: int | None = None
                    ) -> RenderedPrompt:
    """Instruction block, one Passage/Annotation pair per example in rank
    order, then the target passage.

    max_example_chars, when set, truncates example passages (never the
    target) as a context-window guard.
    """
    examples = list(examples)
    if not examples:
        raise EmptyExamples("few-shot rendering needs at least one example")
    if len(target) == 0:
        raise EmptyDocument(f"document {target.doc_id!r} has no tokens")
    parts = [_instruction_block(labels)]
    for doc, spans in examples:
        if doc.doc_id == target.doc_id:
            raise ValueError(f"example {doc.doc_id!r} is the target document")
        passage = doc.text
        if max_example_chars is not None and len(passage) > max_example_chars:
            passage = passage[:max_example_chars]
        annotation = serialize_annotation(annotation_pairs(doc, spans))
        parts.append(f"Passage: {passage}")
        parts.append(f"Annotation: {annotation}")
    parts.append(f"Passage: {target.text}")
    text = "\n\n".join(parts)
    return RenderedPrompt(text, _fingerprint(text), method_tag)


def render(request: PromptRequest, max_example_chars: int | None = None) -> RenderedPrompt:
    if request.examples:
        return render_few_shot(request.target_doc, request.examples,
                               request.label_set, request.method_tag,
                               max_example_chars)
    return render_zero_shot(request.target_doc, request.label_set,
                            request.method_tag)
