import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histner.corpus import (
    DatasetPaths,
    EntitySpan,
    decode_iob,
    dump_dataset,
    iob_from_spans,
    load_dataset,
    load_dataset_dump,
    parse_file,
    repair_iob,
    spans_from_iob,
)
from histner.errors import DanglingInsideTag, DatasetError, MalformedRow, OverlappingSpans

from conftest import random_span_set


# ----------------------------------------------------------------------
# IOB codec

def test_single_token_entity():
    assert spans_from_iob(["B-LOC"]) == [EntitySpan(0, 1, "LOC")]


def test_no_entities():
    assert spans_from_iob(["O", "O", "O"]) == []


def test_canonical_two_entities():
    spans = spans_from_iob(["B-PER", "I-PER", "O", "B-LOC"])
    assert spans == [EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC")]


def test_adjacent_b_tags_start_new_spans():
    spans = spans_from_iob(["B-PER", "B-PER"])
    assert spans == [EntitySpan(0, 1, "PER"), EntitySpan(1, 2, "PER")]
    # round-trip confirms the reading
    assert spans_from_iob(iob_from_spans(spans, 2)) == spans


def test_dangling_inside_is_repaired_with_warning():
    spans, warnings = decode_iob(["O", "I-LOC"])
    assert spans == [EntitySpan(1, 2, "LOC")]
    assert len(warnings) == 1 and "I-LOC" in warnings[0]


def test_dangling_inside_label_switch():
    spans, warnings = decode_iob(["B-PER", "I-LOC"])
    assert spans == [EntitySpan(0, 1, "PER"), EntitySpan(1, 2, "LOC")]
    assert warnings


def test_dangling_inside_strict_raises():
    with pytest.raises(DanglingInsideTag):
        decode_iob(["O", "I-LOC"], strict=True)


def test_unknown_tag_recovered_as_o():
    spans, warnings = decode_iob(["B-PER", "junk", "I-PER"])
    assert spans[0] == EntitySpan(0, 1, "PER")
    assert len(warnings) == 2  # unknown tag, then dangling I-PER


def test_encode_empty():
    assert iob_from_spans([], 3) == ["O", "O", "O"]


def test_encode_simple():
    assert iob_from_spans([EntitySpan(0, 2, "PER")], 2) == ["B-PER", "I-PER"]


def test_encode_rejects_overlap():
    with pytest.raises(OverlappingSpans):
        iob_from_spans([EntitySpan(0, 2, "PER"), EntitySpan(1, 3, "LOC")], 4)


def test_encode_rejects_out_of_bounds():
    from histner.errors import InvalidSpans
    with pytest.raises(InvalidSpans):
        iob_from_spans([EntitySpan(0, 5, "PER")], 3)


def test_round_trip_seeded():
    rng = random.Random(1234)
    for _ in range(1000):
        length = rng.randint(1, 50)
        spans = random_span_set(rng, length)
        assert spans_from_iob(iob_from_spans(spans, length)) == spans


@settings(max_examples=200)
@given(st.data())
def test_round_trip_property(data):
    length = data.draw(st.integers(min_value=1, max_value=40))
    seed = data.draw(st.integers(min_value=0, max_value=2**32 - 1))
    spans = random_span_set(random.Random(seed), length)
    assert spans_from_iob(iob_from_spans(spans, length)) == spans


def test_repair_iob_produces_valid_tags():
    repaired = repair_iob(["I-PER", "I-PER", "O", "I-LOC"])
    assert repaired == ["B-PER", "I-PER", "O", "B-LOC"]
    assert repair_iob(repaired) == repaired


# ----------------------------------------------------------------------
# File parsing

def test_parse_fixture_corpus(toy_dataset):
    assert len(toy_dataset.documents) == 8
    assert toy_dataset.language == "de"
    assert list(toy_dataset.label_set) == ["pers", "loc"]
    doc = toy_dataset.by_id()["fx-train-001"]
    assert doc.split == "train"
    assert doc.gold == (EntitySpan(2, 4, "pers"), EntitySpan(6, 7, "loc"))
    assert doc.span_text(doc.gold[0]) == "H. Klee"
    assert doc.text.startswith("Der Maler H. Klee")


def test_paper_style_person_location_rows(tmp_path):
    f = tmp_path / "mini.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\n"
                 "# document_id = mini-1\n"
                 "H.\tB-PER\nKlee\tI-PER\n,\tO\nBerlin\tB-LOC\n",
                 encoding="utf-8")
    docs, warnings = parse_file(f, split="train", dataset_id="mini")
    assert not warnings
    assert docs[0].gold == (EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC"))


def test_single_row_single_entity(tmp_path):
    f = tmp_path / "one.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\n# document_id = d\nBerlin\tB-LOC\n",
                 encoding="utf-8")
    docs, _ = parse_file(f, split="train")
    assert len(docs) == 1
    assert docs[0].gold == (EntitySpan(0, 1, "LOC"),)


def test_blank_line_delimited_documents(fixtures_dir):
    docs, warnings = parse_file(fixtures_dir / "messy.tsv", split="train",
                                dataset_id="messy")
    assert len(docs) == 2
    assert docs[0].doc_id == "messy#0001"
    # dangling I-LOC repaired into a span
    assert docs[0].gold == (EntitySpan(1, 2, "LOC"),)
    # second doc: FOO treated as O, short row kept with tag O
    assert docs[1].surfaces == ("Berlin", "x", "y")
    assert docs[1].gold == (EntitySpan(0, 1, "LOC"),)
    codes = {w.code for w in warnings}
    assert "iob_repair" in codes and "malformed_row" in codes


def test_strict_mode_raises_on_malformed(fixtures_dir):
    with pytest.raises((MalformedRow, DanglingInsideTag)):
        parse_file(fixtures_dir / "messy.tsv", split="train", strict=True)


def test_bare_token_header_row(tmp_path):
    f = tmp_path / "hipe.tsv"
    f.write_text("TOKEN\tNE-COARSE-LIT\tMISC\n"
                 "# document_id = h1\n"
                 "Paris\tB-loc\t_\n",
                 encoding="utf-8")
    docs, _ = parse_file(f, split="dev")
    assert docs[0].surfaces == ("Paris",)
    assert docs[0].gold == (EntitySpan(0, 1, "loc"),)


def test_production_shaped_file(tmp_path):
    # ten columns, namespaced document ids, segment comments, blank segment
    # breaks inside a document, flags in MISC
    header = ("TOKEN\tNE-COARSE-LIT\tNE-COARSE-METO\tNE-FINE-LIT\tNE-FINE-METO"
              "\tNE-FINE-COMP\tNE-NESTED\tNEL-LIT\tNEL-METO\tMISC")
    rows = [
        "# hipe2022:document_id = NZZ-1798-01-20-a-p0002",
        "# hipe2022:date = 1798-01-20",
        "# language = de",
        "Der\tO\tO\tO\tO\tO\tO\t_\t_\t_",
        "Herr\tO\tO\tO\tO\tO\tO\t_\t_\t_",
        "Klee\tB-pers\tO\tB-pers.ind\tO\tO\tO\tQ123\t_\tEndOfLine",
        "",
        "# segment_iiif_link = https://example.org/iiif",
        "reiste\tO\tO\tO\tO\tO\tO\t_\t_\t_",
        "nach\tO\tO\tO\tO\tO\tO\t_\t_\t_",
        "Wien\tB-loc\tO\tB-loc.adm\tO\tO\tO\tQ1741\t_\tNoSpaceAfter",
        ".\tO\tO\tO\tO\tO\tO\t_\t_\t_",
    ]
    f = tmp_path / "prod.tsv"
    f.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    docs, warnings = parse_file(f, split="train", dataset_id="prod")
    assert len(docs) == 1
    doc = docs[0]
    assert doc.doc_id == "NZZ-1798-01-20-a-p0002"
    assert doc.language == "de"
    assert len(doc) == 7  # blank segment break does not split the document
    assert doc.gold == (EntitySpan(2, 3, "pers"), EntitySpan(5, 6, "loc"))
    assert not warnings


def test_dataset_without_entities_needs_label_override(tmp_path):
    f = tmp_path / "plain.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\n# document_id = p1\nnur\tO\nText\tO\n",
                 encoding="utf-8")
    with pytest.raises(DatasetError):
        load_dataset(DatasetPaths(dataset_id="plain", train=str(f)))
    ds = load_dataset(DatasetPaths(dataset_id="plain", train=str(f),
                                   labels=("pers", "loc")))
    assert list(ds.label_set) == ["pers", "loc"]
    assert ds.documents[0].gold == ()


def test_tag_column_selection(tmp_path):
    f = tmp_path / "cols.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\tNE-COARSE-METO\n"
                 "# document_id = c1\n"
                 "Bank\tO\tB-org\n",
                 encoding="utf-8")
    docs, _ = parse_file(f, "NE-COARSE-METO", split="train")
    assert docs[0].gold == (EntitySpan(0, 1, "org"),)


def test_missing_tag_column_errors(tmp_path):
    f = tmp_path / "cols.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\n# document_id = c1\nBank\tO\n",
                 encoding="utf-8")
    with pytest.raises(DatasetError):
        parse_file(f, "NO-SUCH-COLUMN", split="train")


def test_duplicate_doc_ids_rejected(tmp_path):
    f = tmp_path / "dup.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\n"
                 "# document_id = same\nBerlin\tB-LOC\n"
                 "# document_id = same\nParis\tB-LOC\n",
                 encoding="utf-8")
    with pytest.raises(DatasetError):
        load_dataset(DatasetPaths(dataset_id="dup", train=str(f)))


def test_token_count_matches_rows(toy_dataset):
    doc = toy_dataset.by_id()["fx-train-003"]
    assert len(doc) == 10
    assert [t.index for t in doc.tokens] == list(range(10))


def test_label_override_must_cover(tmp_path):
    f = tmp_path / "d.tsv"
    f.write_text("# TOKEN\tNE-COARSE-LIT\n# document_id = a\nBerlin\tB-loc\n",
                 encoding="utf-8")
    with pytest.raises(DatasetError):
        load_dataset(DatasetPaths(dataset_id="d", train=str(f), labels=("pers",)))
    ds = load_dataset(DatasetPaths(dataset_id="d", train=str(f),
                                   labels=("pers", "loc")))
    assert list(ds.label_set) == ["pers", "loc"]


# ----------------------------------------------------------------------
# JSON dump

def test_dump_round_trip(toy_dataset, tmp_path):
    out = tmp_path / "dump.json"
    dump_dataset(toy_dataset, out)
    loaded = load_dataset_dump(out)
    assert loaded.dataset_id == toy_dataset.dataset_id
    assert [d.doc_id for d in loaded.documents] == [d.doc_id for d in toy_dataset.documents]
    for a, b in zip(loaded.documents, toy_dataset.documents):
        assert a.surfaces == b.surfaces
        assert a.gold == b.gold
        assert a.split == b.split
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["format"] == "histner-dataset"
    assert payload["version"] == 1


def test_dump_version_check(toy_dataset, tmp_path):
    out = tmp_path / "dump.json"
    dump_dataset(toy_dataset, out)
    payload = json.loads(out.read_text(encoding="utf-8"))
    payload["version"] = 999
    out.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(DatasetError):
        load_dataset_dump(out)
