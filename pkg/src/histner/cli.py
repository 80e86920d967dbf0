"""Command line entry points: run, score, export-tables, parse-dataset."""

from __future__ import annotations

import argparse
import logging
import sys

from .corpus import DEFAULT_TAG_COLUMN, DatasetPaths, dump_dataset, load_dataset
from .errors import DatasetError, HistnerError
from .runner import load_config, rebuild_tables, run_experiment, score_predictions
from .tables import write_scores_csv


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config)
    ok = sum(1 for d in result.manifest["documents"] if d["status"] == "ok")
    failed = len(result.manifest["documents"]) - ok
    print(f"run complete: {ok} document results ok, {failed} failed")
    print(f"artifacts in {result.output_dir}")
    for report in result.reports:
        if report.run_label == "voted" or report.run_label == "0":
            print(f"  {report.dataset_id} {report.method_tag} "
                  f"run={report.run_label} {report.mode}: F1={report.f1:.3f}")
    return 0


def _dataset_paths_from_args(args) -> DatasetPaths:
    labels = None
    if args.labels:
        labels = tuple(x.strip() for x in args.labels.split(",") if x.strip())
    return DatasetPaths(
        dataset_id=args.dataset_id,
        language=args.language,
        tag_column=args.tag_column,
        train=args.train,
        dev=args.dev,
        test=args.test,
        labels=labels,
        strict=args.strict,
    )


def _sniff_dataset_id(predictions_path: str) -> str:
    import json as _json

    ids = set()
    try:
        with open(predictions_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    ids.add(_json.loads(line).get("dataset", ""))
    except OSError as exc:
        raise DatasetError(f"cannot read predictions store: {exc}") from exc
    ids.discard("")
    if len(ids) != 1:
        raise DatasetError(
            f"cannot infer dataset id from {predictions_path} (found {sorted(ids)}); "
            "pass --dataset-id")
    return ids.pop()


def _cmd_score(args) -> int:
    if args.gold:
        splits = dict(zip(("train", "dev", "test"), args.gold))
        dataset_id = args.dataset_id or _sniff_dataset_id(args.predictions)
        paths = DatasetPaths(
            dataset_id=dataset_id,
            language=args.language,
            tag_column=args.tag_column,
            train=splits.get("train"),
            dev=splits.get("dev"),
            test=splits.get("test"),
            strict=args.strict,
        )
    else:
        if not args.dataset_id:
            raise DatasetError("pass --dataset-id (or use --gold)")
        paths = _dataset_paths_from_args(args)
    dataset = load_dataset(paths)
    reports = score_predictions(dataset, args.predictions)
    for r in reports:
        print(f"{r.dataset_id} {r.method_tag} run={r.run_label} {r.mode}: "
              f"P={r.precision:.3f} R={r.recall:.3f} F1={r.f1:.3f} "
              f"(tp={r.tp} fp={r.fp} fn={r.fn})")
    if args.output:
        write_scores_csv(reports, args.output)
        print(f"wrote {args.output}")
    return 0


def _cmd_export_tables(args) -> int:
    paths = rebuild_tables(args.runs, confidence=args.confidence)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_parse_dataset(args) -> int:
    dataset = load_dataset(_dataset_paths_from_args(args))
    dump_dataset(dataset, args.output)
    entities = sum(len(d.gold) for d in dataset.documents)
    print(f"parsed {len(dataset.documents)} documents, {entities} entities, "
          f"labels: {', '.join(dataset.label_set.labels)}")
    if dataset.warnings:
        print(f"{len(dataset.warnings)} parse warnings (see log)")
    print(f"wrote {args.output}")
    return 0


def _add_dataset_args(parser: argparse.ArgumentParser, require_id: bool = True) -> None:
    parser.add_argument("--dataset-id", required=require_id)
    parser.add_argument("--language", default="")
    parser.add_argument("--tag-column", default=DEFAULT_TAG_COLUMN)
    parser.add_argument("--train")
    parser.add_argument("--dev")
    parser.add_argument("--test")
    parser.add_argument("--labels", help="comma-separated label override")
    parser.add_argument("--strict", action="store_true",
                        help="fail on malformed rows instead of repairing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histner",
        description="Prompt-based NER experiments on historical documents.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_score = sub.add_parser("score", help="score a predictions store against gold")
    p_score.add_argument("--predictions", required=True)
    p_score.add_argument("--gold", nargs="+", metavar="TSV",
                         help="gold dataset files in train [dev [test]] order "
                              "(shorthand for --train/--dev/--test)")
    _add_dataset_args(p_score, require_id=False)
    p_score.add_argument("--output", help="write per-run CSV here")
    p_score.set_defaults(func=_cmd_score)

    p_tables = sub.add_parser("export-tables", help="re-emit tables from a run directory")
    p_tables.add_argument("--runs", required=True, help="run output directory")
    p_tables.add_argument("--confidence", type=float, default=0.95)
    p_tables.set_defaults(func=_cmd_export_tables)

    p_parse = sub.add_parser("parse-dataset", help="parse TSV files into a JSON dump")
    _add_dataset_args(p_parse)
    p_parse.add_argument("--output", required=True)
    p_parse.set_defaults(func=_cmd_parse_dataset)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HistnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
