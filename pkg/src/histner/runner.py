"""Experiment orchestration: datasets x methods x runs -> scores and tables.

Method names mirror the comparison-table labels: `baseline` (zero-shot) and
`r<k>`, `embedding<k>`, `overlap<k>` few-shot variants. Every target document
is processed once per (method, run); failures are recorded and scored as
empty predictions, never dropped. A warm exchange cache makes reruns
provider-free and byte-identical.
"""

from __future__ import annotations

import configparser
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import tables
from .corpus import (
    DEFAULT_TAG_COLUMN,
    Dataset,
    DatasetPaths,
    Document,
    iob_from_spans,
    load_dataset,
    spans_from_iob,
)
from .errors import (
    ConfigError,
    DatasetError,
    MalformedProviderReply,
    ProviderUnavailable,
    ScriptMiss,
    UnparseableReply,
)
from .llm_gateway import (
    ExchangeStore,
    HttpChatProvider,
    LlmGateway,
    ProviderConfig,
    mock_provider,
)
from .prompting import render_few_shot, render_zero_shot
from .response_processing import align, parse_reply
from .retrieval import (
    RetrievalIndex,
    load_embedding_table,
    load_stopwords,
    rank_embedding,
    rank_lexical,
    rank_random,
)
from .scoring import FUZZY, MODES, STRICT, AggregateStat, aggregate_runs, micro_f1, score_document
from .voting import majority_vote

log = logging.getLogger("histner.runner")

_METHOD = re.compile(r"^(r|embedding|overlap)([1-9]\d*)$")

MOCK_MODES = ("mock-gold-echo", "mock-corrupt", "mock-scripted")


def parse_method(name: str) -> tuple[str, int]:
    """Split a method label into (family, k); baseline carries k = 0."""
    if name == "baseline":
        return ("baseline", 0)
    m = _METHOD.match(name)
    if not m:
        raise ConfigError(f"unknown method {name!r}")
    return (m.group(1), int(m.group(2)))


@dataclass
class ExperimentConfig:
    datasets: list[DatasetPaths]
    methods: list[str]
    output_dir: str
    runs: int = 3
    seed: int = 0
    target_split: str = "train+dev"
    provider_mode: str = "mock-gold-echo"
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    script_path: str | None = None
    embeddings: dict[str, str] = field(default_factory=dict)
    workers: int = 1
    max_example_chars: int | None = None
    confidence: float = 0.95

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("at least one dataset section is required")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            parse_method(m)
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.target_split not in ("train+dev", "test"):
            raise ConfigError(f"target_split must be train+dev or test, "
                              f"got {self.target_split!r}")
        if self.provider_mode not in MOCK_MODES + ("http",):
            raise ConfigError(f"unknown provider mode {self.provider_mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        needs_table = [m for m in self.methods if parse_method(m)[0] == "embedding"]
        if needs_table:
            missing = [d.dataset_id for d in self.datasets
                       if d.dataset_id not in self.embeddings]
            if missing:
                raise ConfigError(
                    f"methods {needs_table} need an embeddings table for {missing}")


def load_config(path) -> ExperimentConfig:
    """Read the key/value + sections experiment file."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "experiment" not in parser:
        raise ConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    known_exp = {"methods", "runs", "seed", "target_split", "output_dir",
                 "workers", "max_example_chars", "confidence"}
    for key in exp:
        if key not in known_exp:
            log.warning("ignoring unknown [experiment] key %r", key)
    base = Path(path).resolve().parent

    def resolve(p: str) -> str:
        q = Path(p)
        return str(q if q.is_absolute() else base / q)

    datasets: list[DatasetPaths] = []
    embeddings: dict[str, str] = {}
    for section in parser.sections():
        if not section.startswith("dataset:"):
            continue
        dataset_id = section.split(":", 1)[1].strip()
        sec = parser[section]
        labels = None
        if sec.get("labels"):
            labels = tuple(x.strip() for x in sec["labels"].split(",") if x.strip())
        paths = DatasetPaths(
            dataset_id=dataset_id,
            language=sec.get("language", ""),
            tag_column=sec.get("tag_column", DEFAULT_TAG_COLUMN),
            train=resolve(sec["train"]) if sec.get("train") else None,
            dev=resolve(sec["dev"]) if sec.get("dev") else None,
            test=resolve(sec["test"]) if sec.get("test") else None,
            labels=labels,
            strict=sec.getboolean("strict", fallback=False),
        )
        datasets.append(paths)
        if sec.get("embeddings"):
            embeddings[dataset_id] = resolve(sec["embeddings"])

    provider = ProviderConfig()
    provider_mode = "mock-gold-echo"
    script_path = None
    if "provider" in parser:
        prov = parser["provider"]
        provider_mode = prov.get("mode", provider_mode)
        provider = ProviderConfig(
            endpoint=prov.get("endpoint", ""),
            model_id=prov.get("model_id", provider_mode),
            temperature=prov.getfloat("temperature", fallback=0.0),
            max_retries=prov.getint("max_retries", fallback=3),
            timeout=prov.getfloat("timeout", fallback=60.0),
            requests_per_minute=prov.getint("requests_per_minute", fallback=60),
            api_key_env=prov.get("api_key_env", "HISTNER_API_KEY"),
        )
        if prov.get("script"):
            script_path = resolve(prov["script"])

    try:
        return ExperimentConfig(
            datasets=datasets,
            methods=[m.strip() for m in exp.get("methods", "").split(",") if m.strip()],
            output_dir=resolve(exp.get("output_dir", "runs")),
            runs=exp.getint("runs", fallback=3),
            seed=exp.getint("seed", fallback=0),
            target_split=exp.get("target_split", "train+dev"),
            provider_mode=provider_mode,
            provider=provider,
            script_path=script_path,
            embeddings=embeddings,
            workers=exp.getint("workers", fallback=1),
            max_example_chars=exp.getint("max_example_chars", fallback=None),
            confidence=exp.getfloat("confidence", fallback=0.95),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value in config: {exc}") from exc


# ----------------------------------------------------------------------

@dataclass
class DocOutcome:
    doc_id: str
    status: str  # ok | failed
    reason: str
    tags: list[str]
    dropped: list[dict]
    warnings: list[str]


@dataclass
class ExperimentResult:
    reports: list
    aggregates: dict[tuple[str, str, str], AggregateStat]
    voted_f1: dict[tuple[str, str, str], float]
    manifest: dict
    output_dir: Path


def _make_provider(config: ExperimentConfig, dataset: Dataset):
    mode = config.provider_mode
    if mode == "http":
        import os
        key = os.environ.get(config.provider.api_key_env)
        return HttpChatProvider(config.provider, api_key=key)
    if mode == "mock-gold-echo":
        return mock_provider("gold_echo", dataset=dataset)
    if mode == "mock-corrupt":
        return mock_provider("corrupt", dataset=dataset)
    if mode == "mock-scripted":
        if not config.script_path:
            raise ConfigError("mock-scripted mode needs provider.script")
        script = json.loads(Path(config.script_path).read_text(encoding="utf-8"))
        return mock_provider("scripted", script=script)
    raise ConfigError(f"unknown provider mode {mode!r}")


def _select_examples(method: str, k: int, target: Document, candidate_ids: list[str],
                     index: RetrievalIndex | None, table, seed: int,
                     run_index: int) -> list[str]:
    if method == "baseline":
        return []
    if method == "r":
        return rank_random(target.doc_id, candidate_ids, k, seed, run_index)
    if method == "overlap":
        return rank_lexical(index, target.doc_id, candidate_ids, k)
    if method == "embedding":
        return rank_embedding(target.doc_id, candidate_ids, k, table)
    raise ConfigError(f"unknown method family {method!r}")


def _process_document(target: Document, dataset: Dataset, docs_by_id: dict,
                      method_name: str, family: str, k: int, run_index: int,
                      candidate_ids: list[str], index, table, gateway,
                      config: ExperimentConfig) -> DocOutcome:
    try:
        example_ids = _select_examples(family, k, target, candidate_ids,
                                       index, table, config.seed, run_index)
        if example_ids:
            examples = [(docs_by_id[i], docs_by_id[i].gold) for i in example_ids]
            prompt = render_few_shot(target, examples, dataset.label_set,
                                     method_name, config.max_example_chars)
        else:
            prompt = render_zero_shot(target, dataset.label_set, method_name)
        exchange = gateway.complete(prompt, run_index, target.doc_id)
        parsed = parse_reply(exchange.raw_response)
        aligned = align(parsed.predictions, target, dataset.label_set)
        tags = iob_from_spans(aligned.spans, len(target))
        dropped = [{"surface": d.prediction.surface, "label": d.prediction.label,
                    "reason": d.reason} for d in aligned.dropped]
        return DocOutcome(target.doc_id, "ok", "", tags, dropped,
                          parsed.warnings + aligned.warnings)
    except (UnparseableReply, ProviderUnavailable, MalformedProviderReply,
            ScriptMiss) as exc:
        return DocOutcome(target.doc_id, "failed",
                          f"{type(exc).__name__}: {exc}",
                          ["O"] * len(target), [], [])


def run_experiment(config: ExperimentConfig, *, gateway_factory=None) -> ExperimentResult:
    started = time.monotonic()
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    store = ExchangeStore(outdir / "exchanges.jsonl")

    reports = []
    aggregates: dict[tuple[str, str, str], AggregateStat] = {}
    voted_f1: dict[tuple[str, str, str], float] = {}
    manifest_docs: list[dict] = []
    prediction_rows: list[dict] = []
    audit_rows: list[dict] = []
    provider_calls = 0
    dataset_ids: list[str] = []

    for paths in config.datasets:
        dataset = load_dataset(paths)
        dataset_ids.append(dataset.dataset_id)
        train_dev = [d for d in dataset.documents if d.split in ("train", "dev")]
        if config.target_split == "train+dev":
            targets = train_dev
        else:
            targets = dataset.split("test")
        if not targets:
            raise DatasetError(f"{dataset.dataset_id}: no documents in target split "
                               f"{config.target_split!r}")
        if not train_dev:
            raise DatasetError(f"{dataset.dataset_id}: empty candidate pool")
        candidate_ids = [d.doc_id for d in train_dev]

        families = {parse_method(m)[0] for m in config.methods}
        index = None
        if "overlap" in families:
            scope: dict[str, Document] = {d.doc_id: d for d in train_dev}
            for t in targets:
                scope.setdefault(t.doc_id, t)
            index = RetrievalIndex.build(scope.values(),
                                         load_stopwords(dataset.language))
        table = None
        if "embedding" in families:
            table = load_embedding_table(config.embeddings[dataset.dataset_id])
            needed = {d.doc_id for d in targets} | set(candidate_ids)
            absent = sorted(needed - set(table.vectors))
            if absent:
                raise ConfigError(f"{dataset.dataset_id}: embedding table misses "
                                  f"{len(absent)} documents, e.g. {absent[:3]}")

        provider = _make_provider(config, dataset)
        if gateway_factory is not None:
            gateway = gateway_factory(provider, store, config.provider)
        else:
            gateway = LlmGateway(provider, store, config.provider)

        docs_by_id = dataset.by_id()
        for method_name in config.methods:
            family, k = parse_method(method_name)
            run_tags: dict[int, dict[str, DocOutcome]] = {}
            for run_index in range(config.runs):
                if config.workers > 1:
                    with ThreadPoolExecutor(max_workers=config.workers) as pool:
                        outcomes = list(pool.map(
                            lambda t: _process_document(
                                t, dataset, docs_by_id, method_name, family, k,
                                run_index, candidate_ids, index, table, gateway,
                                config),
                            targets))
                else:
                    outcomes = [_process_document(
                        t, dataset, docs_by_id, method_name, family, k, run_index,
                        candidate_ids, index, table, gateway, config)
                        for t in targets]
                by_id = {o.doc_id: o for o in outcomes}
                run_tags[run_index] = by_id

                run_label = str(run_index)
                for target in targets:
                    outcome = by_id[target.doc_id]
                    manifest_docs.append({
                        "dataset": dataset.dataset_id, "method": method_name,
                        "run": run_label, "doc_id": target.doc_id,
                        "status": outcome.status, "reason": outcome.reason,
                    })
                    prediction_rows.append({
                        "dataset": dataset.dataset_id, "method": method_name,
                        "run": run_label, "doc_id": target.doc_id,
                        "status": outcome.status, "reason": outcome.reason,
                        "tags": outcome.tags,
                    })
                    for drop in outcome.dropped:
                        audit_rows.append({"type": "drop",
                                           "dataset": dataset.dataset_id,
                                           "method": method_name, "run": run_label,
                                           "doc_id": target.doc_id, **drop})
                    for message in outcome.warnings:
                        audit_rows.append({"type": "warning",
                                           "dataset": dataset.dataset_id,
                                           "method": method_name, "run": run_label,
                                           "doc_id": target.doc_id,
                                           "message": message})

                for mode in (STRICT, FUZZY):
                    counts = [
                        score_document(
                            spans_from_iob(by_id[t.doc_id].tags), t.gold, mode)
                        for t in targets
                    ]
                    reports.append(micro_f1(
                        counts, dataset_id=dataset.dataset_id,
                        method_tag=method_name, run_label=run_label,
                        mode=mode.mode))

            per_mode_f1: dict[str, list[float]] = {m: [] for m in MODES}
            for r in reports:
                if (r.dataset_id == dataset.dataset_id
                        and r.method_tag == method_name and r.run_label != "voted"):
                    per_mode_f1[r.mode].append(r.f1)
            for mode_name, values in per_mode_f1.items():
                key = (dataset.dataset_id, method_name, mode_name)
                if len(values) >= 2:
                    aggregates[key] = aggregate_runs(values, config.confidence)
                else:
                    aggregates[key] = AggregateStat(mean=values[0],
                                                    half_width=float("nan"),
                                                    n=1, confidence=config.confidence)

            if config.runs >= 3:
                voted_by_doc: dict[str, list[str]] = {}
                for target in targets:
                    sequences = [run_tags[i][target.doc_id].tags
                                 for i in range(config.runs)]
                    voted_by_doc[target.doc_id] = majority_vote(sequences, target)
                    prediction_rows.append({
                        "dataset": dataset.dataset_id, "method": method_name,
                        "run": "voted", "doc_id": target.doc_id,
                        "status": "ok", "reason": "",
                        "tags": voted_by_doc[target.doc_id],
                    })
                    manifest_docs.append({
                        "dataset": dataset.dataset_id, "method": method_name,
                        "run": "voted", "doc_id": target.doc_id,
                        "status": "ok", "reason": "",
                    })
                for mode in (STRICT, FUZZY):
                    counts = [
                        score_document(
                            spans_from_iob(voted_by_doc[t.doc_id]), t.gold, mode)
                        for t in targets
                    ]
                    report = micro_f1(counts, dataset_id=dataset.dataset_id,
                                      method_tag=method_name, run_label="voted",
                                      mode=mode.mode)
                    reports.append(report)
                    voted_f1[(dataset.dataset_id, method_name, mode.mode)] = report.f1

        provider_calls += gateway.calls_made

    artifacts = _persist(outdir, config, reports, aggregates, voted_f1,
                         prediction_rows, audit_rows, dataset_ids)
    manifest = {
        "config": _config_snapshot(config),
        "documents": manifest_docs,
        "artifacts": artifacts,
        "wall_clock_seconds": time.monotonic() - started,
        "provider_calls": provider_calls,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return ExperimentResult(reports, aggregates, voted_f1, manifest, outdir)


def _config_snapshot(config: ExperimentConfig) -> dict:
    return {
        "datasets": [{"dataset_id": d.dataset_id, "language": d.language,
                      "tag_column": d.tag_column, "train": d.train, "dev": d.dev,
                      "test": d.test, "labels": list(d.labels) if d.labels else None}
                     for d in config.datasets],
        "methods": config.methods,
        "runs": config.runs,
        "seed": config.seed,
        "target_split": config.target_split,
        "provider_mode": config.provider_mode,
        "model_id": config.provider.model_id,
        "temperature": config.provider.temperature,
        "workers": config.workers,
        "max_example_chars": config.max_example_chars,
        "confidence": config.confidence,
        "output_dir": config.output_dir,
    }


def _persist(outdir: Path, config, reports, aggregates, voted_f1,
             prediction_rows, audit_rows, dataset_ids) -> dict:
    predictions_path = outdir / "predictions.jsonl"
    with predictions_path.open("w", encoding="utf-8") as fh:
        for row in prediction_rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    audit_path = outdir / "audit.jsonl"
    with audit_path.open("w", encoding="utf-8") as fh:
        for row in audit_rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    tables.write_scores_csv(reports, outdir / "scores.csv")
    tables.write_aggregates_csv(aggregates, voted_f1, outdir / "aggregates.csv")
    artifact_paths = export_tables(reports, aggregates, voted_f1,
                                   dataset_ids, config.methods, outdir)
    artifact_paths.update({
        "predictions": str(predictions_path),
        "audit": str(audit_path),
        "scores_csv": str(outdir / "scores.csv"),
        "aggregates_csv": str(outdir / "aggregates.csv"),
        "exchanges": str(outdir / "exchanges.jsonl"),
    })
    return artifact_paths


def export_tables(reports, aggregates, voted_f1, dataset_ids, methods,
                  outdir: Path) -> dict:
    """Write the per-mode comparison tables and the voting-gain table."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for mode in MODES:
        text = tables.comparison_table(aggregates, dataset_ids, methods, mode)
        path = outdir / f"comparison_{mode}.md"
        path.write_text(text, encoding="utf-8")
        paths[f"comparison_{mode}"] = str(path)
    if voted_f1:
        text = tables.voting_table(aggregates, voted_f1, dataset_ids, methods)
        path = outdir / "voting_gains.md"
        path.write_text(text, encoding="utf-8")
        paths["voting_gains"] = str(path)
    return paths


def rebuild_tables(run_dir, confidence: float = 0.95) -> dict:
    """Recompute aggregates from scores.csv and re-emit the Markdown tables."""
    run_dir = Path(run_dir)
    reports = tables.read_scores_csv(run_dir / "scores.csv")
    if not reports:
        raise DatasetError(f"{run_dir}/scores.csv holds no rows")
    dataset_ids = list(dict.fromkeys(r.dataset_id for r in reports))
    methods = list(dict.fromkeys(r.method_tag for r in reports))
    aggregates: dict[tuple[str, str, str], AggregateStat] = {}
    voted_f1: dict[tuple[str, str, str], float] = {}
    for r in reports:
        key = (r.dataset_id, r.method_tag, r.mode)
        if r.run_label == "voted":
            voted_f1[key] = r.f1
    for dataset in dataset_ids:
        for method in methods:
            for mode in MODES:
                values = [r.f1 for r in reports
                          if r.dataset_id == dataset and r.method_tag == method
                          and r.mode == mode and r.run_label != "voted"]
                if not values:
                    continue
                key = (dataset, method, mode)
                if len(values) >= 2:
                    aggregates[key] = aggregate_runs(values, confidence)
                else:
                    aggregates[key] = AggregateStat(values[0], float("nan"), 1,
                                                    confidence)
    return export_tables(reports, aggregates, voted_f1, dataset_ids, methods, run_dir)


def score_predictions(dataset: Dataset, predictions_path) -> list:
    """Score a predictions store against gold, per method/run/mode."""
    rows = []
    try:
        with Path(predictions_path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
    except OSError as exc:
        raise DatasetError(f"cannot read predictions store: {exc}") from exc
    rows = [r for r in rows if r.get("dataset") in ("", None, dataset.dataset_id)]
    if not rows:
        raise DatasetError(f"no predictions for dataset {dataset.dataset_id!r}")
    docs = dataset.by_id()
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["method"], str(row["run"])), []).append(row)
    reports = []
    for (method, run_label), group in sorted(groups.items()):
        for mode in (STRICT, FUZZY):
            counts = []
            for row in group:
                doc = docs.get(row["doc_id"])
                if doc is None:
                    raise DatasetError(f"prediction for unknown doc {row['doc_id']!r}")
                counts.append(score_document(
                    spans_from_iob(row["tags"]), doc.gold, mode))
            reports.append(micro_f1(counts, dataset_id=dataset.dataset_id,
                                    method_tag=method, run_label=run_label,
                                    mode=mode.mode))
    return reports
