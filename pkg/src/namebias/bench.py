"""Experiment runners: bias measurement, STS triplets, summary relevance, heatmaps."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .anonymize import Anonymizer
from .corpus import Corpus
from .embed import BOW, BackendSpec, Embedder, build_vocabulary
from .errors import ConfigurationError, NameBiasError, UndefinedCorrelationError
from .gazetteer import PERTURBABLE_KINDS, Gazetteer, data_path, find_mentions
from .metrics import (
    ScoredPair,
    SimilarityKind,
    auc_roc,
    bias_score,
    cosine,
    max_human_similarity,
    pairwise_mean,
    pearson,
    spearman,
)
from .perturb import PerturbationConfig, generate_perturbations

logger = logging.getLogger(__name__)

NAME_SLOT = "CHARACTER_NAME"


@dataclass(frozen=True)
class Triplet:
    id: str
    query: str
    positive: str
    negative: str

    def __post_init__(self):
        if not (self.query.strip() and self.positive.strip() and self.negative.strip()):
            raise ConfigurationError(f"triplet {self.id!r} has an empty text")


@dataclass(frozen=True)
class SummSample:
    doc_id: str
    machine_summaries: tuple[tuple[str, float], ...]
    human_summaries: tuple[str, ...]

    def __post_init__(self):
        if not self.machine_summaries or not self.human_summaries:
            raise ConfigurationError(f"document {self.doc_id!r} needs machine and human summaries")
        for _, rel in self.machine_summaries:
            if not 1.0 <= rel <= 5.0:
                raise ConfigurationError(f"document {self.doc_id!r}: relevance {rel} outside [1, 5]")


@dataclass
class TaskReport:
    task: str
    backend: str
    anonymization: str
    metrics: dict[str, float]
    metadata: dict[str, str]
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TaskReport":
        return cls(d["task"], d["backend"], d["anonymization"], dict(d["metrics"]),
                   dict(d["metadata"]), dict(d.get("details", {})))


def _jsonl(path: str | Path) -> list[dict]:
    rows = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{n}: invalid JSON ({exc})") from None
    return rows


def load_triplets(path: str | Path | None = None) -> list[Triplet]:
    """Read triplet JSONL; defaults to the bundled ten-triplet dataset."""
    path = path or data_path("triplets.jsonl")
    out = [Triplet(str(r["id"]), r["query"], r["positive"], r["negative"]) for r in _jsonl(path)]
    if not out:
        raise ConfigurationError(f"{path}: no triplets")
    return out


def load_summ(path: str | Path) -> list[SummSample]:
    out = []
    for r in _jsonl(path):
        machine = tuple((m["text"], float(m["relevance"])) for m in r["machine_summaries"])
        out.append(SummSample(str(r["doc_id"]), machine, tuple(r["human_summaries"])))
    if not out:
        raise ConfigurationError(f"{path}: no documents")
    return out


def _embedder(backend: BackendSpec | Embedder, texts: Iterable[str] = ()) -> Embedder:
    if isinstance(backend, Embedder):
        return backend
    if backend.kind == BOW and backend.vocabulary is None:
        backend = backend.with_vocabulary(build_vocabulary(texts))
    return Embedder(backend)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _base_metadata(embedder: Embedder, extra: dict | None) -> dict[str, str]:
    meta = {"backend": embedder.spec.identity, "timestamp": _now()}
    for k, v in (extra or {}).items():
        meta[k] = v if isinstance(v, str) else json.dumps(v, sort_keys=True)
    return meta


def run_bias(
    corpus: Corpus,
    pconfig: PerturbationConfig,
    gazetteer: Gazetteer,
    backend: BackendSpec | Embedder,
    kind: SimilarityKind | str = SimilarityKind.COSINE,
    max_in_flight: int = 1,
    se_over: str = "pairs",
    metadata: dict | None = None,
) -> TaskReport:
    kind = SimilarityKind(kind)
    embedder = _embedder(backend, (s.text for s in corpus))

    def one(sample):
        try:
            pset = generate_perturbations(sample, pconfig, gazetteer)
            embs = embedder.embed([v.text for v in pset.variants])
            _, sims = pairwise_mean(embs, kind)
            return sims, None
        except NameBiasError as exc:
            logger.warning("skipping sample %s: %s", sample.id, exc)
            return None, str(exc)

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(one, corpus.samples))
    else:
        results = [one(s) for s in corpus.samples]

    per_sample, samples, skipped = [], [], {}
    for sample, (sims, err) in zip(corpus.samples, results):
        if sims is None:
            skipped[sample.id] = err
            continue
        per_sample.append(sims)
        samples.append({
            "id": sample.id,
            "mentions": len(find_mentions(sample.text, gazetteer, PERTURBABLE_KINDS)),
            "mean": math.fsum(sims) / len(sims),
        })
    if not per_sample:
        raise NameBiasError(f"all {len(corpus)} samples were skipped")

    score = bias_score(per_sample, se_over=se_over)
    meta = _base_metadata(embedder, metadata)
    meta.update({"seed": str(pconfig.seed), "k": str(pconfig.k), "mode": str(pconfig.mode),
                 "metric": kind.value, "dataset": corpus.source_name, "se_over": se_over})
    return TaskReport(
        task="bias",
        backend=embedder.spec.identity,
        anonymization="none",
        metrics={
            "mean": score.mean,
            "standard_error": score.standard_error,
            "sample_count": score.sample_count,
            "k": score.k,
            "pair_count": score.pair_count,
            "skipped": len(skipped),
        },
        metadata=meta,
        details={"samples": samples, "skipped": skipped},
    )


def names_only_difference(a: str, b: str, gazetteer: Gazetteer) -> bool:
    """True when ``a`` and ``b`` coincide once all gazetteer names are removed."""
    remove = Anonymizer("remove", gazetteer)
    return remove(a) == remove(b)


def run_sts(
    triplets: Sequence[Triplet],
    backend: BackendSpec | Embedder,
    anonymizer: Anonymizer,
    metadata: dict | None = None,
) -> TaskReport:
    """AUC of query/positive (label 1) vs query/negative (label 0) cosine scores."""
    if not triplets:
        raise ConfigurationError("no triplets")
    embedder = _embedder(backend, (t for tr in triplets for t in (tr.query, tr.positive, tr.negative)))
    texts = []
    for tr in triplets:
        texts += [anonymizer(tr.query, f"{tr.id}/query"),
                  anonymizer(tr.positive, f"{tr.id}/positive"),
                  anonymizer(tr.negative, f"{tr.id}/negative")]
    embs = embedder.embed(texts)

    pairs, rows = [], []
    for i, tr in enumerate(triplets):
        q, p, n = embs[3 * i:3 * i + 3]
        pos, neg = cosine(q, p), cosine(q, n)
        pairs += [ScoredPair(pos, 1), ScoredPair(neg, 0)]
        rows.append({"id": tr.id, "positive": pos, "negative": neg,
                     "texts": texts[3 * i:3 * i + 3]})
    meta = _base_metadata(embedder, metadata)
    meta["strategy"] = anonymizer.strategy
    return TaskReport(
        task="sts",
        backend=embedder.spec.identity,
        anonymization=anonymizer.strategy,
        metrics={
            "auc": auc_roc(pairs),
            "triplets": len(triplets),
            "mean_positive": sum(r["positive"] for r in rows) / len(rows),
            "mean_negative": sum(r["negative"] for r in rows) / len(rows),
        },
        metadata=meta,
        details={"triplets": rows},
    )


def run_summ(
    samples: Sequence[SummSample],
    backend: BackendSpec | Embedder,
    anonymizer: Anonymizer,
    metadata: dict | None = None,
) -> TaskReport:
    """Correlate max-cosine-to-any-human scores with human relevance, pooled over documents."""
    if sum(len(s.machine_summaries) for s in samples) < 2:
        raise ConfigurationError("need at least two machine summaries in total")
    raw = [t for s in samples for t in [m for m, _ in s.machine_summaries] + list(s.human_summaries)]
    embedder = _embedder(backend, raw)

    predicted, relevance = [], []
    for s in samples:
        machine = [anonymizer(m, f"{s.doc_id}/m{i}") for i, (m, _) in enumerate(s.machine_summaries)]
        humans = [anonymizer(h, f"{s.doc_id}/h{i}") for i, h in enumerate(s.human_summaries)]
        embs = embedder.embed(machine + humans)
        m_embs, h_embs = embs[:len(machine)], embs[len(machine):]
        predicted += [max_human_similarity(m, h_embs) for m in m_embs]
        relevance += [rel for _, rel in s.machine_summaries]

    try:
        rho = spearman(predicted, relevance)
        r = pearson(predicted, relevance)
    except UndefinedCorrelationError as exc:
        raise UndefinedCorrelationError(
            f"{exc} ({len(predicted)} pooled scores over {len(samples)} documents, "
            f"backend {embedder.spec.identity}, strategy {anonymizer.strategy})"
        ) from exc
    meta = _base_metadata(embedder, metadata)
    meta["strategy"] = anonymizer.strategy
    return TaskReport(
        task="summ",
        backend=embedder.spec.identity,
        anonymization=anonymizer.strategy,
        metrics={"spearman": rho, "pearson": r, "scores": len(predicted), "documents": len(samples)},
        metadata=meta,
        details={"predicted": predicted, "relevance": relevance},
    )


def export_heatmap(
    template: str,
    names: Sequence[str],
    backend: BackendSpec | Embedder,
    slot: str = NAME_SLOT,
) -> np.ndarray:
    """Cosine matrix between copies of ``template`` with ``slot`` filled by each name."""
    if template.count(slot) != 1:
        raise ConfigurationError(f"template must contain {slot!r} exactly once")
    if len(names) < 2:
        raise ConfigurationError("need at least two names")
    texts = [template.replace(slot, n) for n in names]
    embs = _embedder(backend, texts).embed(texts)
    n = len(names)
    matrix = np.empty((n, n))
    for i in range(n):
        matrix[i, i] = cosine(embs[i], embs[i])
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = cosine(embs[i], embs[j])
    return matrix


def write_heatmap_csv(dest, names: Sequence[str], matrix: np.ndarray) -> None:
    """Write the matrix with a name header row and column to a path or open text stream."""
    if hasattr(dest, "write"):
        _heatmap_rows(csv.writer(dest), names, matrix)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _heatmap_rows(csv.writer(fh), names, matrix)


def _heatmap_rows(w, names, matrix):
    w.writerow([""] + list(names))
    for name, row in zip(names, matrix):
        w.writerow([name] + [repr(float(v)) for v in row])


def write_report(report: TaskReport | Sequence[TaskReport], path: str | Path, format: str = "json") -> None:
    """Write reports as JSON (full) or CSV (one row per backend/anonymization run)."""
    reports = [report] if isinstance(report, TaskReport) else list(report)
    path = Path(path)
    if format == "json":
        payload = reports[0].to_dict() if isinstance(report, TaskReport) else [r.to_dict() for r in reports]
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
    elif format == "csv":
        keys = sorted({k for r in reports for k in r.metrics})
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "backend", "anonymization"] + keys)
            for r in reports:
                w.writerow([r.task, r.backend, r.anonymization] + [r.metrics.get(k, "") for k in keys])
    else:
        raise ConfigurationError(f"unknown report format {format!r}")


def read_report(path: str | Path) -> TaskReport | list[TaskReport]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return [TaskReport.from_dict(d) for d in data]
    return TaskReport.from_dict(data)
