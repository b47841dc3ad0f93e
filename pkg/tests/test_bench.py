import csv
import io
import json

import numpy as np
import pytest

from namebias.anonymize import Anonymizer
from namebias.bench import (
    SummSample,
    TaskReport,
    export_heatmap,
    load_summ,
    load_triplets,
    names_only_difference,
    read_report,
    run_bias,
    run_sts,
    run_summ,
    write_heatmap_csv,
    write_report,
)
from namebias.corpus import Corpus, TextSample
from namebias.embed import BackendSpec
from namebias.errors import ConfigurationError, UndefinedCorrelationError
from namebias.gazetteer import Gazetteer, data_path
from namebias.perturb import PerturbationConfig

HASH = BackendSpec("hash", dim=32)


def corpus():
    return Corpus((
        TextSample.from_text("a", "Mike has been living in Belgium for five years."),
        TextSample.from_text("b", "Donald met Shawn in France."),
        TextSample.from_text("c", "No names here at all."),
    ), "toy")


def strip_time(report):
    d = report.to_dict()
    d["metadata"].pop("timestamp")
    return d


class TestBias:
    def test_report(self, gaz):
        r = run_bias(corpus(), PerturbationConfig(k=5), gaz, HASH)
        assert r.task == "bias" and r.metrics["pair_count"] == 30 and r.metrics["k"] == 5
        assert r.metadata["seed"] == "0" and r.metadata["dataset"] == "toy"
        assert [s["mentions"] for s in r.details["samples"]] == [2, 3, 0]
        assert r.details["samples"][2]["mean"] == 1.0

    def test_parallel_matches_serial(self, gaz):
        a = run_bias(corpus(), PerturbationConfig(k=6, seed=4), gaz, HASH, max_in_flight=1)
        b = run_bias(corpus(), PerturbationConfig(k=6, seed=4), gaz, HASH, max_in_flight=3)
        assert strip_time(a) == strip_time(b)

    def test_skips_exhausted(self):
        g = Gazetteer(("Mike", "Donald", "Ann"), ("Belgium", "France", "Peru"))
        c = Corpus((TextSample.from_text("x", "Mike met Donald."), TextSample.from_text("y", "Ann left.")))
        r = run_bias(c, PerturbationConfig(k=3), g, HASH)
        assert r.metrics["skipped"] == 1 and "x" in r.details["skipped"]


class TestSts:
    def test_triplets_loaded(self):
        ts = load_triplets()
        assert [t.id for t in ts] == [f"t{i:02d}" for i in range(1, 11)]

    def test_run(self, gaz):
        r = run_sts(load_triplets(), BackendSpec("bow"), Anonymizer("remove", gaz))
        assert r.anonymization == "remove" and r.metrics["triplets"] == 10
        assert 0.0 <= r.metrics["auc"] <= 1.0
        assert r.details["triplets"][1]["texts"][0].startswith("quickly ran")

    def test_names_only(self, gaz):
        assert names_only_difference("Mike ran to Belgium.", "Dwayne ran to France.", gaz)
        assert not names_only_difference("Mike ran.", "Mike walked.", gaz)


class TestSumm:
    def test_fixture(self):
        r = run_summ(load_summ(data_path("summ_fixture.jsonl")), BackendSpec("bow"), Anonymizer("none"))
        assert r.metrics["scores"] == 8 and r.metrics["documents"] == 3
        assert -1.0 <= r.metrics["spearman"] <= 1.0

    def test_constant_scores(self):
        s = [SummSample("d", (("same words", 2.0), ("same words", 4.0)), ("other",))]
        with pytest.raises(UndefinedCorrelationError, match="2 pooled scores"):
            run_summ(s, BackendSpec("bow"), Anonymizer("none"))

    def test_relevance_range(self):
        with pytest.raises(ConfigurationError):
            SummSample("d", (("x", 6.0),), ("y",))


class TestHeatmap:
    def test_matrix(self):
        names = ["Mike", "Jelani", "Hiroki"]
        m = export_heatmap("Then CHARACTER_NAME smiled.", names, HASH)
        assert m.shape == (3, 3) and np.array_equal(m, m.T)
        assert np.all(np.diag(m) == 1.0)
        buf = io.StringIO()
        write_heatmap_csv(buf, names, m)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert rows[0] == ["", *names] and float(rows[2][2]) == 1.0

    def test_slot_required(self):
        with pytest.raises(ConfigurationError):
            export_heatmap("no slot", ["a", "b"], HASH)
        with pytest.raises(ConfigurationError):
            export_heatmap("CHARACTER_NAME", ["a"], HASH)


class TestReports:
    def test_json_round_trip(self, gaz, tmp_path):
        r = run_bias(corpus(), PerturbationConfig(k=3), gaz, HASH, metadata={"config": {"k": 3}})
        write_report(r, tmp_path / "r.json")
        back = read_report(tmp_path / "r.json")
        assert back == r
        assert json.loads(back.metadata["config"]) == {"k": 3}

    def test_csv(self, tmp_path):
        reports = [TaskReport("sts", "bow:x", "none", {"auc": 0.5}, {}, {}),
                   TaskReport("sts", "bow:x", "remove", {"auc": 0.75}, {}, {})]
        write_report(reports, tmp_path / "r.csv", "csv")
        rows = list(csv.reader(open(tmp_path / "r.csv", encoding="utf-8")))
        assert rows == [["task", "backend", "anonymization", "auc"],
                        ["sts", "bow:x", "none", "0.5"], ["sts", "bow:x", "remove", "0.75"]]
