import time

import numpy as np
import pytest

from conftest import stub_vector
from namebias.embed import (
    BackendSpec,
    Embedder,
    VectorCache,
    bow_embed,
    build_vocabulary,
    embed_batch,
    hash_embed,
)
from namebias.errors import ConfigurationError, EmbeddingError


def remote(url, **kw):
    kw.setdefault("backoff", 0.01)
    return BackendSpec("remote", model_id="stub", endpoint=url, **kw)


class TestOffline:
    def test_hash_deterministic_unit(self):
        a = hash_embed("hello", 64)
        assert np.array_equal(a, hash_embed("hello", 64))
        assert np.linalg.norm(a) == pytest.approx(1.0)
        assert not np.array_equal(a, hash_embed("hello!", 64))

    def test_bow(self):
        vocab = build_vocabulary(["Alpha beta, alpha!", "gamma"])
        assert vocab == ("alpha", "beta", "gamma")
        assert list(bow_embed("ALPHA alpha gamma 42", vocab)) == [2.0, 0.0, 1.0]

    def test_bow_multiword_entry(self):
        assert list(bow_embed("New York and new york", ("new york", "york"))) == [2.0, 2.0]

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            BackendSpec("remote")
        with pytest.raises(ConfigurationError):
            BackendSpec("hash")
        with pytest.raises(ConfigurationError):
            BackendSpec("magic")
        with pytest.raises(ConfigurationError):
            Embedder(BackendSpec("bow"))

    def test_identity_includes_dim(self):
        assert BackendSpec("hash", dim=8).identity != BackendSpec("hash", dim=16).identity

    def test_empty_inputs(self):
        e = Embedder(BackendSpec("hash", dim=4))
        with pytest.raises(EmbeddingError):
            e.embed([])
        with pytest.raises(EmbeddingError) as info:
            e.embed(["a", "", "b"])
        assert info.value.indices == [1]


class TestCache:
    def test_round_trip(self, tmp_path):
        cache = VectorCache(tmp_path)
        spec = BackendSpec("hash", dim=3)
        key = cache.key(spec, "x")
        vec = np.array([0.1, -2.5, 1e-300])
        cache.put(key, vec)
        assert np.array_equal(cache.get(key), vec)
        raw = cache.path(key).read_bytes()
        assert raw[:8] == (3).to_bytes(8, "little") and len(raw) == 32
        assert cache.path(key).parent.name == key[:2]

    def test_write_once(self, tmp_path):
        cache = VectorCache(tmp_path)
        cache.put("ab" * 32, np.ones(2))
        cache.put("ab" * 32, np.zeros(2))
        assert np.array_equal(cache.get("ab" * 32), np.ones(2))

    def test_missing(self, tmp_path):
        assert VectorCache(tmp_path).get("cd" * 32) is None


class TestRemote:
    def test_batching_and_order(self, stub_server):
        texts = [f"text {i}" for i in range(10)] + ["text 3"]
        e = Embedder(remote(stub_server.url, batch_size=3, max_in_flight=2))
        vecs = e.embed(texts)
        assert [list(v) for v in vecs] == [stub_vector(t) for t in texts]
        assert stub_server.state["calls"] == 4  # 10 unique texts in batches of 3
        assert all(len(r["body"]["input"]) <= 3 for r in stub_server.state["requests"])
        assert stub_server.state["requests"][0]["body"]["model"] == "stub"

    def test_warm_cache_no_calls(self, stub_server, tmp_path):
        spec = remote(stub_server.url, cache_dir=str(tmp_path))
        first = Embedder(spec).embed(["a", "b"])
        calls = stub_server.state["calls"]
        fresh = Embedder(spec)
        second = fresh.embed(["b", "a"])
        assert stub_server.state["calls"] == calls and fresh.upstream_calls == 0
        assert np.array_equal(first[0], second[1])

    def test_retry_then_success(self, stub_server, monkeypatch):
        monkeypatch.setenv("EMBED_API_KEY", "secret")
        stub_server.state["fail_next"] = 1
        vecs = Embedder(remote(stub_server.url)).embed(["x"])
        assert list(vecs[0]) == stub_vector("x")
        assert stub_server.state["calls"] == 2
        assert stub_server.state["requests"][-1]["auth"] == "Bearer secret"

    def test_gives_up(self, stub_server):
        stub_server.state["fail_next"] = 100
        start = time.monotonic()
        with pytest.raises(EmbeddingError) as info:
            Embedder(remote(stub_server.url, max_retries=2)).embed(["x", "y", "x"])
        assert time.monotonic() - start < 5
        assert stub_server.state["calls"] == 3
        assert info.value.indices == [0, 1, 2]

    def test_dimension_mismatch(self, stub_server, tmp_path):
        spec = remote(stub_server.url, cache_dir=str(tmp_path))
        Embedder(spec).embed(["a"])
        stub_server.state["dim"] = 6
        with pytest.raises(EmbeddingError, match="dimension"):
            Embedder(spec).embed(["a", "b"])

    def test_unreachable(self):
        spec = BackendSpec("remote", endpoint="http://127.0.0.1:9/none", max_retries=1, backoff=0.01, timeout=1)
        with pytest.raises(EmbeddingError):
            embed_batch(spec, ["x"])
