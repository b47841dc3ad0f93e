"""Embedding backends: a remote HTTP API plus two deterministic offline backends."""
from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from .errors import ConfigurationError, EmbeddingError

logger = logging.getLogger(__name__)

REMOTE, HASH, BOW = "remote", "hash", "bow"
BACKEND_KINDS = (REMOTE, HASH, BOW)

_LETTER_RUN = re.compile(r"[^\W\d_]+")
_HEADER = np.dtype("<u8")
_VALUES = np.dtype("<f8")


@dataclass(frozen=True)
class BackendSpec:
    kind: str
    model_id: str = ""
    endpoint: str | None = None
    dim: int | None = None
    batch_size: int = 32
    max_in_flight: int = 4
    cache_dir: str | None = None
    vocabulary: tuple[str, ...] | None = None
    max_retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    min_interval: float = 0.0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"unknown backend {self.kind!r}; expected one of {BACKEND_KINDS}")
        if self.kind == REMOTE and not self.endpoint:
            raise ConfigurationError("remote backend requires an endpoint")
        if self.kind == HASH and (self.dim is None or self.dim < 1):
            raise ConfigurationError("hash backend requires dim >= 1")
        if self.kind == BOW and self.vocabulary is not None and not self.vocabulary:
            raise ConfigurationError("bow vocabulary must be non-empty")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise ConfigurationError("batch_size and max_in_flight must be >= 1")

    @property
    def identity(self) -> str:
        """Backend id as recorded in reports and cache keys."""
        if self.kind == HASH:
            return f"hash:{self.model_id or 'sha'}:dim={self.dim}"
        if self.kind == BOW:
            vocab = self.vocabulary or ()
            digest = hashlib.sha256("\n".join(vocab).encode("utf-8")).hexdigest()[:16]
            return f"bow:{self.model_id or 'counts'}:vocab={len(vocab)}-{digest}"
        return f"remote:{self.model_id}"

    def with_vocabulary(self, vocabulary: Iterable[str]) -> "BackendSpec":
        return replace(self, vocabulary=tuple(vocabulary))


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Unit vector expanded from SHAKE-256 of the UTF-8 bytes of ``text``."""
    if dim < 1:
        raise ConfigurationError("dim must be >= 1")
    raw = np.frombuffer(hashlib.shake_256(text.encode("utf-8")).digest(8 * dim), dtype=_HEADER)
    vec = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec = np.ones(dim)
        norm = np.sqrt(dim)
    return vec / norm


def build_vocabulary(texts: Iterable[str]) -> tuple[str, ...]:
    """Sorted case-folded letter-run tokens occurring in ``texts``."""
    return tuple(sorted({t for text in texts for t in _LETTER_RUN.findall(text.casefold())}))


def bow_embed(text: str, vocabulary: Sequence[str]) -> np.ndarray:
    """Case-folded, word-bounded occurrence counts of each vocabulary entry."""
    if not vocabulary:
        raise ConfigurationError("vocabulary must be non-empty")
    folded = text.casefold()
    tokens = Counter(_LETTER_RUN.findall(folded))
    out = np.zeros(len(vocabulary), dtype=np.float64)
    for i, entry in enumerate(vocabulary):
        entry = entry.casefold()
        if _LETTER_RUN.fullmatch(entry):
            out[i] = tokens[entry]
        else:
            pat = r"(?<![^\W\d_])" + re.escape(entry) + r"(?![^\W\d_])"
            out[i] = len(re.findall(pat, folded))
    return out


class VectorCache:
    """Content-addressed, write-once vector files.

    Layout: ``<root>/<2 hex>/<sha256>.vec`` holding a little-endian uint64
    dimension followed by the float64 values.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(spec: BackendSpec, text: str) -> str:
        h = hashlib.sha256()
        for part in (spec.kind, spec.identity, text):
            h.update(part.encode("utf-8"))
            h.update(b"\0")
        return h.hexdigest()

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.vec"

    def get(self, key: str) -> np.ndarray | None:
        p = self.path(key)
        try:
            data = p.read_bytes()
        except FileNotFoundError:
            return None
        dim = int(np.frombuffer(data[:8], dtype=_HEADER)[0])
        values = np.frombuffer(data[8:], dtype=_VALUES)
        if len(values) != dim:
            logger.warning("ignoring truncated cache entry %s", p)
            return None
        return values.astype(np.float64)

    def put(self, key: str, vec: np.ndarray) -> None:
        p = self.path(key)
        if p.exists():
            return
        p.parent.mkdir(parents=True, exist_ok=True)
        payload = np.array([len(vec)], dtype=_HEADER).tobytes() + np.asarray(vec, dtype=_VALUES).tobytes()
        fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise


class _RateLimiter:
    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.min_interval
        if delay > 0:
            time.sleep(delay)


@dataclass
class Embedder:
    """Embeds texts for one backend, with in-memory and optional disk caching.

    ``upstream_calls`` counts HTTP requests actually sent.
    """

    spec: BackendSpec
    session: requests.Session | None = None
    upstream_calls: int = 0
    _memo: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.spec.kind == BOW and self.spec.vocabulary is None:
            raise ConfigurationError("bow backend requires a vocabulary")
        self._cache = VectorCache(self.spec.cache_dir) if self.spec.cache_dir else None
        self._limiter = _RateLimiter(self.spec.min_interval)
        if self.spec.kind == REMOTE and self.session is None:
            self.session = requests.Session()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if isinstance(texts, str) or len(texts) == 0:
            raise EmbeddingError("texts must be a non-empty list of strings")
        empty = [i for i, t in enumerate(texts) if not t]
        if empty:
            raise EmbeddingError("empty text", empty)

        unique = list(dict.fromkeys(texts))
        found: dict[str, np.ndarray] = {}
        missing = []
        for t in unique:
            vec = self._lookup(t)
            if vec is None:
                missing.append(t)
            else:
                found[t] = vec
        if missing:
            fresh = self._compute(missing, texts)
            for t, vec in zip(missing, fresh):
                self._store(t, vec)
                found[t] = vec

        dims = {len(v) for v in found.values()}
        if len(dims) != 1:
            raise EmbeddingError(f"inconsistent embedding dimensions {sorted(dims)}")
        return [found[t].copy() for t in texts]

    def _lookup(self, text: str) -> np.ndarray | None:
        with self._lock:
            vec = self._memo.get(text)
        if vec is None and self._cache is not None:
            vec = self._cache.get(VectorCache.key(self.spec, text))
            if vec is not None:
                with self._lock:
                    self._memo[text] = vec
        return vec

    def _store(self, text: str, vec: np.ndarray) -> None:
        with self._lock:
            self._memo[text] = vec
        if self._cache is not None:
            self._cache.put(VectorCache.key(self.spec, text), vec)

    def _compute(self, texts: list[str], original: Sequence[str]) -> list[np.ndarray]:
        if self.spec.kind == HASH:
            return [hash_embed(t, self.spec.dim) for t in texts]
        if self.spec.kind == BOW:
            return [bow_embed(t, self.spec.vocabulary) for t in texts]

        size = self.spec.batch_size
        batches = [texts[i:i + size] for i in range(0, len(texts), size)]
        workers = min(self.spec.max_in_flight, len(batches))
        try:
            if workers == 1:
                results = [self._post(b) for b in batches]
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(self._post, batches))
        except _BatchFailed as exc:
            failed = set(exc.texts)
            raise EmbeddingError(str(exc), [i for i, t in enumerate(original) if t in failed]) from None
        return [vec for batch in results for vec in batch]

    def _post(self, batch: list[str]) -> list[np.ndarray]:
        spec = self.spec
        headers = {"Content-Type": "application/json"}
        token = os.environ.get("EMBED_API_KEY")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last = "no attempt made"
        for attempt in range(spec.max_retries + 1):
            if attempt:
                time.sleep(spec.backoff * 2 ** (attempt - 1))
            self._limiter.wait()
            with self._lock:
                self.upstream_calls += 1
            try:
                resp = self.session.post(spec.endpoint, json={"model": spec.model_id, "input": batch},
                                         headers=headers, timeout=spec.timeout)
            except requests.RequestException as exc:
                last = f"transport error: {exc}"
                logger.warning("embedding request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
                logger.warning("embedding request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise _BatchFailed(f"HTTP {resp.status_code}: {resp.text[:200]}", batch)
            return _parse_embeddings(resp, batch)
        raise _BatchFailed(f"embedding request failed after {spec.max_retries} retries ({last})", batch)


class _BatchFailed(Exception):
    def __init__(self, message, texts):
        super().__init__(message)
        self.texts = texts


def _parse_embeddings(resp, batch) -> list[np.ndarray]:
    try:
        rows = resp.json()["embeddings"]
        vecs = [np.asarray(r, dtype=np.float64) for r in rows]
    except (ValueError, KeyError, TypeError) as exc:
        raise _BatchFailed(f"malformed embedding response: {exc}", batch) from None
    if len(vecs) != len(batch):
        raise _BatchFailed(f"expected {len(batch)} embeddings, got {len(vecs)}", batch)
    for v in vecs:
        if v.ndim != 1 or len(v) == 0 or not np.all(np.isfinite(v)):
            raise _BatchFailed("embedding response contains an invalid vector", batch)
    return vecs


def embed_batch(spec: BackendSpec, texts: Sequence[str]) -> list[np.ndarray]:
    """One-shot convenience wrapper around :class:`Embedder`."""
    return Embedder(spec).embed(texts)
