"""Plot-summary corpora and sample-selection filters."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import CorpusError
from .gazetteer import EntityKind, Gazetteer, compile_lexicon, find_mentions

logger = logging.getLogger(__name__)

FORMATS = ("tsv", "jsonl", "plain-dir")


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class TextSample:
    id: str
    text: str
    word_count: int

    @classmethod
    def from_text(cls, id: str, text: str) -> "TextSample":
        if not text.strip():
            raise CorpusError(f"sample {id!r} has empty text")
        return cls(id, text, word_count(text))


@dataclass(frozen=True)
class Corpus:
    samples: tuple[TextSample, ...]
    source_name: str = "<memory>"

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise CorpusError(f"duplicate sample ids in {self.source_name}")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def _keep(self, samples: Iterable[TextSample]) -> "Corpus":
        return Corpus(tuple(samples), self.source_name)


def load_corpus(path: str | Path, format: str = "tsv") -> Corpus:
    """Load one sample per record.

    tsv: ``id<TAB>text`` per line. jsonl: objects with ``id`` and ``text``.
    plain-dir: one ``.txt`` file per sample, id taken from the file stem.
    Records without an id get ``row-<n>``; malformed records are skipped.
    """
    path = Path(path)
    if format not in FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise CorpusError(f"corpus not found: {path}")

    if format == "plain-dir":
        if not path.is_dir():
            raise CorpusError(f"plain-dir corpus must be a directory: {path}")
        records = [(f.stem, f.read_text(encoding="utf-8")) for f in sorted(path.glob("*.txt"))]
    else:
        records = []
        lines = path.read_text(encoding="utf-8").splitlines()
        for n, line in enumerate(lines, 1):
            if not line.strip():
                continue
            if format == "tsv":
                parts = line.split("\t", 1)
                if len(parts) == 1:
                    records.append((None, parts[0]))
                else:
                    records.append((parts[0].strip() or None, parts[1]))
            else:
                try:
                    obj = json.loads(line)
                    text = obj["text"]
                    if not isinstance(text, str):
                        raise TypeError("text is not a string")
                except (ValueError, KeyError, TypeError) as exc:
                    logger.warning("%s:%d: skipping malformed record (%s)", path, n, exc)
                    records.append(("", None))
                    continue
                rid = obj.get("id")
                records.append((str(rid) if rid is not None else None, text))

    samples, seen = [], set()
    for n, (rid, text) in enumerate(records, 1):
        if text is None:
            continue
        rid = rid or f"row-{n}"
        if not text.strip():
            logger.warning("%s: skipping record %s with empty text", path, rid)
            continue
        if rid in seen:
            logger.warning("%s: skipping duplicate id %s", path, rid)
            continue
        seen.add(rid)
        samples.append(TextSample.from_text(rid, text.strip("\n")))
    if not samples:
        raise CorpusError(f"{path}: no usable records")
    logger.info("loaded %d samples from %s", len(samples), path)
    return Corpus(tuple(samples), path.name)


def filter_word_count(corpus: Corpus, max_words: int = 250) -> Corpus:
    """Keep samples with strictly fewer than ``max_words`` words."""
    if max_words <= 0:
        raise ValueError("max_words must be positive")
    return corpus._keep(s for s in corpus if s.word_count < max_words)


def filter_entity_profile(
    corpus: Corpus,
    gazetteer: Gazetteer,
    require_person: bool = True,
    require_country: bool = True,
    exclusion_lexicon: Iterable[str] = (),
) -> Corpus:
    lexicon = {e.strip() for e in exclusion_lexicon if e.strip()}
    excluded = compile_lexicon(lexicon) if lexicon else None
    kinds = {EntityKind.PERSON, EntityKind.COUNTRY}

    def keep(sample: TextSample) -> bool:
        if excluded is not None and excluded.search(sample.text):
            return False
        found = {m.kind for m in find_mentions(sample.text, gazetteer, kinds)}
        if require_person and EntityKind.PERSON not in found:
            return False
        if require_country and EntityKind.COUNTRY not in found:
            return False
        return True

    return corpus._keep(s for s in corpus if keep(s))


def load_lexicon(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [s.strip() for s in lines if s.strip() and not s.lstrip().startswith("#")]
