"""Name perturbation: K variants of a text with person/country names swapped."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import TextSample
from .errors import ConfigurationError, PoolExhaustedError
from .gazetteer import (
    PERTURBABLE_KINDS,
    EntityKind,
    EntityMention,
    Gazetteer,
    distinct_keys,
    find_mentions,
)

MODES = ("person-and-country", "person-only", "person-only-same-country")


@dataclass(frozen=True)
class PerturbationMode:
    name: str = "person-and-country"
    country: str | None = None

    def __post_init__(self):
        if self.name not in MODES:
            raise ConfigurationError(f"unknown perturbation mode {self.name!r}; expected one of {MODES}")
        if (self.name == "person-only-same-country") != (self.country is not None):
            raise ConfigurationError("a country is required for, and only for, person-only-same-country")

    @property
    def perturbs_countries(self) -> bool:
        return self.name == "person-and-country"

    def __str__(self):
        return f"{self.name}:{self.country}" if self.country else self.name


PERSON_AND_COUNTRY = PerturbationMode("person-and-country")
PERSON_ONLY = PerturbationMode("person-only")


def same_country(country: str) -> PerturbationMode:
    return PerturbationMode("person-only-same-country", country)


@dataclass(frozen=True)
class PerturbationConfig:
    k: int = 20
    mode: PerturbationMode = PERSON_AND_COUNTRY
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"K must be at least 2, got {self.k}")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class NameMapping:
    person_map: dict[str, str] = field(default_factory=dict)
    country_map: dict[str, str] = field(default_factory=dict)

    def for_kind(self, kind: EntityKind) -> dict[str, str]:
        if kind == EntityKind.PERSON:
            return self.person_map
        if kind == EntityKind.COUNTRY:
            return self.country_map
        return {}


@dataclass(frozen=True)
class Variant:
    text: str
    mapping: NameMapping


@dataclass(frozen=True)
class PerturbationSet:
    sample_id: str
    variants: tuple[Variant, ...]

    def to_records(self) -> list[dict]:
        return [
            {
                "sample_id": self.sample_id,
                "variant_index": i,
                "text": v.text,
                "person_map": v.mapping.person_map,
                "country_map": v.mapping.country_map,
            }
            for i, v in enumerate(self.variants)
        ]


def _replacement_pool(gazetteer: Gazetteer, kind: EntityKind, mode: PerturbationMode) -> tuple[str, ...]:
    if kind == EntityKind.PERSON and mode.country is not None:
        try:
            return gazetteer.per_country_person_names[mode.country]
        except KeyError:
            raise ConfigurationError(
                f"no per-country person pool for {mode.country!r}; "
                f"available: {sorted(gazetteer.per_country_person_names)}"
            ) from None
    return gazetteer.pool(kind)


def _draw_mapping(keys, pool, forbidden, rng, kind, sample_id):
    # Sequential draws without replacement; names already in the text are
    # never used so two characters cannot collapse into one.
    candidates = [p for p in pool if p not in forbidden]
    if len(candidates) < len(keys):
        raise PoolExhaustedError(kind.value, sample_id, len(keys), len(candidates))
    mapping = {}
    for key in keys:
        idx = int(rng.integers(len(candidates)))
        mapping[key] = candidates.pop(idx)
    return mapping


def perturb_once(
    text: str,
    mentions: Sequence[EntityMention],
    pools: Gazetteer,
    mode: PerturbationMode,
    rng: np.random.Generator,
    sample_id: str = "<text>",
) -> tuple[str, NameMapping]:
    present = {m.canonical_key for m in mentions}
    maps = {}
    for kind in (EntityKind.PERSON, EntityKind.COUNTRY):
        perturbed = kind == EntityKind.PERSON or mode.perturbs_countries
        keys = distinct_keys(mentions, kind) if perturbed else []
        if not keys:
            maps[kind] = {}
            continue
        pool = _replacement_pool(pools, kind, mode)
        maps[kind] = _draw_mapping(keys, pool, present, rng, kind, sample_id)

    pieces, pos = [], 0
    for m in mentions:
        repl = maps.get(m.kind, {}).get(m.canonical_key)
        if repl is None:
            continue
        pieces.append(text[pos:m.start])
        pieces.append(repl)
        pos = m.end
    pieces.append(text[pos:])
    return "".join(pieces), NameMapping(maps[EntityKind.PERSON], maps[EntityKind.COUNTRY])


def child_rng(seed: int, sample_id: str, index: int) -> np.random.Generator:
    """Generator for one variant, derived only from (seed, sample id, index)."""
    id_digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    id_words = [int.from_bytes(id_digest[i:i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, *id_words, index])
    return np.random.Generator(np.random.PCG64(ss))


def generate_perturbations(
    sample: TextSample, config: PerturbationConfig, gazetteer: Gazetteer
) -> PerturbationSet:
    if config.mode.country is not None:
        _replacement_pool(gazetteer, EntityKind.PERSON, config.mode)
    mentions = find_mentions(sample.text, gazetteer, PERTURBABLE_KINDS)
    variants = []
    for i in range(config.k):
        text, mapping = perturb_once(
            sample.text, mentions, gazetteer, config.mode,
            child_rng(config.seed, sample.id, i), sample_id=sample.id,
        )
        variants.append(Variant(text, mapping))
    return PerturbationSet(sample.id, tuple(variants))


def write_perturbations(sets: Iterable[PerturbationSet], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ps in sets:
            for rec in ps.to_records():
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
                n += 1
    return n


def read_perturbations(path: str | Path) -> list[PerturbationSet]:
    grouped: dict[str, list] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        grouped.setdefault(rec["sample_id"], []).append(rec)
    out = []
    for sid, recs in grouped.items():
        recs.sort(key=lambda r: r["variant_index"])
        out.append(PerturbationSet(sid, tuple(
            Variant(r["text"], NameMapping(r["person_map"], r["country_map"])) for r in recs
        )))
    return out
