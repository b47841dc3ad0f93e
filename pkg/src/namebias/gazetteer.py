"""Name lexicons and deterministic mention detection."""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

# A word boundary is a letter/non-letter transition; [^\W\d_] is "any letter".
_NOT_AFTER_LETTER = r"(?<![^\W\d_])"
_NOT_BEFORE_LETTER = r"(?![^\W\d_])"
_POSSESSIVE = re.compile(r"['’]s" + _NOT_BEFORE_LETTER)


class EntityKind(str, enum.Enum):
    PERSON = "person"
    COUNTRY = "country"
    CITY_OR_REGION = "city_or_region"
    ORGANIZATION = "organization"


ALL_KINDS = frozenset(EntityKind)
PERTURBABLE_KINDS = frozenset({EntityKind.PERSON, EntityKind.COUNTRY})

# Earlier kinds win when one surface form appears in several pools.
_PRECEDENCE = (
    EntityKind.PERSON,
    EntityKind.COUNTRY,
    EntityKind.CITY_OR_REGION,
    EntityKind.ORGANIZATION,
)


@dataclass(frozen=True)
class EntityMention:
    kind: EntityKind
    surface: str
    start: int
    end: int
    canonical_key: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Gazetteer:
    """Immutable name pools.

    Pools are tuples in file order so that seeded sampling is reproducible;
    membership tests go through :meth:`pool_set`.
    """

    person_names: tuple[str, ...]
    country_names: tuple[str, ...]
    per_country_person_names: dict[str, tuple[str, ...]] = field(default_factory=dict)
    city_region_names: tuple[str, ...] = ()
    organization_names: tuple[str, ...] = ()
    _patterns: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)
    _sets: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def pool(self, kind: EntityKind) -> tuple[str, ...]:
        return {
            EntityKind.PERSON: self.person_names,
            EntityKind.COUNTRY: self.country_names,
            EntityKind.CITY_OR_REGION: self.city_region_names,
            EntityKind.ORGANIZATION: self.organization_names,
        }[kind]

    def pool_set(self, kind: EntityKind) -> frozenset[str]:
        if kind not in self._sets:
            self._sets[kind] = frozenset(self.pool(kind))
        return self._sets[kind]

    def kind_of(self, surface: str) -> EntityKind | None:
        for kind in _PRECEDENCE:
            if surface in self.pool_set(kind):
                return kind
        return None

    def with_extra_names(self, kind: EntityKind, names: Iterable[str]) -> "Gazetteer":
        """Return a copy whose ``kind`` pool also contains ``names``."""
        merged = _dedup(list(self.pool(kind)) + list(names))
        attr = {
            EntityKind.PERSON: "person_names",
            EntityKind.COUNTRY: "country_names",
            EntityKind.CITY_OR_REGION: "city_region_names",
            EntityKind.ORGANIZATION: "organization_names",
        }[kind]
        kwargs = {
            "person_names": self.person_names,
            "country_names": self.country_names,
            "per_country_person_names": self.per_country_person_names,
            "city_region_names": self.city_region_names,
            "organization_names": self.organization_names,
        }
        kwargs[attr] = merged
        return Gazetteer(**kwargs)

    def _pattern(self, kinds: frozenset[EntityKind]) -> re.Pattern | None:
        if kinds not in self._patterns:
            entries = {name for kind in kinds for name in self.pool(kind)}
            self._patterns[kinds] = compile_lexicon(entries) if entries else None
        return self._patterns[kinds]


def compile_lexicon(entries: Iterable[str]) -> re.Pattern:
    """Compile entries into one word-bounded, longest-first alternation."""
    ordered = sorted(set(entries), key=lambda s: (-len(s), s))
    body = "|".join(re.escape(e) for e in ordered)
    return re.compile(_NOT_AFTER_LETTER + "(?:" + body + ")" + _NOT_BEFORE_LETTER)


def possessive_length(text: str, end: int) -> int:
    """Length of a possessive marker ("'s" or "’s") starting at ``end``, else 0."""
    m = _POSSESSIVE.match(text, end)
    return m.end() - end if m else 0


def find_mentions(
    text: str, gazetteer: Gazetteer, kinds: Iterable[EntityKind] = PERTURBABLE_KINDS
) -> list[EntityMention]:
    """Return all non-overlapping, case-sensitive pool matches in ``text``.

    The scan is left to right and the longest entry wins at each position.
    A trailing possessive is left outside the span.
    """
    kinds = frozenset(kinds)
    pattern = gazetteer._pattern(kinds)
    if pattern is None:
        return []
    mentions = []
    for m in pattern.finditer(text):
        surface = m.group(0)
        kind = gazetteer.kind_of(surface)
        if kind not in kinds:
            # surface resolved to a higher-precedence kind that was not requested
            continue
        mentions.append(EntityMention(kind, surface, m.start(), m.end(), surface))
    return mentions


def distinct_keys(mentions: Iterable[EntityMention], kind: EntityKind) -> list[str]:
    seen: dict[str, None] = {}
    for m in mentions:
        if m.kind == kind:
            seen.setdefault(m.canonical_key, None)
    return list(seen)


def read_name_list(path: str | Path) -> tuple[str, ...]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"name list not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    names = _dedup(s.strip() for s in lines if s.strip() and not s.lstrip().startswith("#"))
    if not names:
        raise ConfigurationError(f"name list is empty: {path}")
    return names


def _dedup(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


def load_gazetteer(
    person_list_path: str | Path,
    country_list_path: str | Path,
    per_country_dir: str | Path | None = None,
    city_list_path: str | Path | None = None,
    organization_list_path: str | Path | None = None,
) -> Gazetteer:
    persons = read_name_list(person_list_path)
    countries = read_name_list(country_list_path)
    cities = read_name_list(city_list_path) if city_list_path else ()
    orgs = read_name_list(organization_list_path) if organization_list_path else ()

    pools = {
        EntityKind.PERSON: persons,
        EntityKind.COUNTRY: countries,
        EntityKind.CITY_OR_REGION: cities,
        EntityKind.ORGANIZATION: orgs,
    }
    claimed: set[str] = set()
    for kind in _PRECEDENCE:
        clash = [n for n in pools[kind] if n in claimed]
        if clash:
            logger.warning("dropping %d %s entries already claimed by another pool: %s",
                           len(clash), kind.value, ", ".join(clash))
            pools[kind] = tuple(n for n in pools[kind] if n not in claimed)
            if not pools[kind]:
                raise ConfigurationError(f"{kind.value} pool is empty after conflict resolution")
        claimed.update(pools[kind])

    per_country: dict[str, tuple[str, ...]] = {}
    if per_country_dir is not None:
        d = Path(per_country_dir)
        if not d.is_dir():
            raise ConfigurationError(f"per-country directory not found: {d}")
        for f in sorted(d.glob("*.txt")):
            per_country[f.stem] = read_name_list(f)

    gaz = Gazetteer(
        person_names=pools[EntityKind.PERSON],
        country_names=pools[EntityKind.COUNTRY],
        per_country_person_names=per_country,
        city_region_names=pools[EntityKind.CITY_OR_REGION],
        organization_names=pools[EntityKind.ORGANIZATION],
    )
    logger.info(
        "gazetteer loaded: %d persons, %d countries, %d cities/regions, %d organizations, "
        "%d per-country pools",
        len(gaz.person_names), len(gaz.country_names), len(gaz.city_region_names),
        len(gaz.organization_names), len(per_country),
    )
    return gaz


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("namebias").joinpath("data", *parts)))


def default_gazetteer() -> Gazetteer:
    """Gazetteer built from the bundled name lists."""
    return load_gazetteer(
        data_path("person_names.txt"),
        data_path("country_names.txt"),
        per_country_dir=data_path("per_country"),
        city_list_path=data_path("city_region_names.txt"),
        organization_list_path=data_path("organization_names.txt"),
    )
