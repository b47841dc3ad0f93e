"""Inference-time anonymization: remove names or swap them for placeholders."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import requests

from .errors import AnonymizationError, ConfigurationError
from .gazetteer import (
    ALL_KINDS,
    EntityKind,
    EntityMention,
    Gazetteer,
    data_path,
    find_mentions,
    possessive_length,
)

logger = logging.getLogger(__name__)

PROMPT_IDS = ("remove_all", "remove_person_only", "replace_ids")
STRATEGIES = ("none", "remove", "replace", "llm")

_PREFIX = {
    EntityKind.PERSON: "CHAR",
    EntityKind.COUNTRY: "LOC",
    EntityKind.CITY_OR_REGION: "LOC",
    EntityKind.ORGANIZATION: "ORG",
}
_HSPACE = " \t"
_CLOSING = ".,;:!?)]}"


def anonymize_remove(text: str, mentions: Sequence[EntityMention]) -> str:
    """Delete every mention (and an attached possessive).

    Whitespace left doubled by a deletion collapses to one space. None is kept
    before closing punctuation or at the start or end of a line.
    Text away from the deletion sites is untouched.
    """
    out = ""
    pos = 0
    for m in mentions:
        out += text[pos:m.start]
        pos = m.end + possessive_length(text, m.end)
        rest = text[pos:]
        skip = len(rest) - len(rest.lstrip(_HSPACE))
        core = out.rstrip(_HSPACE)
        line_start = not core or core.endswith("\n")
        line_end = skip == len(rest) or rest[skip] == "\n"
        if line_start or line_end:
            out = core
            pos += skip
        elif rest[skip] in _CLOSING:
            # "in France." -> "in." rather than "in ."
            out = core
            pos += skip
        elif out[-1:] in (" ", "\t") and skip:
            pos += skip
    return out + text[pos:]


def placeholder_suffix(index: int) -> str:
    """0 -> A, 25 -> Z, 26 -> AA, 27 -> AB, ..."""
    if index < 0:
        raise ValueError("index must be non-negative")
    letters = []
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        letters.append(chr(ord("A") + rem))
    return "".join(reversed(letters))


def placeholder_map(mentions: Iterable[EntityMention]) -> dict[tuple[EntityKind, str], str]:
    counters: dict[str, int] = {}
    labels: dict[tuple[EntityKind, str], str] = {}
    for m in mentions:
        key = (m.kind, m.canonical_key)
        if key in labels:
            continue
        prefix = _PREFIX[m.kind]
        n = counters.get(prefix, 0)
        counters[prefix] = n + 1
        labels[key] = f"{prefix}_{placeholder_suffix(n)}"
    return labels


def anonymize_replace(text: str, mentions: Sequence[EntityMention]) -> str:
    """Replace each distinct name by CHAR_x / LOC_x / ORG_x in order of first appearance."""
    labels = placeholder_map(mentions)
    pieces, pos = [], 0
    for m in mentions:
        pieces.append(text[pos:m.start])
        pieces.append(labels[(m.kind, m.canonical_key)])
        pos = m.end
    pieces.append(text[pos:])
    return "".join(pieces)


def load_prompt(prompt_id: str) -> str:
    if prompt_id not in PROMPT_IDS:
        raise ConfigurationError(f"unknown prompt id {prompt_id!r}; expected one of {PROMPT_IDS}")
    return data_path("prompts", f"{prompt_id}.txt").read_text(encoding="utf-8").rstrip("\n")


def build_prompt(prompt_id: str, text: str) -> str:
    return load_prompt(prompt_id) + "\n" + text


class TextGenerationClient(Protocol):
    def generate(self, prompt: str) -> str: ...


class HttpTextGenerationClient:
    """POSTs ``{"prompt": ...}`` and expects ``{"text": ...}`` back.

    The bearer token comes from ANON_API_KEY when set.
    """

    def __init__(self, endpoint: str, max_retries: int = 3, backoff: float = 0.5,
                 timeout: float = 60.0, session: requests.Session | None = None):
        if not endpoint:
            raise ConfigurationError("an anonymization endpoint is required for the llm strategy")
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def generate(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get("ANON_API_KEY")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.endpoint, json={"prompt": prompt},
                                         headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = f"transport error: {exc}"
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise AnonymizationError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["text"]
            except (ValueError, KeyError, TypeError) as exc:
                raise AnonymizationError(f"malformed response: {exc}") from exc
        raise AnonymizationError(f"giving up after {self.max_retries} retries ({last})")


def remote_anonymize(text: str, prompt_id: str, client: TextGenerationClient,
                     sample_id: str | None = None) -> str:
    prompt = build_prompt(prompt_id, text)
    try:
        out = client.generate(prompt)
    except AnonymizationError as exc:
        raise AnonymizationError(str(exc), sample_id) from exc
    logger.info("remote anonymization [%s] input=%r output=%r", sample_id, text, out)
    if not out or not out.strip():
        raise AnonymizationError("empty response from anonymizer", sample_id)
    return out


@dataclass
class Anonymizer:
    """Applies one anonymization strategy to raw texts."""

    strategy: str
    gazetteer: Gazetteer | None = None
    kinds: frozenset = ALL_KINDS
    prompt_id: str = "remove_all"
    client: TextGenerationClient | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy in ("remove", "replace") and self.gazetteer is None:
            raise ConfigurationError(f"strategy {self.strategy!r} needs a gazetteer")
        if self.strategy == "llm" and self.client is None:
            raise ConfigurationError("strategy 'llm' needs a text-generation client")

    def __call__(self, text: str, sample_id: str | None = None) -> str:
        if self.strategy == "none":
            return text
        if self.strategy == "llm":
            return remote_anonymize(text, self.prompt_id, self.client, sample_id)
        mentions = find_mentions(text, self.gazetteer, self.kinds)
        if self.strategy == "remove":
            return anonymize_remove(text, mentions)
        return anonymize_replace(text, mentions)
