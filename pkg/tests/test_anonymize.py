import json

import pytest

from namebias.anonymize import (
    Anonymizer,
    HttpTextGenerationClient,
    anonymize_remove,
    anonymize_replace,
    build_prompt,
    load_prompt,
    placeholder_suffix,
    remote_anonymize,
)
from namebias.errors import AnonymizationError, ConfigurationError
from namebias.gazetteer import ALL_KINDS, EntityKind, data_path, find_mentions


def remove(text, gaz, kinds=ALL_KINDS):
    return anonymize_remove(text, find_mentions(text, gaz, kinds))


def replace(text, gaz):
    return anonymize_replace(text, find_mentions(text, gaz, ALL_KINDS))


def triplets():
    return [json.loads(l) for l in data_path("triplets.jsonl").read_text(encoding="utf-8").splitlines()]


class TestRemove:
    def test_line_start(self, gaz):
        text = "Alejandro quickly ran to the store to buy a cold drink. He was eager to have a glass of cold drink."
        assert remove(text, gaz) == "quickly ran to the store to buy a cold drink. He was eager to have a glass of cold drink."

    def test_two_names(self, gaz):
        text = "Ganga and Yamuna are two mighty rivers. They are lifelines for millions of people in the region."
        assert remove(text, gaz) == "and are two mighty rivers. They are lifelines for millions of people in the region."

    def test_mid_sentence_and_possessive(self, gaz):
        assert remove("captured Nikolai's heart", gaz) == "captured heart"
        assert remove("from market in France.", gaz) == "from market in."

    def test_line_end_and_newlines(self, gaz):
        assert remove("Hello Mike\nMike said hi", gaz) == "Hello\nsaid hi"

    def test_untouched_elsewhere(self, gaz):
        text = "a  b   c"
        assert remove(text, gaz) == text

    def test_person_only(self, gaz):
        text = "Mike lives in Belgium."
        assert remove(text, gaz, {EntityKind.PERSON}) == "lives in Belgium."


class TestReplace:
    def test_labels(self, gaz):
        text = "Ganga and Yamuna flow. Ganga is holy. Mike works at Google in India."
        assert replace(text, gaz) == "CHAR_A and CHAR_B flow. CHAR_A is holy. CHAR_C works at ORG_A in LOC_A."

    def test_suffixes(self):
        assert [placeholder_suffix(i) for i in (0, 1, 25, 26, 27, 51, 52, 701, 702)] == \
            ["A", "B", "Z", "AA", "AB", "AZ", "BA", "ZZ", "AAA"]

    def test_no_gazetteer_forms_left(self, gaz):
        for row in triplets():
            for key in ("query", "positive", "negative"):
                assert find_mentions(replace(row[key], gaz), gaz, ALL_KINDS) == []


class EchoClient:
    def __init__(self, reply=None):
        self.prompts = []
        self.reply = reply

    def generate(self, prompt):
        self.prompts.append(prompt)
        return self.reply if self.reply is not None else prompt.split("::::\n", 1)[1]


class TestLlm:
    def test_prompt_contains_template(self):
        client = EchoClient()
        assert remote_anonymize("Mike ran.", "remove_all", client) == "Mike ran."
        assert client.prompts[0] == load_prompt("remove_all") + "\nMike ran."
        assert "CHAR_A" in load_prompt("replace_ids")

    def test_empty_response(self):
        with pytest.raises(AnonymizationError) as info:
            remote_anonymize("Mike ran.", "remove_all", EchoClient("  "), sample_id="s3")
        assert info.value.sample_id == "s3"

    def test_unknown_prompt(self):
        with pytest.raises(ConfigurationError):
            build_prompt("shout", "x")

    def test_http_client(self, stub_server, monkeypatch):
        monkeypatch.setenv("ANON_API_KEY", "tok")
        client = HttpTextGenerationClient(stub_server.url, backoff=0.01)
        stub_server.state["fail_next"] = 1
        out = Anonymizer("llm", client=client, prompt_id="replace_ids")("Mike ran.")
        assert out == "Mike ran."
        req = stub_server.state["requests"][-1]
        assert req["body"]["prompt"].startswith(load_prompt("replace_ids"))
        assert req["auth"] == "Bearer tok"

    def test_http_client_gives_up(self, stub_server):
        stub_server.state["fail_next"] = 10
        client = HttpTextGenerationClient(stub_server.url, max_retries=2, backoff=0.01)
        with pytest.raises(AnonymizationError):
            client.generate("x")
        assert stub_server.state["calls"] == 3


class TestAnonymizer:
    def test_strategies(self, gaz):
        assert Anonymizer("none")("Mike ran.") == "Mike ran."
        assert Anonymizer("remove", gaz)("Mike ran.") == "ran."
        assert Anonymizer("replace", gaz)("Mike ran.") == "CHAR_A ran."

    def test_bad_config(self, gaz):
        with pytest.raises(ConfigurationError):
            Anonymizer("scramble", gaz)
        with pytest.raises(ConfigurationError):
            Anonymizer("remove")
        with pytest.raises(ConfigurationError):
            Anonymizer("llm")
