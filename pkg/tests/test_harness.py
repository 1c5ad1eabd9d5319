from __future__ import annotations

import pytest

from ethicseval.corpus import (
    SECTION_ORDER,
    DilemmaCase,
    ReferenceSet,
    SectionKind,
    Source,
    render_sectioned_text,
)
from ethicseval.harness import (
    PROMPT_SHA256,
    ChatClient,
    LengthBoundWarning,
    ParseFailure,
    PromptTemplate,
    ReplayCache,
    ReplayClient,
    ReplayMiss,
    TemplateId,
    TemplateTampered,
    UnboundPlaceholder,
    generate_batch,
    generate_llm_answer,
    load_template,
    preprocess_expert,
    preprocess_human,
    prompt_key,
    render_prompt,
)

CASE = DilemmaCase(
    "case_x",
    "A test dilemma",
    "A researcher wonders whether to report a colleague's data trimming.",
    "Misconduct",
    Source.GEORGIA_CTSA,
)

FIVE_SECTION_REPLY = render_sectioned_text(
    {kind: f"reply body for {kind.name.lower()}" for kind in SECTION_ORDER}
)


class FakeClient(ChatClient):
    """Returns a canned reply and records every prompt it sees."""

    def __init__(self, client_id: str, reply: str):
        self.id = client_id
        self.reply = reply
        self.prompts: list[tuple[str, str]] = []

    def complete(self, system, user, params=None):
        self.prompts.append((system, user))
        return self.reply


# ---------------------------------------------------------------- templates


def test_load_all_templates_hash_checked():
    for template_id in TemplateId:
        template = load_template(template_id)
        assert template.system and template.user


def test_tampered_template_detected(monkeypatch):
    monkeypatch.setitem(PROMPT_SHA256, "llm_generate.user.txt", "0" * 64)
    with pytest.raises(TemplateTampered):
        load_template(TemplateId.LLM_GENERATE)


def test_render_prompt_substitutes_in_order():
    template = load_template(TemplateId.EXPERT_PREPROCESS)
    system, user = render_prompt(
        template, {"dilemma": "DILEMMA-TEXT", "opinion": "OPINION-TEXT"}
    )
    assert "DILEMMA-TEXT" in user and "OPINION-TEXT" in user
    assert user.index("DILEMMA-TEXT") < user.index("OPINION-TEXT")
    assert "{dilemma}" not in user and "{opinion}" not in user


def test_render_prompt_missing_binding():
    template = load_template(TemplateId.EXPERT_PREPROCESS)
    with pytest.raises(UnboundPlaceholder):
        render_prompt(template, {"dilemma": "only this"})


def test_llm_generate_prompt_contains_marker_instruction():
    template = load_template(TemplateId.LLM_GENERATE)
    _, user = render_prompt(template, {"dilemma": "whatever"})
    assert "Add a “%” sign before each section" in user


def test_binding_values_not_rescanned():
    template = PromptTemplate(TemplateId.LLM_GENERATE, "sys {dilemma}", "user {dilemma}")
    system, user = render_prompt(template, {"dilemma": "braces {inside} stay"})
    assert "{inside}" in user and "{inside}" in system


# ---------------------------------------------------------------- preprocessing flows


def test_preprocess_expert_happy_path():
    client = FakeClient("prep_model", FIVE_SECTION_REPLY)
    response = preprocess_expert(CASE, "the expert thinks documentation matters", client)
    assert response.author.kind.value == "expert_ref"
    assert response.author.name == "prep_model"
    assert set(response.sections) == set(SECTION_ORDER)


def test_preprocess_expert_parse_failure_keeps_raw():
    client = FakeClient("prep_model", "no markers in this reply at all")
    with pytest.raises(ParseFailure) as excinfo:
        preprocess_expert(CASE, "opinion", client)
    assert excinfo.value.raw_reply == "no markers in this reply at all"


def test_reference_set_from_four_clients():
    references = [
        preprocess_expert(CASE, "opinion", FakeClient(f"prep_{i}", FIVE_SECTION_REPLY))
        for i in range(4)
    ]
    refset = ReferenceSet(CASE.id, references)
    assert len(refset) == 4
    assert {r.author.name for r in refset.references} == {f"prep_{i}" for i in range(4)}


def test_preprocess_human_paragraph_reply():
    client = FakeClient("prep_model", "The key factors are honesty and accurate records.")
    response = preprocess_human(CASE, "be honest about the data", client, participant="p1")
    assert response.author.name == "p1"
    assert set(response.sections) == {SectionKind.KEY_FACTORS}


def test_preprocess_human_oversized_reply_warns():
    client = FakeClient("prep_model", "x" * 500)
    with pytest.warns(LengthBoundWarning):
        response = preprocess_human(CASE, "short answer", client, participant="p1")
    assert len(response.sections[SectionKind.KEY_FACTORS]) == 500


def test_preprocess_human_sectioned_reply_with_extras_fails():
    reply = render_sectioned_text(
        {SectionKind.KEY_FACTORS: "factors", SectionKind.INTRODUCTION: "intro"}
    )
    client = FakeClient("prep_model", reply)
    with pytest.raises(ParseFailure):
        preprocess_human(CASE, "answer", client, participant="p1")


def test_preprocess_human_sectioned_keyfactors_only_ok():
    reply = render_sectioned_text({SectionKind.KEY_FACTORS: "only the factors"})
    client = FakeClient("prep_model", reply)
    response = preprocess_human(CASE, "answer text here", client, participant="p1")
    assert response.sections[SectionKind.KEY_FACTORS] == "only the factors"


def test_generate_llm_answer():
    client = FakeClient("some_model", FIVE_SECTION_REPLY)
    response = generate_llm_answer(CASE, client)
    assert response.author.kind.value == "llm"
    assert response.case_id == CASE.id


# ---------------------------------------------------------------- replay cache


def test_replay_client_byte_identical(tmp_path):
    cache = ReplayCache(tmp_path)
    inner = FakeClient("model", FIVE_SECTION_REPLY)
    client = ReplayClient("model", cache, inner)
    first = client.complete("sys", "user")
    second = client.complete("sys", "user")
    assert first == second == FIVE_SECTION_REPLY
    assert len(inner.prompts) == 1  # second call served from disk


def test_replay_miss_without_inner(tmp_path):
    client = ReplayClient("model", ReplayCache(tmp_path))
    with pytest.raises(ReplayMiss):
        client.complete("sys", "user")


def test_replay_cache_seeded_manually(tmp_path):
    cache = ReplayCache(tmp_path)
    cache.put("model", prompt_key("sys", "user"), "recorded reply")
    client = ReplayClient("model", cache)
    assert client.complete("sys", "user") == "recorded reply"


def test_prompt_key_distinguishes_halves():
    assert prompt_key("ab", "c") != prompt_key("a", "bc")


def test_generate_twice_with_replay_is_identical(tmp_path):
    cache = ReplayCache(tmp_path / "cache")
    recording = ReplayClient("model", cache, FakeClient("model", FIVE_SECTION_REPLY))
    first = generate_llm_answer(CASE, recording)
    replay_only = ReplayClient("model", cache)
    second = generate_llm_answer(CASE, replay_only)
    assert first.sections == second.sections


# ---------------------------------------------------------------- batch generation


def _cases(n: int) -> list[DilemmaCase]:
    return [
        DilemmaCase(f"case_{i}", "t", f"dilemma number {i}", "Authorship", Source.GEORGIA_CTSA)
        for i in range(n)
    ]


def test_generate_batch_writes_corpus_layout(tmp_path):
    client = FakeClient("modelz", FIVE_SECTION_REPLY)
    written, failed = generate_batch(_cases(3), client, tmp_path)
    assert sorted(written) == ["case_0", "case_1", "case_2"]
    assert not failed
    for case_id in written:
        assert (tmp_path / "responses" / "modelz" / f"{case_id}.txt").is_file()


def test_generate_batch_archives_failures(tmp_path):
    client = FakeClient("modelz", "not sectioned")
    written, failed = generate_batch(_cases(2), client, tmp_path)
    assert not written
    assert sorted(failed) == ["case_0", "case_1"]
    archived = tmp_path / "failures" / "modelz" / "case_0.txt"
    assert archived.read_text(encoding="utf-8") == "not sectioned"


def test_generate_batch_parallel_matches_serial(tmp_path):
    serial_dir, parallel_dir = tmp_path / "s", tmp_path / "p"
    client = FakeClient("modelz", FIVE_SECTION_REPLY)
    generate_batch(_cases(4), client, serial_dir, max_workers=1)
    generate_batch(_cases(4), client, parallel_dir, max_workers=4)
    for i in range(4):
        a = (serial_dir / "responses" / "modelz" / f"case_{i}.txt").read_text()
        b = (parallel_dir / "responses" / "modelz" / f"case_{i}.txt").read_text()
        assert a == b
