"""LLM interaction layer: prompt assembly, chat clients, replay cache, and the
preprocessing flows that produce structured responses.

Nothing in this module affects scoring except through the structured responses
it emits; a run recorded into the replay cache is exactly reproducible offline.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
import warnings
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import requests

from .corpus import (
    CorpusError,
    DilemmaCase,
    SectionKind,
    StructuredResponse,
    parse_sectioned_text,
    render_sectioned_text,
)

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")

# Digests of the shipped template files; loading verifies them so that silent
# edits to the assets cannot change prompts without failing loudly.
PROMPT_SHA256 = {
    "expert_preprocess.system.txt": "b6faa7fc4b897666b8bf73dbf7cc87c46a734809ebe2650454c02588b9fdf3d2",
    "expert_preprocess.user.txt": "4dca2df6f48d5dc4a6bcffa4ba23906d07f55853fc536fa569aa3057af03158c",
    "human_preprocess.system.txt": "2134330e34d9de820ddb1737adc272f3394ff482e31fe5198b6792660c5e4043",
    "human_preprocess.user.txt": "2e4dffb2c9dfb438d23fcafe2de97aed26c584ae960b5f7cc4883d1fe91847c1",
    "llm_generate.system.txt": "f1286b0bbe43312a605239e62ee4d8d30ffb8b1c2a10526b8f0d5e88ae58fa74",
    "llm_generate.user.txt": "161dd6a0051519f5697f41d227c2037744eea3e4422811dc2aeb60db1354f3d9",
}


class HarnessError(Exception):
    pass


class UnboundPlaceholder(HarnessError):
    def __init__(self, names: set[str]):
        self.names = names
        super().__init__(f"unbound placeholders: {sorted(names)}")


class TemplateTampered(HarnessError):
    pass


class ReplayMiss(HarnessError):
    pass


class ParseFailure(HarnessError):
    """A client reply that did not parse; the raw text rides along."""

    def __init__(self, reason: str, raw_reply: str):
        self.raw_reply = raw_reply
        super().__init__(reason)


class LengthBoundWarning(UserWarning):
    pass


class TemplateId(Enum):
    EXPERT_PREPROCESS = "expert_preprocess"
    HUMAN_PREPROCESS = "human_preprocess"
    LLM_GENERATE = "llm_generate"


@dataclass(frozen=True)
class PromptTemplate:
    id: TemplateId
    system: str
    user: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.system)) | set(
            _PLACEHOLDER_RE.findall(self.user)
        )


def _read_asset(filename: str) -> str:
    ref = resources.files("ethicseval").joinpath(f"assets/prompts/{filename}")
    text = ref.read_text(encoding="utf-8")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if digest != PROMPT_SHA256[filename]:
        raise TemplateTampered(
            f"{filename} digest {digest} does not match the pinned value"
        )
    return text


def load_template(template_id: TemplateId) -> PromptTemplate:
    """Load and digest-check one of the shipped templates."""
    return PromptTemplate(
        id=template_id,
        system=_read_asset(f"{template_id.value}.system.txt"),
        user=_read_asset(f"{template_id.value}.user.txt"),
    )


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> tuple[str, str]:
    """Substitute named placeholders; every placeholder must be bound.

    Binding values are opaque text and are not re-scanned, so braces inside a
    dilemma description pass through untouched.
    """
    missing = template.placeholders() - set(bindings)
    if missing:
        raise UnboundPlaceholder(missing)

    def substitute(text: str) -> str:
        return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], text)

    return substitute(template.system), substitute(template.user)


class ChatClient(ABC):
    """Single-turn chat completion; implementations carry a stable id."""

    id: str

    @abstractmethod
    def complete(self, system: str, user: str, params: dict | None = None) -> str: ...


def prompt_key(system: str, user: str) -> str:
    blob = system + "\x1e" + user  # record separator keeps the halves distinct
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    # Unique temp name so concurrent writers of one key cannot interleave.
    tmp = path.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class ReplayCache:
    """Directory of recorded replies keyed by (client id, prompt hash)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, client_id: str, key: str) -> Path:
        return self.root / client_id / f"{key}.txt"

    def get(self, client_id: str, key: str) -> str | None:
        path = self._path(client_id, key)
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, client_id: str, key: str, reply: str) -> None:
        path = self._path(client_id, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, reply)


class ReplayClient(ChatClient):
    """Serves recorded replies; optionally records through an inner client.

    Without an inner client a cache miss raises :class:`ReplayMiss`, which is
    what keeps CI runs fully offline and byte-reproducible.
    """

    def __init__(self, client_id: str, cache: ReplayCache, inner: ChatClient | None = None):
        self.id = client_id
        self.cache = cache
        self.inner = inner

    def complete(self, system: str, user: str, params: dict | None = None) -> str:
        key = prompt_key(system, user)
        hit = self.cache.get(self.id, key)
        if hit is not None:
            return hit
        if self.inner is None:
            raise ReplayMiss(f"no recorded reply for ({self.id}, {key[:12]}...)")
        reply = self.inner.complete(system, user, params)
        self.cache.put(self.id, key, reply)
        return reply


class HttpChatClient(ChatClient):
    """Generic chat-completions client for OpenAI-style HTTP APIs.

    Decoding parameters are caller-supplied and should be recorded in the run
    manifest; transient failures retry with exponential backoff.
    """

    def __init__(
        self,
        client_id: str,
        base_url: str,
        model: str,
        api_key_env: str = "",
        *,
        default_params: dict | None = None,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.id = client_id
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.default_params = default_params or {}
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, system: str, user: str, params: dict | None = None) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            **self.default_params,
            **(params or {}),
        }
        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if not key:
                raise HarnessError(f"API key env var {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                reply = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout,
                )
                if reply.status_code >= 500 or reply.status_code == 429:
                    last_error = HarnessError(f"provider returned {reply.status_code}")
                else:
                    reply.raise_for_status()
                    return reply.json()["choices"][0]["message"]["content"]
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
            if attempt + 1 < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise HarnessError(f"provider unreachable after {self.retries} attempts: {last_error}")


def preprocess_expert(case: DilemmaCase, opinion: str, client: ChatClient) -> StructuredResponse:
    """Turn a raw expert opinion into a five-section reference summary."""
    template = load_template(TemplateId.EXPERT_PREPROCESS)
    system, user = render_prompt(template, {"dilemma": case.description, "opinion": opinion})
    reply = client.complete(system, user)
    try:
        sections = parse_sectioned_text(reply)
    except CorpusError as exc:
        raise ParseFailure(f"expert reply did not parse: {exc}", reply) from exc
    return StructuredResponse.expert(case.id, client.id, sections)


def preprocess_human(
    case: DilemmaCase, answer: str, client: ChatClient, participant: str = ""
) -> StructuredResponse:
    """Extend a short human answer into a key-factors-only response.

    Replies are expected to be a plain paragraph; a reply that arrives in
    sectioned form is accepted if only the key-factors section carries text.
    Replies longer than three times the answer trigger a warning, not an error.
    """
    template = load_template(TemplateId.HUMAN_PREPROCESS)
    system, user = render_prompt(template, {"dilemma": case.description, "answer": answer})
    reply = client.complete(system, user)
    text = reply.strip()
    if text.lstrip().startswith("%"):
        try:
            sections = parse_sectioned_text(reply)
        except CorpusError as exc:
            raise ParseFailure(f"human reply did not parse: {exc}", reply) from exc
        extras = [
            k.name for k, v in sections.items()
            if k is not SectionKind.KEY_FACTORS and v.strip()
        ]
        if extras:
            raise ParseFailure(f"human reply filled sections {extras}", reply)
        text = sections[SectionKind.KEY_FACTORS]
    if len(answer) > 0 and len(text) > 3 * len(answer):
        warnings.warn(
            LengthBoundWarning(
                f"reply for case {case.id} is {len(text)} chars, over 3x the "
                f"{len(answer)}-char answer"
            )
        )
    return StructuredResponse.human(case.id, participant or client.id, text)


def generate_llm_answer(case: DilemmaCase, client: ChatClient) -> StructuredResponse:
    """Ask a model for a five-section answer to one dilemma."""
    template = load_template(TemplateId.LLM_GENERATE)
    system, user = render_prompt(template, {"dilemma": case.description})
    reply = client.complete(system, user)
    try:
        sections = parse_sectioned_text(reply)
    except CorpusError as exc:
        raise ParseFailure(f"generation reply did not parse: {exc}", reply) from exc
    return StructuredResponse.llm(case.id, client.id, sections)


def _archive_failure(failures_dir: Path, client_id: str, case_id: str, raw: str) -> None:
    path = failures_dir / client_id / f"{case_id}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, raw)


def generate_batch(
    cases: list[DilemmaCase],
    client: ChatClient,
    corpus_dir: str | Path,
    max_workers: int = 1,
) -> tuple[list[str], list[str]]:
    """Generate answers for many cases into the corpus layout.

    Parse failures are archived under ``failures/<client>/<case>.txt`` and do
    not abort the batch. Returns (written case ids, failed case ids).
    """
    corpus_dir = Path(corpus_dir)
    out_dir = corpus_dir / "responses" / client.id
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(case: DilemmaCase) -> tuple[str, str | None]:
        try:
            response = generate_llm_answer(case, client)
        except ParseFailure as exc:
            _archive_failure(corpus_dir / "failures", client.id, case.id, exc.raw_reply)
            return case.id, None
        return case.id, render_sectioned_text(response.sections)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run_one, cases))
    else:
        results = [run_one(case) for case in cases]

    written, failed = [], []
    for case_id, rendered in results:
        if rendered is None:
            failed.append(case_id)
            continue
        path = out_dir / f"{case_id}.txt"
        _atomic_write(path, rendered)
        written.append(case_id)
    return written, failed


def preprocess_expert_batch(
    cases: list[DilemmaCase],
    opinions: dict[str, str],
    clients: list[ChatClient],
    corpus_dir: str | Path,
) -> tuple[list[str], list[str]]:
    """Build reference sets: one summary per (case, preprocessor client)."""
    corpus_dir = Path(corpus_dir)
    written, failed = [], []
    for case in cases:
        if case.id not in opinions:
            failed.append(case.id)
            continue
        for client in clients:
            try:
                response = preprocess_expert(case, opinions[case.id], client)
            except ParseFailure as exc:
                _archive_failure(corpus_dir / "failures", client.id, case.id, exc.raw_reply)
                failed.append(f"{case.id}:{client.id}")
                continue
            path = corpus_dir / "references" / case.id / f"{client.id}.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(render_sectioned_text(response.sections), encoding="utf-8")
            written.append(f"{case.id}:{client.id}")
    return written, failed


def preprocess_human_batch(
    cases: list[DilemmaCase],
    answers: dict[str, dict[str, str]],
    client: ChatClient,
    corpus_dir: str | Path,
) -> tuple[list[str], list[str]]:
    """Process raw human answers, keyed participant -> case id -> text."""
    corpus_dir = Path(corpus_dir)
    case_by_id = {c.id: c for c in cases}
    written, failed = [], []
    for participant, by_case in sorted(answers.items()):
        for case_id, answer in sorted(by_case.items()):
            if case_id not in case_by_id:
                failed.append(f"{participant}:{case_id}")
                continue
            try:
                response = preprocess_human(
                    case_by_id[case_id], answer, client, participant=participant
                )
            except ParseFailure as exc:
                _archive_failure(corpus_dir / "failures", participant, case_id, exc.raw_reply)
                failed.append(f"{participant}:{case_id}")
                continue
            path = corpus_dir / "humans" / participant / f"{case_id}.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(render_sectioned_text(response.sections), encoding="utf-8")
            written.append(f"{participant}:{case_id}")
    return written, failed
