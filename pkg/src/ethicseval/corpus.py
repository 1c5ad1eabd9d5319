"""Data model, sectioned-text format, and directory loader for the dilemma corpus.

A corpus directory looks like::

    cases/<case_id>.json                       one dilemma per file
    references/<case_id>/<preprocessor>.txt    expert summaries, sectioned text
    responses/<model>/<case_id>.txt            model answers, sectioned text
    humans/<participant>/<case_id>.txt         key-factors-only sectioned text

Sectioned text uses ``%``-prefixed heading lines; see :func:`parse_sectioned_text`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class CorpusError(Exception):
    """Base class for corpus format and consistency errors."""


class UnknownSectionHeading(CorpusError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown section heading: {name!r}")


class NoSectionsFound(CorpusError):
    pass


class MissingCase(CorpusError):
    def __init__(self, case_id: str):
        self.case_id = case_id
        super().__init__(f"record references unknown case id {case_id!r}")


class MalformedRecord(CorpusError):
    def __init__(self, path: str | Path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class SectionRuleViolation(CorpusError):
    def __init__(self, author: str, kind: "SectionKind"):
        self.author = author
        self.kind = kind
        super().__init__(f"{author}: section {kind.name} not allowed for this author kind")


class SectionKind(Enum):
    """The five answer sections, in their fixed presentation order."""

    INTRODUCTION = "Introduction"
    KEY_FACTORS = "Key Factors in Consideration"
    HISTORICAL = "Historical & Theoretical Perspectives"
    RESOLUTION = "Proposed Resolution Strategies"
    TAKEAWAYS = "Key Takeaways"

    @property
    def heading(self) -> str:
        return self.value


SECTION_ORDER: tuple[SectionKind, ...] = tuple(SectionKind)

# Scenario tags used by the primary case collection; supplemental cases may
# carry free-form categories.
KNOWN_SCENARIO_KINDS: tuple[str, ...] = (
    "Allocating Credit",
    "Animal Use",
    "Authorship",
    "Confidentiality",
    "Conflict of Interest",
    "Data Interpretation and Management",
    "Data Representation",
    "Drug Trials",
    "Genetics Research",
    "Healthcare Inequities",
    "Informed Consent",
    "Intellectual Property",
    "Mentoring",
    "Misconduct",
    "Participant Recruitment",
)


class Source(Enum):
    GEORGIA_CTSA = "georgia_ctsa"
    ONLINE_ETHICS_CENTER = "online_ethics_center"


class AuthorKind(Enum):
    EXPERT_REF = "expert_ref"
    LLM = "llm"
    HUMAN = "human"


@dataclass(frozen=True)
class Author:
    """Tagged origin of a response: which kind, and which model/participant."""

    kind: AuthorKind
    name: str

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.name}"


@dataclass(frozen=True)
class DilemmaCase:
    id: str
    title: str
    description: str
    category: str
    source: Source

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError(f"case {self.id!r}: description must be non-empty")


@dataclass
class StructuredResponse:
    """One answer split into sections.

    Expert references and model answers carry all five sections (empty text is
    allowed); human answers carry exactly the key-factors section.
    """

    case_id: str
    author: Author
    sections: dict[SectionKind, str]

    def validate(self) -> None:
        present = set(self.sections)
        if self.author.kind is AuthorKind.HUMAN:
            for kind in present:
                if kind is not SectionKind.KEY_FACTORS:
                    raise SectionRuleViolation(str(self.author), kind)
            if SectionKind.KEY_FACTORS not in present:
                raise SectionRuleViolation(str(self.author), SectionKind.KEY_FACTORS)
        else:
            missing = set(SECTION_ORDER) - present
            if missing:
                raise ValueError(
                    f"{self.author}: missing sections {sorted(k.name for k in missing)}"
                )

    @classmethod
    def expert(cls, case_id: str, model: str, sections: dict[SectionKind, str]) -> "StructuredResponse":
        resp = cls(case_id, Author(AuthorKind.EXPERT_REF, model), dict(sections))
        resp.validate()
        return resp

    @classmethod
    def llm(cls, case_id: str, model: str, sections: dict[SectionKind, str]) -> "StructuredResponse":
        resp = cls(case_id, Author(AuthorKind.LLM, model), dict(sections))
        resp.validate()
        return resp

    @classmethod
    def human(cls, case_id: str, participant: str, key_factors: str) -> "StructuredResponse":
        resp = cls(
            case_id,
            Author(AuthorKind.HUMAN, participant),
            {SectionKind.KEY_FACTORS: key_factors.strip()},
        )
        resp.validate()
        return resp


@dataclass
class ReferenceSet:
    """Expert summaries of one case, one per preprocessor model."""

    case_id: str
    references: list[StructuredResponse]

    def __post_init__(self) -> None:
        for ref in self.references:
            if ref.case_id != self.case_id:
                raise ValueError(
                    f"reference case id {ref.case_id!r} does not match set {self.case_id!r}"
                )
            if ref.author.kind is not AuthorKind.EXPERT_REF:
                raise ValueError(f"reference author must be expert_ref, got {ref.author}")

    def __len__(self) -> int:
        return len(self.references)


def _normalize_heading(text: str) -> str:
    text = text.strip().strip(":").strip().lower()
    text = text.replace("&", "and")
    return " ".join(text.split())


_HEADING_LOOKUP: dict[str, SectionKind] = {
    _normalize_heading(kind.heading): kind for kind in SECTION_ORDER
}


def _match_heading(line: str) -> tuple[SectionKind, str] | None:
    """Match a ``%``-prefixed line against the known headings.

    Returns the section and any same-line trailing text, or None when the line
    does not start with ``%``. Unknown headings raise.
    """
    stripped = line.lstrip()
    if not stripped.startswith("%"):
        return None
    body = stripped[1:]
    if ":" in body:
        head, _, rest = body.partition(":")
        kind = _HEADING_LOOKUP.get(_normalize_heading(head))
        if kind is not None:
            return kind, rest.strip()
    kind = _HEADING_LOOKUP.get(_normalize_heading(body))
    if kind is not None:
        return kind, ""
    raise UnknownSectionHeading(body.strip().rstrip(":").strip())


def sections_present(raw: str) -> list[SectionKind]:
    """Section markers appearing in the text, in order of appearance."""
    found: list[SectionKind] = []
    for line in raw.splitlines():
        match = _match_heading(line)
        if match is not None:
            found.append(match[0])
    return found


def parse_sectioned_text(raw: str) -> dict[SectionKind, str]:
    """Split ``%``-delimited text into the five sections.

    Every section is present in the result; sections missing from the input map
    to empty text. Bodies are stripped of surrounding whitespace but otherwise
    verbatim. Text before the first marker is ignored. Unknown ``%`` headings
    raise :class:`UnknownSectionHeading`; input with no markers at all raises
    :class:`NoSectionsFound`.
    """
    buckets: dict[SectionKind, list[str]] = {kind: [] for kind in SECTION_ORDER}
    current: SectionKind | None = None
    saw_marker = False
    for line in raw.splitlines():
        match = _match_heading(line)
        if match is not None:
            current, rest = match
            saw_marker = True
            if rest:
                buckets[current].append(rest)
        elif current is not None:
            buckets[current].append(line)
    if not saw_marker:
        raise NoSectionsFound("no % section markers found")
    return {kind: "\n".join(lines).strip() for kind, lines in buckets.items()}


def render_sectioned_text(sections: dict[SectionKind, str]) -> str:
    """Emit the five sections in fixed order with canonical ``%Heading:`` lines.

    Inverse of :func:`parse_sectioned_text` for whitespace-normalized bodies;
    sections absent from the map render with empty bodies.
    """
    parts: list[str] = []
    for kind in SECTION_ORDER:
        text = sections.get(kind, "").strip()
        parts.append(f"%{kind.heading}:")
        if text:
            parts.append(text)
    return "\n".join(parts) + "\n"


@dataclass
class Corpus:
    """All records of one corpus directory, cross-validated."""

    cases: dict[str, DilemmaCase] = field(default_factory=dict)
    references: dict[str, ReferenceSet] = field(default_factory=dict)
    responses: list[StructuredResponse] = field(default_factory=list)
    humans: list[StructuredResponse] = field(default_factory=list)

    def llm_models(self) -> list[str]:
        return sorted({r.author.name for r in self.responses})

    def human_participants(self) -> list[str]:
        return sorted({r.author.name for r in self.humans})

    def responses_by(self, name: str) -> dict[str, StructuredResponse]:
        pool = self.responses if name in self.llm_models() else self.humans
        return {r.case_id: r for r in pool if r.author.name == name}

    def fingerprint(self) -> str:
        """Content hash of the loaded records, independent of file layout."""
        payload = {
            "cases": {
                cid: {
                    "title": c.title,
                    "description": c.description,
                    "category": c.category,
                    "source": c.source.value,
                }
                for cid, c in sorted(self.cases.items())
            },
            "references": {
                cid: {
                    ref.author.name: {k.name: v for k, v in sorted(ref.sections.items(), key=lambda kv: kv[0].name)}
                    for ref in sorted(refset.references, key=lambda r: r.author.name)
                }
                for cid, refset in sorted(self.references.items())
            },
            "responses": [
                {
                    "case_id": r.case_id,
                    "author": str(r.author),
                    "sections": {k.name: v for k, v in sorted(r.sections.items(), key=lambda kv: kv[0].name)},
                }
                for r in sorted(self.responses + self.humans, key=lambda r: (str(r.author), r.case_id))
            ],
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _load_case_file(path: Path) -> DilemmaCase:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedRecord(path, f"unreadable JSON: {exc}") from exc
    try:
        return DilemmaCase(
            id=data["id"],
            title=data["title"],
            description=data["description"],
            category=data["category"],
            source=Source(data["source"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedRecord(path, f"bad case record: {exc}") from exc


def load_corpus(path: str | Path) -> Corpus:
    """Load and cross-validate a corpus directory.

    Raises :class:`MissingCase` when a reference or response names an unknown
    case, :class:`SectionRuleViolation` when a human record carries text in any
    section other than key factors, and :class:`MalformedRecord` for unreadable
    or unparseable files.
    """
    root = Path(path)
    corpus = Corpus()

    cases_dir = root / "cases"
    if not cases_dir.is_dir():
        raise MalformedRecord(cases_dir, "missing cases/ directory")
    for case_path in sorted(cases_dir.glob("*.json")):
        case = _load_case_file(case_path)
        if case.id in corpus.cases:
            raise MalformedRecord(case_path, f"duplicate case id {case.id!r}")
        corpus.cases[case.id] = case

    refs_dir = root / "references"
    if refs_dir.is_dir():
        for case_dir in sorted(p for p in refs_dir.iterdir() if p.is_dir()):
            case_id = case_dir.name
            if case_id not in corpus.cases:
                raise MissingCase(case_id)
            refs = []
            for ref_path in sorted(case_dir.glob("*.txt")):
                sections = _parse_record(ref_path)
                refs.append(StructuredResponse.expert(case_id, ref_path.stem, sections))
            if refs:
                corpus.references[case_id] = ReferenceSet(case_id, refs)

    resp_dir = root / "responses"
    if resp_dir.is_dir():
        for model_dir in sorted(p for p in resp_dir.iterdir() if p.is_dir()):
            for resp_path in sorted(model_dir.glob("*.txt")):
                case_id = resp_path.stem
                if case_id not in corpus.cases:
                    raise MissingCase(case_id)
                sections = _parse_record(resp_path)
                corpus.responses.append(
                    StructuredResponse.llm(case_id, model_dir.name, sections)
                )

    humans_dir = root / "humans"
    if humans_dir.is_dir():
        for person_dir in sorted(p for p in humans_dir.iterdir() if p.is_dir()):
            for resp_path in sorted(person_dir.glob("*.txt")):
                case_id = resp_path.stem
                if case_id not in corpus.cases:
                    raise MissingCase(case_id)
                sections = _parse_record(resp_path)
                author = f"human:{person_dir.name}"
                for kind, text in sections.items():
                    if kind is not SectionKind.KEY_FACTORS and text.strip():
                        raise SectionRuleViolation(author, kind)
                corpus.humans.append(
                    StructuredResponse.human(
                        case_id, person_dir.name, sections[SectionKind.KEY_FACTORS]
                    )
                )

    return corpus


def _parse_record(path: Path) -> dict[SectionKind, str]:
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedRecord(path, f"unreadable: {exc}") from exc
    try:
        return parse_sectioned_text(raw)
    except (UnknownSectionHeading, NoSectionsFound) as exc:
        raise MalformedRecord(path, str(exc)) from exc
