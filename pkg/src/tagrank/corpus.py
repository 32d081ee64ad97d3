"""Corpus ingestion: documents and subjects from line-delimited JSON.

Documents carry a title, an optional abstract, and the gold subject codes
used for training and evaluation. Subjects form the controlled vocabulary
the tagger retrieves from. Parsing is strict (duplicate ids, malformed
lines, and invalid UTF-8 are hard errors); cross-record consistency is
checked separately by :func:`validate`, which reports rather than raises.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InputError, ParseError


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    abstract: str = ""
    language: str = ""
    gold_subjects: tuple[str, ...] = ()


@dataclass(frozen=True)
class Subject:
    code: str
    name: str
    definition: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    n_documents: int
    n_subjects: int
    unknown_gold_codes: tuple[tuple[str, str], ...] = ()
    empty_rendered_texts: tuple[str, ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.unknown_gold_codes and not self.empty_rendered_texts

    def describe(self) -> str:
        lines = [
            f"documents: {self.n_documents}",
            f"subjects: {self.n_subjects}",
        ]
        for doc_id, code in self.unknown_gold_codes:
            lines.append(f"unknown gold code {code!r} in document {doc_id!r}")
        for rec_id in self.empty_rendered_texts:
            lines.append(f"empty rendered text for {rec_id!r}")
        lines.append("status: " + ("valid" if self.is_valid else "INVALID"))
        return "\n".join(lines)


def _iter_lines(stream: str | Iterable[str]) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, line) for non-blank lines.

    Splits on "\\n" only; other Unicode line boundaries are ordinary
    characters inside a record.
    """
    lines = stream.split("\n") if isinstance(stream, str) else stream
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if line.strip():
            yield number, line


def _parse_object(line: str, number: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line=number) from exc
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", line=number)
    return obj


def _require_str(obj: dict, key: str, number: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise ParseError(f"missing or non-string field {key!r}", line=number)
    return value


def _optional_str(obj: dict, key: str, number: int, default: str = "") -> str:
    value = obj.get(key, default)
    if not isinstance(value, str):
        raise ParseError(f"non-string field {key!r}", line=number)
    return value


def parse_documents(stream: str | Iterable[str]) -> list[Document]:
    """Parse documents from line-delimited JSON, one object per line."""
    docs: list[Document] = []
    seen: set[str] = set()
    for number, line in _iter_lines(stream):
        obj = _parse_object(line, number)
        doc_id = _require_str(obj, "id", number)
        title = _require_str(obj, "title", number)
        if not doc_id.strip():
            raise ParseError("empty document id", line=number)
        if not title.strip():
            raise ParseError(f"empty title for document {doc_id!r}", line=number)
        if doc_id in seen:
            raise ParseError(f"duplicate document id {doc_id!r}", line=number)
        seen.add(doc_id)
        gold = obj.get("gold_subjects", [])
        if not isinstance(gold, list) or any(not isinstance(c, str) for c in gold):
            raise ParseError("gold_subjects must be a list of strings", line=number)
        docs.append(
            Document(
                id=doc_id,
                title=title,
                abstract=_optional_str(obj, "abstract", number),
                language=_optional_str(obj, "language", number),
                gold_subjects=tuple(gold),
            )
        )
    return docs


def parse_subjects(stream: str | Iterable[str]) -> list[Subject]:
    """Parse taxonomy subjects from line-delimited JSON."""
    subjects: list[Subject] = []
    seen: set[str] = set()
    for number, line in _iter_lines(stream):
        obj = _parse_object(line, number)
        code = _require_str(obj, "code", number)
        name = _require_str(obj, "name", number)
        if not code.strip():
            raise ParseError("empty subject code", line=number)
        if not name.strip():
            raise ParseError(f"empty name for subject {code!r}", line=number)
        if code in seen:
            raise ParseError(f"duplicate subject code {code!r}", line=number)
        seen.add(code)
        definition = obj.get("definition")
        if definition is not None and not isinstance(definition, str):
            raise ParseError("non-string field 'definition'", line=number)
        subjects.append(Subject(code=code, name=name, definition=definition))
    return subjects


def document_to_json(d: Document) -> str:
    return json.dumps(
        {
            "id": d.id,
            "title": d.title,
            "abstract": d.abstract,
            "language": d.language,
            "gold_subjects": list(d.gold_subjects),
        },
        ensure_ascii=False,
        sort_keys=True,
    )


def subject_to_json(s: Subject) -> str:
    obj: dict = {"code": s.code, "name": s.name}
    if s.definition is not None:
        obj["definition"] = s.definition
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def serialize_documents(docs: Iterable[Document]) -> str:
    return "".join(document_to_json(d) + "\n" for d in docs)


def serialize_subjects(subjects: Iterable[Subject]) -> str:
    return "".join(subject_to_json(s) + "\n" for s in subjects)


def load_documents(path: str | Path) -> list[Document]:
    return parse_documents(_read_utf8(path))


def load_subjects(path: str | Path) -> list[Subject]:
    return parse_subjects(_read_utf8(path))


def _read_utf8(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})") from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def save_documents(docs: Iterable[Document], path: str | Path) -> None:
    Path(path).write_text(serialize_documents(docs), encoding="utf-8")


def save_subjects(subjects: Iterable[Subject], path: str | Path) -> None:
    Path(path).write_text(serialize_subjects(subjects), encoding="utf-8")


def render_document_text(d: Document) -> str:
    """Single-string model input: trimmed title, newline, trimmed abstract.

    The separator is dropped when the abstract is empty, so the output is
    exactly the title for title-only records.
    """
    title = d.title.strip()
    if not title:
        raise InputError(f"document {d.id!r} has an empty title")
    abstract = d.abstract.strip()
    return f"{title}\n{abstract}" if abstract else title


def render_subject_text(s: Subject) -> str:
    """Single-string model input: trimmed name, newline, trimmed definition.

    A missing definition and an empty/whitespace definition render the same
    way: the name alone.
    """
    name = s.name.strip()
    if not name:
        raise InputError(f"subject {s.code!r} has an empty name")
    definition = (s.definition or "").strip()
    return f"{name}\n{definition}" if definition else name


def validate(docs: list[Document], subjects: list[Subject]) -> ValidationReport:
    """Cross-check a corpus; reports problems instead of raising."""
    known = {s.code for s in subjects}
    unknown: list[tuple[str, str]] = []
    empty: list[str] = []
    for doc in docs:
        for code in doc.gold_subjects:
            if code not in known:
                unknown.append((doc.id, code))
        if not doc.title.strip() and not doc.abstract.strip():
            empty.append(doc.id)
    for subject in subjects:
        if not subject.name.strip():
            empty.append(subject.code)
    return ValidationReport(
        n_documents=len(docs),
        n_subjects=len(subjects),
        unknown_gold_codes=tuple(unknown),
        empty_rendered_texts=tuple(empty),
    )
