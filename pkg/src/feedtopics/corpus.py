"""Ingestion and cleaning of raw user comments.

Comments arrive as line-delimited JSON. Cleaning masks URLs and phone
numbers with literal tokens, strips mentions of the configured target
accounts, normalizes whitespace, and segments the remaining text into
sentences. Documents that end up empty are flagged as excluded and never
reach the embedding step.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

URL_TOKEN = "URL"
PHONE_TOKEN = "PHONE"

# Scheme-prefixed links, bare www hosts, and the shortener domains common
# in tweets. Single source of truth: the masking-completeness tests scan
# cleaned text with this same pattern.
_SHORTENER_HOSTS = (
    "t.co",
    "bit.ly",
    "goo.gl",
    "tinyurl.com",
    "ow.ly",
    "buff.ly",
    "is.gd",
    "youtu.be",
)
URL_PATTERN = re.compile(
    r"(?:https?://\S+|www\.\S+|(?<![\w.])(?:%s)/\S+)"
    % "|".join(re.escape(h) for h in _SHORTENER_HOSTS),
    re.IGNORECASE,
)

# Digit spans with common separators. Recall is deliberately favored over
# precision: unmasked digit patterns attract their own clusters.
PHONE_CANDIDATE = re.compile(r"\+?\(?\d[\d ().\t-]*\d")
MIN_PHONE_DIGITS = 7

_TRAILING_PUNCT = re.compile(r"[.,!?;:)\]'\"]+$")

# Tokens before a period that do not end a sentence.
_ABBREVIATIONS = {
    "e.g",
    "i.e",
    "etc",
    "vs",
    "cf",
    "mr",
    "mrs",
    "ms",
    "dr",
    "prof",
    "jr",
    "sr",
    "st",
    "approx",
    "u.s",
    "u.k",
}
_BOUNDARY = re.compile(r"([.!?]+[\"')\]]*)(\s+)")


class IngestError(RuntimeError):
    """The comment source cannot be read at all."""


@dataclass(frozen=True)
class RawComment:
    """One user comment as crawled, before any cleaning."""

    id: str
    text: str
    created_at: datetime
    author: str = ""
    lang: str | None = None


@dataclass
class CleanDocument:
    """A comment after masking and sentence segmentation.

    ``excluded`` is true iff no sentence survived cleaning; such documents
    are kept for accounting but must not be embedded.
    """

    id: str
    sentences: list[str]
    masked_urls: int = 0
    masked_phones: int = 0
    removed_mentions: int = 0
    excluded: bool = False
    exclusion_reason: str | None = None

    def rejoined(self) -> str:
        """Sentences joined by single newlines; feeding this back through
        preprocess reproduces the same segmentation."""
        return "\n".join(self.sentences)

    def display_text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class IngestConfig:
    """Controls for ingestion. ``languages=None`` accepts every record;
    otherwise records whose ``lang`` is missing or not listed are skipped."""

    languages: frozenset[str] | None = None
    max_warning_samples: int = 20


@dataclass
class IngestResult:
    comments: list[RawComment]
    total_lines: int = 0
    skipped_invalid: int = 0
    skipped_duplicates: int = 0
    skipped_language: int = 0
    warnings: list[str] = field(default_factory=list)


def parse_timestamp(value: object) -> datetime:
    """Parse an RFC 3339 timestamp; naive values are taken as UTC."""
    if not isinstance(value, str) or not value:
        raise ValueError(f"not a timestamp: {value!r}")
    raw = value.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    parsed = datetime.fromisoformat(raw)
    if parsed.tzinfo is None:
        return parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def _parse_record(line: str) -> RawComment:
    record = json.loads(line)
    if not isinstance(record, dict):
        raise ValueError("line is not a JSON object")
    comment_id = record.get("id")
    text = record.get("text")
    if not isinstance(comment_id, str) or not comment_id:
        raise ValueError("missing or empty id")
    if not isinstance(text, str) or not text:
        raise ValueError("missing or empty text")
    created_at = parse_timestamp(record.get("created_at"))
    author = record.get("author") or ""
    lang = record.get("lang")
    if lang is not None and not isinstance(lang, str):
        raise ValueError("lang must be a string")
    return RawComment(id=comment_id, text=text, created_at=created_at, author=str(author), lang=lang)


def ingest(source: str | Path | Iterable[str], config: IngestConfig | None = None) -> IngestResult:
    """Read line-delimited JSON comments.

    Invalid lines are skipped and counted; duplicate ids collapse to the
    first occurrence. An unreadable source raises :class:`IngestError`.
    """
    config = config or IngestConfig()
    if isinstance(source, (str, Path)):
        try:
            lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise IngestError(f"cannot read comment source {source}: {exc}") from exc
    else:
        lines = source

    result = IngestResult(comments=[])
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        result.total_lines += 1
        try:
            comment = _parse_record(line)
        except (ValueError, json.JSONDecodeError) as exc:
            result.skipped_invalid += 1
            if len(result.warnings) < config.max_warning_samples:
                result.warnings.append(f"line {lineno}: {exc}")
            continue
        if config.languages is not None and (comment.lang not in config.languages):
            result.skipped_language += 1
            continue
        if comment.id in seen:
            result.skipped_duplicates += 1
            continue
        seen.add(comment.id)
        result.comments.append(comment)
    return result


def _mask_urls(text: str) -> tuple[str, int]:
    count = 0

    def replace(match: re.Match[str]) -> str:
        nonlocal count
        count += 1
        # Keep trailing punctuation out of the token so sentence
        # boundaries survive masking.
        trail = _TRAILING_PUNCT.search(match.group(0))
        return URL_TOKEN + (trail.group(0) if trail else "")

    return URL_PATTERN.sub(replace, text), count


def _mask_phones(text: str) -> tuple[str, int]:
    count = 0

    def replace(match: re.Match[str]) -> str:
        nonlocal count
        span = match.group(0)
        if sum(ch.isdigit() for ch in span) < MIN_PHONE_DIGITS:
            return span
        count += 1
        return PHONE_TOKEN

    return PHONE_CANDIDATE.sub(replace, text), count


def _remove_mentions(text: str, handles: set[str]) -> tuple[str, int]:
    # Longest handle first so configured prefixes of one another resolve
    # deterministically.
    ordered = sorted(handles, key=len, reverse=True)
    pattern = re.compile(r"@(?:%s)\b" % "|".join(re.escape(h) for h in ordered), re.IGNORECASE)
    return pattern.subn("", text)


def _normalize_whitespace(text: str) -> str:
    text = re.sub(r"[ \t]+", " ", text)
    text = re.sub(r" ?\n ?", "\n", text)
    text = re.sub(r"\n+", "\n", text)
    return text.strip()


def _is_abbreviation(line: str, punct_start: int) -> bool:
    head = line[:punct_start]
    match = re.search(r"[\w.]+$", head)
    if not match:
        return False
    token = match.group(0).rstrip(".").lower()
    return token in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Rule-based segmentation: terminal punctuation followed by
    whitespace, plus hard newlines, with an abbreviation stop-list."""
    sentences: list[str] = []
    for line in text.split("\n"):
        start = 0
        for match in _BOUNDARY.finditer(line):
            if match.start(1) < start:
                continue
            if _is_abbreviation(line, match.start(1)):
                continue
            piece = line[start : match.end(1)].strip()
            if piece:
                sentences.append(piece)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


def preprocess(comment: RawComment, handles: Iterable[str]) -> CleanDocument:
    """Mask URLs and phone numbers, drop mentions of the target accounts,
    and segment into sentences. Total function: an empty result is an
    excluded document, not an error."""
    targets = {h.lstrip("@").lower() for h in handles if h.lstrip("@")}
    if not targets:
        raise ValueError("at least one target handle is required")

    text, n_urls = _mask_urls(comment.text)
    text, n_phones = _mask_phones(text)
    text, n_mentions = _remove_mentions(text, targets)
    text = _normalize_whitespace(text)
    sentences = split_sentences(text)

    if not sentences:
        return CleanDocument(
            id=comment.id,
            sentences=[],
            masked_urls=n_urls,
            masked_phones=n_phones,
            removed_mentions=n_mentions,
            excluded=True,
            exclusion_reason="empty after cleaning",
        )
    return CleanDocument(
        id=comment.id,
        sentences=sentences,
        masked_urls=n_urls,
        masked_phones=n_phones,
        removed_mentions=n_mentions,
    )


def preprocess_corpus(comments: Iterable[RawComment], handles: Iterable[str]) -> list[CleanDocument]:
    """Apply :func:`preprocess` to every comment, preserving input order."""
    targets = set(handles)
    return [preprocess(comment, targets) for comment in comments]


def document_to_record(doc: CleanDocument) -> dict:
    return {
        "id": doc.id,
        "sentences": doc.sentences,
        "masked_urls": doc.masked_urls,
        "masked_phones": doc.masked_phones,
        "removed_mentions": doc.removed_mentions,
        "excluded": doc.excluded,
        "exclusion_reason": doc.exclusion_reason,
    }


def document_from_record(record: dict) -> CleanDocument:
    return CleanDocument(
        id=record["id"],
        sentences=list(record["sentences"]),
        masked_urls=record.get("masked_urls", 0),
        masked_phones=record.get("masked_phones", 0),
        removed_mentions=record.get("removed_mentions", 0),
        excluded=record.get("excluded", False),
        exclusion_reason=record.get("exclusion_reason"),
    )
