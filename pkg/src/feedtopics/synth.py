"""Synthetic fixture corpora with planted themes and trend shapes.

Used by the test suite and for demo runs: documents are short pseudo-word
sentences drawn from per-theme vocabularies, so same-theme documents share
most tokens and different themes barely overlap. Timestamps follow a
per-theme linear ramp so some themes rise and others fall.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

_SYLLABLES = ("ba", "do", "fi", "gu", "ka", "lo", "mi", "nu", "pe", "ra", "su", "ti", "vo", "ze")


def _pseudo_word(rng: random.Random) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))


@dataclass
class SyntheticCorpus:
    records: list[dict]
    truth: dict[str, int]  # doc id -> planted theme

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")
        return path


def make_corpus(
    n_docs: int = 3000,
    n_themes: int = 20,
    seed: int = 0,
    start: datetime | None = None,
    span: timedelta = timedelta(weeks=8),
    vocab_size: int = 8,
    with_noise_fields: bool = True,
) -> SyntheticCorpus:
    """Generate ``n_docs`` comments spread evenly over ``n_themes``.

    A slice of documents carries mentions, links, and digit strings so
    preprocessing has something to mask. Theme t's volume ramps linearly
    up or down across ``span`` depending on parity, giving the trend
    detector planted rising and falling series.
    """
    if n_themes < 2:
        raise ValueError("need at least two themes")
    rng = random.Random(seed)
    start = start or datetime(2025, 1, 6, tzinfo=timezone.utc)

    vocabularies = []
    used: set[str] = set()
    for _ in range(n_themes):
        vocab = []
        while len(vocab) < vocab_size:
            word = _pseudo_word(rng)
            if word not in used:
                used.add(word)
                vocab.append(word)
        vocabularies.append(vocab)
    filler = []
    while len(filler) < 20:
        word = _pseudo_word(rng)
        if word not in used:
            used.add(word)
            filler.append(word)

    records = []
    truth = {}
    for i in range(n_docs):
        theme = i % n_themes
        words = rng.choices(vocabularies[theme], k=rng.randint(5, 9))
        words += rng.choices(filler, k=rng.randint(0, 2))
        rng.shuffle(words)
        cut = rng.randint(2, max(2, len(words) - 2))
        sentences = [" ".join(words[:cut]).capitalize() + ".", " ".join(words[cut:]).capitalize() + "."]
        text = " ".join(s for s in sentences if s != ".")
        if with_noise_fields and rng.random() < 0.15:
            text = "@ExampleTelco " + text
        if with_noise_fields and rng.random() < 0.10:
            text += " https://t.co/" + "".join(rng.choice("abcdef0123456789") for _ in range(8))
        if with_noise_fields and rng.random() < 0.05:
            text += " call 0800 " + str(rng.randint(100, 999)) + " " + str(rng.randint(1000, 9999))

        # Linear ramp over the span: even themes rise, odd themes fall.
        u = rng.random()
        position = u**0.5 if theme % 2 == 0 else 1 - u**0.5
        created_at = start + span * position
        doc_id = f"doc-{i:06d}"
        records.append(
            {
                "id": doc_id,
                "text": text,
                "created_at": created_at.isoformat().replace("+00:00", "Z"),
                "author": f"user{rng.randint(1, 500):04d}",
                "lang": "en",
            }
        )
        truth[doc_id] = theme
    return SyntheticCorpus(records=records, truth=truth)


def make_points(
    n_points: int,
    n_blobs: int,
    seed: int = 0,
    dims: int = 5,
    blob_std: float = 0.05,
    spacing: float = 1.0,
):
    """Gaussian blobs with centers ``spacing`` apart on the diagonal;
    the default geometry is well separated for contract tests."""
    import numpy as np

    rng = np.random.default_rng(seed)
    centers = np.arange(n_blobs)[:, None] * spacing * np.ones((n_blobs, dims))
    labels = np.arange(n_points) % n_blobs
    points = centers[labels] + rng.normal(0.0, blob_std, size=(n_points, dims))
    return points.astype(np.float32), labels
