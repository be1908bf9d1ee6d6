"""Score providers: externally computed per-image scores ingested from NDJSON.

Classifier inference (NSFW, watermark, TOPIQ, aesthetics, ...) happens
outside this package; each provider file carries its scores as
{"image_id": str, "scores": {key: number}} lines.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import InvariantError
from .ndjson import as_finite_float, iter_ndjson, require_keys
from .records import ImageRecord

ScoreProvider = Mapping[str, Mapping[str, float]]


def read_score_provider(path: str | Path) -> dict[str, dict[str, float]]:
    """Read one provider file into an image_id -> {score_key: value} map."""
    out: dict[str, dict[str, float]] = {}
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        require_keys(obj, ("image_id", "scores"), where)
        image_id = str(obj["image_id"])
        scores = {
            str(k): as_finite_float(v, f"{where}: score {k!r}")
            for k, v in dict(obj["scores"]).items()
        }
        if image_id in out:
            raise InvariantError(f"{where}: duplicate image_id {image_id!r} in provider")
        out[image_id] = scores
    return out


def provider_keys(providers: Iterable[ScoreProvider]) -> set[str]:
    keys: set[str] = set()
    for provider in providers:
        for scores in provider.values():
            keys.update(scores)
    return keys


def merge_provider_scores(
    records: Sequence[ImageRecord], providers: Sequence[ScoreProvider]
) -> list[ImageRecord]:
    """Merge provider scores into records, in provider order (later wins)."""
    merged = []
    for rec in records:
        added: dict[str, float] = {}
        for provider in providers:
            added.update(provider.get(rec.image_id, {}))
        merged.append(rec.with_scores(added) if added else rec)
    return merged
