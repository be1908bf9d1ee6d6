"""Core data model: image records, stage reports, and dataset manifests.

Manifest serialization is byte-deterministic: inner maps are emitted with
sorted keys, flags as sorted lists, and floats via Python's shortest
round-trip repr, so equal manifests always produce identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import InvariantError, IoError, ParseError
from .ndjson import iter_ndjson, write_ndjson

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ImageRecord:
    """One candidate image with provenance, dimensions, and named stage scores."""

    image_id: str
    source_uri: str
    width_px: int
    height_px: int
    scores: Mapping[str, float] = field(default_factory=dict)
    flags: frozenset[str] = frozenset()
    caption: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InvariantError("image_id must be non-empty")
        if self.width_px < 1 or self.height_px < 1:
            raise InvariantError(
                f"record {self.image_id!r}: dimensions must be >= 1, "
                f"got {self.width_px}x{self.height_px}"
            )
        clean: dict[str, float] = {}
        for key, value in dict(self.scores).items():
            value = float(value)
            if not math.isfinite(value):
                raise InvariantError(f"record {self.image_id!r}: score {key!r} is not finite")
            clean[str(key)] = value
        object.__setattr__(self, "scores", clean)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def area_px(self) -> int:
        return self.width_px * self.height_px

    def with_scores(self, added: Mapping[str, float]) -> "ImageRecord":
        """Return a copy with `added` merged into scores (added keys win)."""
        merged = dict(self.scores)
        merged.update(added)
        return replace(self, scores=merged)

    def with_flag(self, flag: str) -> "ImageRecord":
        return replace(self, flags=self.flags | {flag})

    def to_jsonable(self) -> dict:
        return {
            "image_id": self.image_id,
            "source_uri": self.source_uri,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "scores": {k: self.scores[k] for k in sorted(self.scores)},
            "flags": sorted(self.flags),
            "caption": self.caption,
        }

    @classmethod
    def from_jsonable(cls, obj: dict, where: str = "record") -> "ImageRecord":
        try:
            return cls(
                image_id=str(obj["image_id"]),
                source_uri=str(obj.get("source_uri", "")),
                width_px=int(obj["width_px"]),
                height_px=int(obj["height_px"]),
                scores=obj.get("scores", {}),
                flags=frozenset(obj.get("flags", ())),
                caption=obj.get("caption"),
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class StageReport:
    """Audit-trail entry for one pipeline stage (the funnel counts)."""

    stage_name: str
    input_count: int
    output_count: int
    parameters: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.input_count < 0 or self.output_count < 0:
            raise InvariantError(f"stage {self.stage_name!r}: negative counts")
        if self.output_count > self.input_count:
            raise InvariantError(
                f"stage {self.stage_name!r}: output_count {self.output_count} "
                f"exceeds input_count {self.input_count}"
            )
        object.__setattr__(
            self, "parameters", {str(k): str(v) for k, v in dict(self.parameters).items()}
        )

    def to_jsonable(self) -> dict:
        return {
            "stage_name": self.stage_name,
            "input_count": self.input_count,
            "output_count": self.output_count,
            "parameters": {k: self.parameters[k] for k in sorted(self.parameters)},
        }

    @classmethod
    def from_jsonable(cls, obj: dict, where: str = "stage_log") -> "StageReport":
        try:
            return cls(
                stage_name=str(obj["stage_name"]),
                input_count=int(obj["input_count"]),
                output_count=int(obj["output_count"]),
                parameters=obj.get("parameters", {}),
            )
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc}") from exc


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered record set plus the stage log that produced it."""

    records: tuple[ImageRecord, ...]
    pipeline_config_hash: str = ""
    stage_log: tuple[StageReport, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "stage_log", tuple(self.stage_log))
        seen: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise InvariantError(f"duplicate image_id {rec.image_id!r} in manifest")
            seen.add(rec.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonable(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "pipeline_config_hash": self.pipeline_config_hash,
            "stage_log": [s.to_jsonable() for s in self.stage_log],
            "records": [r.to_jsonable() for r in self.records],
        }


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Serialize a manifest; equal manifests always yield identical bytes."""
    payload = json.dumps(
        manifest.to_jsonable(), ensure_ascii=False, allow_nan=False, indent=2
    )
    try:
        Path(path).write_text(payload + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and fully validate a manifest file; rejects on the first violation."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: manifest must be a JSON object")
    if obj.get("version") != MANIFEST_VERSION:
        raise ParseError(f"{path}: unsupported manifest version {obj.get('version')!r}")
    for key in ("records", "stage_log"):
        if not isinstance(obj.get(key, []), list):
            raise ParseError(f"{path}: {key!r} must be a list")
    records = [
        ImageRecord.from_jsonable(r, where=f"{path}: records[{i}]")
        for i, r in enumerate(obj.get("records", []))
    ]
    stage_log = [
        StageReport.from_jsonable(s, where=f"{path}: stage_log[{i}]")
        for i, s in enumerate(obj.get("stage_log", []))
    ]
    return DatasetManifest(
        records=tuple(records),
        pipeline_config_hash=str(obj.get("pipeline_config_hash", "")),
        stage_log=tuple(stage_log),
    )


def read_records(path: str | Path) -> list[ImageRecord]:
    """Read an NDJSON record stream (one ImageRecord object per line)."""
    records = []
    seen: set[str] = set()
    for i, obj in enumerate(iter_ndjson(path), start=1):
        rec = ImageRecord.from_jsonable(obj, where=f"{path}:{i}")
        if rec.image_id in seen:
            raise InvariantError(f"{path}:{i}: duplicate image_id {rec.image_id!r}")
        seen.add(rec.image_id)
        records.append(rec)
    return records


def write_records(path: str | Path, records: Iterable[ImageRecord]) -> None:
    write_ndjson(path, (r.to_jsonable() for r in records))
