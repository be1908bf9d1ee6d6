"""Client for an external re-captioning service.

The captioner itself (a VLM producing moderately descriptive, user-style
prompts) is out of scope; this client owns batching, retries with
exponential backoff, response validation, and an NDJSON result cache that
makes re-runs idempotent per image_id. A file-based stub provider doubles
as the default test double.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import httpx

from .errors import BadResponseError, EmptyCaptionError, InvariantError, TransportError
from .ndjson import iter_ndjson, require_keys, write_ndjson


@dataclass(frozen=True)
class CaptionRequest:
    image_id: str
    image_uri: str
    style: str = "user_prompt"

    def __post_init__(self) -> None:
        if not self.image_uri:
            raise InvariantError(f"{self.image_id!r}: image_uri must be non-empty")


@dataclass(frozen=True)
class CaptionResult:
    image_id: str
    caption: str
    model_tag: str

    def __post_init__(self) -> None:
        if not self.caption:
            raise EmptyCaptionError(f"{self.image_id!r}: empty caption")
        if any(ord(ch) < 32 for ch in self.caption):
            raise BadResponseError(f"{self.image_id!r}: caption contains control characters")


@dataclass(frozen=True)
class CaptionFailure:
    image_id: str
    error: str  # exception class name
    detail: str


CaptionOutcome = Union[CaptionResult, CaptionFailure]


@dataclass(frozen=True)
class RetryPolicy:
    base_delay: float = 1.0
    factor: float = 2.0
    max_attempts: int = 5


def _validate_response(request: CaptionRequest, payload: object) -> CaptionResult:
    if not isinstance(payload, dict):
        raise BadResponseError(f"{request.image_id!r}: response is not an object")
    for key in ("image_id", "caption", "model_tag"):
        if key not in payload:
            raise BadResponseError(f"{request.image_id!r}: response missing {key!r}")
    if payload["image_id"] != request.image_id:
        raise BadResponseError(
            f"{request.image_id!r}: response is for {payload['image_id']!r}"
        )
    caption = payload["caption"]
    if not isinstance(caption, str) or not caption:
        raise EmptyCaptionError(f"{request.image_id!r}: empty caption")
    return CaptionResult(
        image_id=request.image_id, caption=caption, model_tag=str(payload["model_tag"])
    )


def _fetch_one(
    client: httpx.Client,
    endpoint: str,
    request: CaptionRequest,
    policy: RetryPolicy,
    sleep: Callable[[float], None],
) -> CaptionOutcome:
    delay = policy.base_delay
    last_exc: Exception | None = None
    for attempt in range(policy.max_attempts):
        if attempt > 0:
            sleep(delay)
            delay *= policy.factor
        try:
            response = client.post(
                endpoint,
                json={
                    "image_id": request.image_id,
                    "image_uri": request.image_uri,
                    "style": request.style,
                },
            )
        except httpx.HTTPError as exc:
            last_exc = exc
            continue
        if response.status_code >= 500:
            last_exc = TransportError(
                f"{request.image_id!r}: server error {response.status_code}"
            )
            continue
        # Non-transient outcomes are never retried.
        try:
            if response.status_code != 200:
                raise BadResponseError(
                    f"{request.image_id!r}: unexpected status {response.status_code}"
                )
            return _validate_response(request, response.json())
        except (BadResponseError, EmptyCaptionError) as exc:
            return CaptionFailure(
                image_id=request.image_id, error=type(exc).__name__, detail=str(exc)
            )
        except ValueError as exc:  # undecodable body
            return CaptionFailure(
                image_id=request.image_id, error="BadResponseError", detail=str(exc)
            )
    detail = str(last_exc) if last_exc else "no attempts made"
    return CaptionFailure(
        image_id=request.image_id, error="TransportError", detail=detail
    )


def caption_batch(
    requests: Sequence[CaptionRequest],
    endpoint: str,
    policy: RetryPolicy = RetryPolicy(),
    *,
    cache_path: str | Path | None = None,
    max_in_flight: int = 8,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[CaptionOutcome]:
    """Caption a batch; one outcome per request, in request order.

    Failures are isolated per request and never abort the batch. Cached
    ids (and repeated ids within one batch) are served without issuing a
    request, so re-running a batch is idempotent per image_id.
    """
    cache = load_caption_cache(cache_path) if cache_path else {}
    todo: list[CaptionRequest] = []
    seen: set[str] = set()
    for request in requests:
        if request.image_id in cache or request.image_id in seen:
            continue
        seen.add(request.image_id)
        todo.append(request)

    fetched: dict[str, CaptionOutcome] = {}
    if todo:
        with httpx.Client(transport=transport, timeout=30.0) as client:
            with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
                outcomes = list(
                    pool.map(
                        lambda r: _fetch_one(client, endpoint, r, policy, sleep), todo
                    )
                )
        for request, outcome in zip(todo, outcomes):
            fetched[request.image_id] = outcome

    new_results = [o for o in fetched.values() if isinstance(o, CaptionResult)]
    if cache_path and new_results:
        append_caption_cache(cache_path, new_results)

    out: list[CaptionOutcome] = []
    for request in requests:
        if request.image_id in cache:
            out.append(cache[request.image_id])
        else:
            out.append(fetched[request.image_id])
    return out


# --- cache and stub provider ---

def load_caption_cache(path: str | Path) -> dict[str, CaptionResult]:
    path = Path(path)
    if not path.exists():
        return {}
    cache: dict[str, CaptionResult] = {}
    for i, obj in enumerate(iter_ndjson(path), start=1):
        require_keys(obj, ("image_id", "caption", "model_tag"), f"{path}:{i}")
        result = CaptionResult(
            image_id=str(obj["image_id"]),
            caption=str(obj["caption"]),
            model_tag=str(obj["model_tag"]),
        )
        cache[result.image_id] = result
    return cache


def append_caption_cache(path: str | Path, results: Sequence[CaptionResult]) -> None:
    path = Path(path)
    existing = load_caption_cache(path) if path.exists() else {}
    merged = dict(existing)
    for result in results:
        merged[result.image_id] = result
    write_ndjson(
        path,
        (
            {"image_id": r.image_id, "caption": r.caption, "model_tag": r.model_tag}
            for r in merged.values()
        ),
    )


class FileCaptionProvider:
    """Offline caption source backed by an NDJSON id -> caption file."""

    def __init__(self, path: str | Path, model_tag: str = "file_stub") -> None:
        self.model_tag = model_tag
        self.captions: dict[str, str] = {}
        for i, obj in enumerate(iter_ndjson(path), start=1):
            require_keys(obj, ("image_id", "caption"), f"{path}:{i}")
            self.captions[str(obj["image_id"])] = str(obj["caption"])

    def caption_batch(self, requests: Sequence[CaptionRequest]) -> list[CaptionOutcome]:
        out: list[CaptionOutcome] = []
        for request in requests:
            caption = self.captions.get(request.image_id)
            if caption is None:
                out.append(
                    CaptionFailure(
                        image_id=request.image_id,
                        error="BadResponseError",
                        detail="no caption on file",
                    )
                )
                continue
            try:
                out.append(
                    CaptionResult(
                        image_id=request.image_id, caption=caption, model_tag=self.model_tag
                    )
                )
            except (EmptyCaptionError, BadResponseError) as exc:
                out.append(
                    CaptionFailure(
                        image_id=request.image_id, error=type(exc).__name__, detail=str(exc)
                    )
                )
        return out
