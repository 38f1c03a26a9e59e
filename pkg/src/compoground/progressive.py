"""Progressive multi-level grounding against a black-box model backend.

Levels of a decomposition are grounded in ascending order; each level's
parsed location tokens feed the next level's prompt as the clue.  The
backend is a narrow contract (request in, raw text out) with an HTTP
client and a deterministic scripted mock as implementations.  Batch
grounding runs items concurrently under a cap while levels within one
item stay strictly sequential.
"""

from __future__ import annotations

import json
import threading
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

from .decomposer import DecompositionResult
from .errors import BackendError, InvalidLocPairError
from .protocol import (
    DEFAULT_GRID,
    GroundedSpan,
    parse_response,
    render_prompt,
    decode_loc,
)
from .scene_graph import BBox

STATUS_OK = "ok"
STATUS_DEGRADED = "degraded"
STATUS_FAILED = "failed"

CLUE_PREVIOUS = "previous"
CLUE_ALL = "all"


@dataclass(frozen=True)
class DecodingParams:
    max_length: int = 64
    temperature: float = 0.0


@dataclass(frozen=True)
class BackendRequest:
    """One backend call: ground ``prompt`` against ``image_ref``."""

    image_ref: str
    prompt: str
    max_length: int = 64
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_length < 4:
            raise ValueError(f"max_length must be >= 4 (room for one loc pair plus delimiters), got {self.max_length}")


class ModelBackend(Protocol):
    def generate(self, request: BackendRequest) -> str:
        """Return raw model text for the request; raise BackendError on failure."""
        ...


class MockBackend:
    """Scripted stand-in for the model, keyed by prompt substrings.

    ``rules`` is an ordered list of (substring, response); the first rule
    whose substring occurs in the prompt wins.  A ``None`` response
    injects a backend fault.  Calls, prompts, and peak concurrency are
    recorded for assertions.
    """

    def __init__(self, rules=None, default: str | None = None, delay: float = 0.0):
        self.rules = list(rules or [])
        self.default = default
        self.delay = delay
        self.prompts: list[str] = []
        self.requests: list[BackendRequest] = []
        self._lock = threading.Lock()
        self._active = 0
        self.max_active = 0

    @classmethod
    def from_script(cls, script: dict) -> "MockBackend":
        rules = [(r["match"], r.get("text")) for r in script.get("responses", [])]
        return cls(rules=rules, default=script.get("default"))

    def generate(self, request: BackendRequest) -> str:
        with self._lock:
            self._active += 1
            self.max_active = max(self.max_active, self._active)
            self.prompts.append(request.prompt)
            self.requests.append(request)
        try:
            if self.delay:
                time.sleep(self.delay)
            for match, response in self.rules:
                if match in request.prompt:
                    if response is None:
                        raise BackendError(f"scripted fault for match {match!r}")
                    return response
            if self.default is None:
                raise BackendError("no scripted response matches the prompt and no default is set")
            return self.default
        finally:
            with self._lock:
                self._active -= 1


class HTTPBackend:
    """Backend over HTTP: POST the request as JSON, read {"text": ...} back."""

    def __init__(self, url: str, timeout: float = 30.0, client: httpx.Client | None = None):
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def generate(self, request: BackendRequest) -> str:
        body = {
            "image_ref": request.image_ref,
            "prompt": request.prompt,
            "max_length": request.max_length,
            "temperature": request.temperature,
        }
        try:
            resp = self._client.post(self.url, json=body)
        except httpx.HTTPError as exc:
            raise BackendError(f"backend unreachable at {self.url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            return payload["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BackendError(f"backend response is not {{'text': ...}}: {exc}") from exc


@dataclass(frozen=True)
class RetryPolicy:
    """Retries with exponential backoff before a level degrades."""

    retries: int = 2
    backoff: float = 0.1
    factor: float = 2.0
    sleep: Callable[[float], None] = field(default=time.sleep, compare=False)

    def pauses(self):
        delay = self.backoff
        for _ in range(self.retries):
            yield delay
            delay *= self.factor


@dataclass(frozen=True)
class LevelTrace:
    """Audit record of one backend exchange for one expression."""

    level: int
    expression: str
    prompt: str
    response: str | None
    parsed_spans: tuple[GroundedSpan, ...]
    selected_pair: tuple | None
    error: str | None
    wall_time: float


@dataclass(frozen=True)
class GroundingOutcome:
    """Result of progressively grounding one item.

    ``failed`` means the top level yielded no decodable box; ``degraded``
    means the top level succeeded but some lower exchange faulted, so the
    final prompt ran with a thinner clue than planned.
    """

    final_bbox: BBox | None
    final_pair: tuple | None
    traces: tuple[LevelTrace, ...]
    status: str
    item_id: str | None = None


def _call_with_retry(backend: ModelBackend, request: BackendRequest, retry: RetryPolicy) -> tuple[str | None, str | None]:
    pauses = retry.pauses()
    while True:
        try:
            return backend.generate(request), None
        except BackendError as exc:
            try:
                pause = next(pauses)
            except StopIteration:
                return None, str(exc)
            retry.sleep(pause)


def _select_span(parsed, expected_text: str) -> GroundedSpan | None:
    with_pair = [s for s in parsed if s.loc_pair is not None]
    for s in with_pair:
        if s.text == expected_text:
            return s
    return with_pair[0] if with_pair else None


def ground(
    image_ref: str,
    width: int,
    height: int,
    decomposition: DecompositionResult,
    backend: ModelBackend,
    *,
    params: DecodingParams = DecodingParams(),
    grid: int = DEFAULT_GRID,
    retry: RetryPolicy = RetryPolicy(),
    clue_mode: str = CLUE_PREVIOUS,
    item_id: str | None = None,
) -> GroundingOutcome:
    """Ground a decomposition level by level, feeding clues forward.

    Levels run in ascending order, expressions within a level left to
    right.  A level whose every exchange fails leaves the next prompt
    clueless rather than aborting; only the top level decides success.
    """
    if clue_mode not in (CLUE_PREVIOUS, CLUE_ALL):
        raise ValueError(f"clue_mode must be {CLUE_PREVIOUS!r} or {CLUE_ALL!r}")
    traces: list[LevelTrace] = []
    previous: list[GroundedSpan] = []
    accumulated: list[GroundedSpan] = []
    faulted = False
    target = decomposition.target
    target_span: GroundedSpan | None = None

    for level in decomposition.levels:
        grounded_here: list[GroundedSpan] = []
        for entry in decomposition.at_level(level):
            clues = accumulated if clue_mode == CLUE_ALL else previous
            prompt = render_prompt(image_ref, entry.text, clues)
            request = BackendRequest(
                image_ref=image_ref,
                prompt=prompt,
                max_length=params.max_length,
                temperature=params.temperature,
            )
            started = time.perf_counter()
            raw, error = _call_with_retry(backend, request, retry)
            wall = time.perf_counter() - started
            if raw is None:
                faulted = True
                traces.append(
                    LevelTrace(level, entry.text, prompt, None, (), None, error, wall)
                )
                continue
            parsed = parse_response(raw, grid)
            span = _select_span(parsed, entry.text)
            pair = span.loc_pair if span is not None else None
            if span is None:
                faulted = True
            else:
                grounded = GroundedSpan(text=entry.text, loc_pair=span.loc_pair)
                grounded_here.append(grounded)
                if entry == target:
                    target_span = grounded
            traces.append(
                LevelTrace(level, entry.text, prompt, raw, tuple(parsed), pair, None, wall)
            )
        previous = grounded_here
        accumulated.extend(grounded_here)

    final_pair = target_span.loc_pair if target_span is not None else None
    final_bbox = None
    if final_pair is not None:
        try:
            final_bbox = decode_loc(final_pair, width, height, grid)
        except InvalidLocPairError:
            final_bbox = None
    if final_bbox is None:
        status = STATUS_FAILED
    elif faulted:
        status = STATUS_DEGRADED
    else:
        status = STATUS_OK
    return GroundingOutcome(
        final_bbox=final_bbox,
        final_pair=final_pair,
        traces=tuple(traces),
        status=status,
        item_id=item_id,
    )


@dataclass(frozen=True)
class GroundTask:
    """One batch item: where to ground and what to ground there."""

    item_id: str
    image_ref: str
    width: int
    height: int
    decomposition: DecompositionResult


@dataclass
class BatchReport:
    total: int = 0
    ok: int = 0
    degraded: int = 0
    failed: int = 0


class BatchResult(Sequence):
    def __init__(self, outcomes: list[GroundingOutcome], report: BatchReport):
        self.outcomes = outcomes
        self.report = report

    def __len__(self):
        return len(self.outcomes)

    def __getitem__(self, i):
        return self.outcomes[i]


def ground_batch(
    tasks: Sequence[GroundTask],
    backend: ModelBackend,
    *,
    concurrency: int = 4,
    params: DecodingParams = DecodingParams(),
    grid: int = DEFAULT_GRID,
    retry: RetryPolicy = RetryPolicy(),
    clue_mode: str = CLUE_PREVIOUS,
) -> BatchResult:
    """Ground many items concurrently; outcomes come back in input order.

    Items are isolated: an unexpected per-item failure becomes a failed
    outcome with the error in its trace, never a batch abort.
    """
    if concurrency < 1:
        raise ValueError(f"concurrency must be >= 1, got {concurrency}")

    def run(task: GroundTask) -> GroundingOutcome:
        try:
            return ground(
                task.image_ref,
                task.width,
                task.height,
                task.decomposition,
                backend,
                params=params,
                grid=grid,
                retry=retry,
                clue_mode=clue_mode,
                item_id=task.item_id,
            )
        except Exception as exc:  # per-item isolation: surface, don't abort
            trace = LevelTrace(0, "", "", None, (), None, f"{type(exc).__name__}: {exc}", 0.0)
            return GroundingOutcome(None, None, (trace,), STATUS_FAILED, item_id=task.item_id)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        outcomes = list(pool.map(run, tasks))
    report = BatchReport(total=len(outcomes))
    for o in outcomes:
        if o.status == STATUS_OK:
            report.ok += 1
        elif o.status == STATUS_DEGRADED:
            report.degraded += 1
        else:
            report.failed += 1
    return BatchResult(outcomes, report)


def outcome_to_record(outcome: GroundingOutcome) -> dict:
    """Deterministic JSON record: no timing, no prompts."""
    return {
        "id": outcome.item_id,
        "status": outcome.status,
        "final_bbox": outcome.final_bbox.to_list() if outcome.final_bbox else None,
        "final_pair": [outcome.final_pair[0].bin_index, outcome.final_pair[1].bin_index]
        if outcome.final_pair
        else None,
    }


def trace_to_record(outcome: GroundingOutcome) -> dict:
    """Full audit record including prompts and wall times."""
    return {
        "id": outcome.item_id,
        "status": outcome.status,
        "traces": [
            {
                "level": t.level,
                "expression": t.expression,
                "prompt": t.prompt,
                "response": t.response,
                "selected_pair": [t.selected_pair[0].bin_index, t.selected_pair[1].bin_index]
                if t.selected_pair
                else None,
                "error": t.error,
                "wall_ms": round(t.wall_time * 1000, 3),
            }
            for t in outcome.traces
        ],
    }
