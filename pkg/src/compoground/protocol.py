"""Grounded sequence format: location-token codec, templates, parsing.

Sequences are markdown-like UTF-8 text with a fixed marker vocabulary
(``<s>``, ``<img>``, ``<grounding>``, ``<p>``, ``<b>``, ``<loc_K>``).
A box is two location tokens over a P x P grid: the bin holding the
box's top-left pixel, then the bin holding its bottom-right interior
pixel (index = row * P + col).  Training samples serialize an instance
level into the fixed prompt scaffold, with loss masks over the location
groups; inference prompts are the same scaffold cut after the target
phrase.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass

from .errors import (
    BoxOutOfBoundsError,
    IncompleteInstanceError,
    InvalidLocPairError,
)
from .scene_graph import BBox

DEFAULT_GRID = 32

SEQ_OPEN = "<s>"
SEQ_CLOSE = "</s>"
IMG_OPEN = "<img>"
IMG_CLOSE = "</img>"
GROUNDING = "<grounding>"
P_OPEN = "<p>"
P_CLOSE = "</p>"
B_OPEN = "<b>"
B_CLOSE = "</b>"

CLUE_PREFIX = "We can see in the image:"
LOCATE_PREFIX = "Based on that, we can locate:"
PLAIN_PREFIX = "We can locate:"


@dataclass(frozen=True)
class LocToken:
    """One discrete location symbol on a P x P grid."""

    bin_index: int
    grid: int = DEFAULT_GRID

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError(f"grid must be >= 2, got {self.grid}")
        if not 0 <= self.bin_index < self.grid * self.grid:
            raise ValueError(f"bin {self.bin_index} out of range for grid {self.grid}")

    @property
    def row(self) -> int:
        return self.bin_index // self.grid

    @property
    def col(self) -> int:
        return self.bin_index % self.grid

    @property
    def token(self) -> str:
        return f"<loc_{self.bin_index}>"


@dataclass(frozen=True)
class GroundedSpan:
    """A phrase with its optional location-token pair.

    Pair ordering is deliberately not validated here: model output can
    carry inverted pairs and the parser must surface them as-is; the
    codec rejects them at decode time instead.
    """

    text: str
    loc_pair: tuple[LocToken, LocToken] | None = None


@dataclass(frozen=True)
class GroundedSequence:
    """Interleaved plain text and grounded spans behind one image reference."""

    image_ref: str
    segments: tuple

    def __post_init__(self):
        for seg in self.segments:
            if not isinstance(seg, (str, GroundedSpan)):
                raise TypeError(f"segment must be str or GroundedSpan, got {type(seg).__name__}")

    @property
    def spans(self) -> tuple[GroundedSpan, ...]:
        return tuple(s for s in self.segments if isinstance(s, GroundedSpan))


def encode_bbox(bbox: BBox, width: int, height: int, grid: int = DEFAULT_GRID) -> tuple[LocToken, LocToken]:
    """Quantize a pixel box to its (top-left bin, bottom-right bin) pair."""
    if grid < 2:
        raise ValueError(f"grid must be >= 2, got {grid}")
    if not bbox.inside(width, height):
        raise BoxOutOfBoundsError(f"box {bbox.to_list()} outside image {width}x{height}")
    col_tl = bbox.x_min * grid // width
    row_tl = bbox.y_min * grid // height
    col_br = (bbox.x_max - 1) * grid // width
    row_br = (bbox.y_max - 1) * grid // height
    return (
        LocToken(row_tl * grid + col_tl, grid),
        LocToken(row_br * grid + col_br, grid),
    )


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def decode_loc(pair: tuple[LocToken, LocToken], width: int, height: int, grid: int = DEFAULT_GRID) -> BBox:
    """Pixel rectangle covering the pair's bins edge to edge.

    The rectangle runs from the top-left bin's first pixel to the
    bottom-right bin's last pixel (exclusive).  Inverted pairs are a
    protocol violation and raise; grids finer than the image can produce
    empty bins, which surface as degenerate-box errors.
    """
    tl, br = pair
    if tl.grid != grid or br.grid != grid:
        raise InvalidLocPairError(f"pair grids ({tl.grid}, {br.grid}) differ from requested {grid}")
    if tl.row > br.row or tl.col > br.col:
        raise InvalidLocPairError(
            f"inverted pair: top-left bin {tl.bin_index} (r{tl.row},c{tl.col}) "
            f"vs bottom-right bin {br.bin_index} (r{br.row},c{br.col})"
        )
    x_min = _ceil_div(tl.col * width, grid)
    y_min = _ceil_div(tl.row * height, grid)
    x_max = _ceil_div((br.col + 1) * width, grid)
    y_max = _ceil_div((br.row + 1) * height, grid)
    try:
        return BBox(x_min, y_min, x_max, y_max)
    except ValueError as exc:
        raise InvalidLocPairError(f"pair ({tl.bin_index}, {br.bin_index}) spans no pixels at {width}x{height}: {exc}") from exc


def render_span(span: GroundedSpan) -> str:
    out = f"{P_OPEN}{span.text}{P_CLOSE}"
    if span.loc_pair is not None:
        tl, br = span.loc_pair
        out += f"{B_OPEN}{tl.token}{br.token}{B_CLOSE}"
    return out


def render_sequence(seq: GroundedSequence) -> str:
    body = "".join(render_span(s) if isinstance(s, GroundedSpan) else s for s in seq.segments)
    return f"{SEQ_OPEN}{IMG_OPEN}{seq.image_ref}{IMG_CLOSE}{GROUNDING}{body}{SEQ_CLOSE}"


_SPAN_RE = re.compile(r"<p>(.*?)</p>(\s*<b>(.*?)</b>)?", re.DOTALL)
_LOC_RUN_RE = re.compile(r"^(?:<loc_\d+>)+$")
_LOC_ID_RE = re.compile(r"<loc_(\d+)>")


class ParsedResponse(Sequence):
    """Spans extracted from raw model text; behaves as a span sequence.

    ``dropped`` counts spans discarded for malformed or out-of-range
    location groups plus unclosed phrase markers.
    """

    def __init__(self, spans: list[GroundedSpan], dropped: int = 0):
        self.spans = list(spans)
        self.dropped = dropped

    def __len__(self):
        return len(self.spans)

    def __getitem__(self, i):
        return self.spans[i]

    def __eq__(self, other):
        if isinstance(other, ParsedResponse):
            return self.spans == other.spans and self.dropped == other.dropped
        if isinstance(other, (list, tuple)):
            return list(self.spans) == list(other)
        return NotImplemented


def parse_response(raw: str, grid: int = DEFAULT_GRID) -> ParsedResponse:
    """Extract every ``<p>..</p><b>..</b>`` group from raw model output.

    A phrase without a following box group is kept with no pair; a box
    group that is not exactly two in-range location tokens drops the
    whole span and counts a warning.  Unclosed ``<p>`` fragments also
    count.  Never raises on malformed input.
    """
    spans: list[GroundedSpan] = []
    dropped = 0
    tail_parts: list[str] = []
    last = 0
    for m in _SPAN_RE.finditer(raw):
        tail_parts.append(raw[last : m.start()])
        last = m.end()
        text = m.group(1)
        if m.group(2) is None:
            spans.append(GroundedSpan(text=text, loc_pair=None))
            continue
        box_body = m.group(3)
        if not _LOC_RUN_RE.match(box_body):
            dropped += 1
            continue
        ids = [int(x) for x in _LOC_ID_RE.findall(box_body)]
        if len(ids) != 2 or any(i >= grid * grid for i in ids):
            dropped += 1
            continue
        spans.append(GroundedSpan(text=text, loc_pair=(LocToken(ids[0], grid), LocToken(ids[1], grid))))
    tail_parts.append(raw[last:])
    dropped += "".join(tail_parts).count(P_OPEN)
    return ParsedResponse(spans, dropped)


_MARKER_RE = re.compile(r"</?s>|</?img>|<grounding>|</?p>|</?b>|<loc_\d+>")


@dataclass(frozen=True)
class ProtocolToken:
    """One unit of a serialized sequence: a marker, a loc token, or a word."""

    text: str
    start: int
    end: int
    kind: str  # "marker" | "loc" | "word"


def tokenize_sequence(sequence: str) -> tuple[ProtocolToken, ...]:
    """Split a rendered sequence into atomic markers, loc tokens and words."""
    tokens: list[ProtocolToken] = []
    pos = 0
    for m in _MARKER_RE.finditer(sequence):
        for w in re.finditer(r"\S+", sequence[pos : m.start()]):
            tokens.append(ProtocolToken(w.group(), pos + w.start(), pos + w.end(), "word"))
        kind = "loc" if m.group().startswith("<loc_") else "marker"
        tokens.append(ProtocolToken(m.group(), m.start(), m.end(), kind))
        pos = m.end()
    for w in re.finditer(r"\S+", sequence[pos:]):
        tokens.append(ProtocolToken(w.group(), pos + w.start(), pos + w.end(), "word"))
    return tuple(tokens)


@dataclass(frozen=True)
class TrainingSample:
    """Serialized level sample with its loss mask.

    ``mask_spans`` lists one character range per location group, in
    sequence order (the final range is the target's); ``loss_mask``
    aligns with ``tokens`` and is the union of the ranges.
    """

    sequence: str
    tokens: tuple[ProtocolToken, ...]
    loss_mask: tuple[bool, ...]
    mask_spans: tuple[tuple[int, int], ...]

    @property
    def target_mask_span(self) -> tuple[int, int]:
        return self.mask_spans[-1]


def _render_grounded(text: str, pair: tuple[LocToken, LocToken]) -> str:
    return f"{P_OPEN}{text}{P_CLOSE}{B_OPEN}{pair[0].token}{pair[1].token}{B_CLOSE}"


def render_training_sample(
    instance,
    level_i: int,
    image_dims: tuple[int, int],
    grid: int = DEFAULT_GRID,
    target_index: int = 0,
    mask_delimiters: bool = False,
) -> TrainingSample:
    """Serialize one target expression of ``instance`` at ``level_i``.

    Level 1 renders the plain locate clause; higher levels embed every
    level-(i-1) expression with its gold box as the clue, comma-joined
    in instance order.  The loss mask covers the location groups only
    (extended to their ``<b>``/``</b>`` delimiters on request), never
    the scaffold.
    """
    width, height = image_dims
    if not 1 <= level_i <= instance.max_level:
        raise ValueError(f"level {level_i} outside 1..{instance.max_level}")
    targets = instance.at_level(level_i)
    if not targets:
        raise IncompleteInstanceError(f"no expressions at level {level_i}")
    target = targets[target_index]
    if level_i > 1:
        clues = instance.at_level(level_i - 1)
        if not clues:
            raise IncompleteInstanceError(f"no level-{level_i - 1} expressions to build the clue from")
        clue_body = ", ".join(
            _render_grounded(c.text, encode_bbox(c.bbox, width, height, grid)) for c in clues
        )
        body = f"{CLUE_PREFIX}{clue_body}. {LOCATE_PREFIX}"
    else:
        body = PLAIN_PREFIX
    body += _render_grounded(target.text, encode_bbox(target.bbox, width, height, grid))
    sequence = f"{SEQ_OPEN}{IMG_OPEN}{instance.image_id}{IMG_CLOSE}{GROUNDING}{body}{SEQ_CLOSE}"
    return _finish_sample(sequence, mask_delimiters)


def _finish_sample(sequence: str, mask_delimiters: bool) -> TrainingSample:
    tokens = tokenize_sequence(sequence)
    mask_spans: list[tuple[int, int]] = []
    i = 0
    while i < len(tokens):
        if tokens[i].text == B_OPEN:
            j = i + 1
            while j < len(tokens) and tokens[j].kind == "loc":
                j += 1
            if j < len(tokens) and tokens[j].text == B_CLOSE and j > i + 1:
                if mask_delimiters:
                    mask_spans.append((tokens[i].start, tokens[j].end))
                else:
                    mask_spans.append((tokens[i + 1].start, tokens[j - 1].end))
                i = j + 1
                continue
        i += 1
    loss_mask = tuple(
        any(t.start >= lo and t.end <= hi for lo, hi in mask_spans) for t in tokens
    )
    return TrainingSample(
        sequence=sequence,
        tokens=tokens,
        loss_mask=loss_mask,
        mask_spans=tuple(mask_spans),
    )


def render_level_samples(instance, level_i: int, image_dims, grid: int = DEFAULT_GRID, mask_delimiters: bool = False) -> list[TrainingSample]:
    """One TrainingSample per target expression at ``level_i``."""
    return [
        render_training_sample(instance, level_i, image_dims, grid, target_index=i, mask_delimiters=mask_delimiters)
        for i in range(len(instance.at_level(level_i)))
    ]


def render_prompt(image_ref: str, target_text: str, clues: Sequence[GroundedSpan] = ()) -> str:
    """Inference prompt: the training scaffold cut right after the target phrase.

    Every clue span must carry a location pair; clue-free calls reduce to
    the plain single-shot grounding prompt.
    """
    for c in clues:
        if c.loc_pair is None:
            raise InvalidLocPairError(f"clue span {c.text!r} has no location pair")
    if clues:
        clue_body = ", ".join(render_span(c) for c in clues)
        body = f"{CLUE_PREFIX}{clue_body}. {LOCATE_PREFIX}{P_OPEN}{target_text}{P_CLOSE}"
    else:
        body = f"{PLAIN_PREFIX}{P_OPEN}{target_text}{P_CLOSE}"
    return f"{SEQ_OPEN}{IMG_OPEN}{image_ref}{IMG_CLOSE}{GROUNDING}{body}"


def sample_to_record(sample: TrainingSample) -> dict:
    return {"sequence": sample.sequence, "mask_spans": [list(s) for s in sample.mask_spans]}
