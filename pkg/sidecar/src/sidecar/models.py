"""Grounding model registry for the /model endpoint.

Ships one built-in model: a deterministic stand-in that answers every
grounding prompt with the target phrase and a box pair derived from a
hash of the image reference and the phrase.  Real checkpoints can be
added to the registry; the service reports 503 when the configured model
fails to load.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

GRID = 32

_TARGET_RE = re.compile(r"<p>(.*?)</p>", re.DOTALL)


class ModelLoadError(RuntimeError):
    """The configured grounding model cannot be constructed."""


@dataclass(frozen=True)
class EchoBoxModel:
    """Deterministic stand-in grounder.

    Emits the prompt's target phrase back with an ordered location pair
    drawn from a hash, so responses are stable across runs and parse as
    one grounded span.
    """

    name: str = "echo-box-v0"

    def generate(self, image_ref: str, prompt: str, max_length: int, temperature: float) -> str:
        del max_length, temperature  # deterministic regardless of budget
        targets = _TARGET_RE.findall(prompt)
        phrase = targets[-1] if targets else ""
        digest = hashlib.sha256(f"{image_ref}\x00{phrase}".encode("utf-8")).digest()
        half = GRID // 2
        tl_row = digest[0] % half
        tl_col = digest[1] % half
        br_row = tl_row + 1 + digest[2] % (GRID - tl_row - 1)
        br_col = tl_col + 1 + digest[3] % (GRID - tl_col - 1)
        tl = tl_row * GRID + tl_col
        br = br_row * GRID + br_col
        if not phrase:
            return f"<b><loc_{tl}><loc_{br}></b></s>"
        return f"<p>{phrase}</p><b><loc_{tl}><loc_{br}></b></s>"


_REGISTRY = {
    "echo-box-v0": EchoBoxModel,
}


def load_model(name: str):
    """Construct the named grounding model; raise ModelLoadError otherwise."""
    factory = _REGISTRY.get(name)
    if factory is None:
        known = ", ".join(sorted(_REGISTRY))
        raise ModelLoadError(f"unknown grounding model {name!r} (available: {known})")
    return factory()
