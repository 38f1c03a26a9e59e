"""HTTP sidecar for the compoground toolkit.

Serves deterministic dependency + constituency parses for the toolkit's
template sublanguage, template-based chain phrasing, and a stand-in
grounding model, all behind the wire protocols the toolkit documents.
"""

from __future__ import annotations

__all__ = ["__version__"]

__version__ = "0.1.0"
