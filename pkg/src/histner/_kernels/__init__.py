"""Hot scoring kernels: compiled extension when available, pure Python otherwise.

Set HISTNER_PURE_PYTHON=1 to force the fallback regardless of what is built.
"""

import os

if os.environ.get("HISTNER_PURE_PYTHON"):
    from ._overlap_py import overlap_scores
    HAVE_COMPILED = False
else:
    try:
        from ._overlap import overlap_scores  # type: ignore[attr-defined]
        HAVE_COMPILED = True
    except ImportError:
        from ._overlap_py import overlap_scores
        HAVE_COMPILED = False

__all__ = ["overlap_scores", "HAVE_COMPILED"]
