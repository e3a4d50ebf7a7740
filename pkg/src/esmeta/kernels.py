"""Backend selection for the hot rollout kernel.

The compiled Cython extension is preferred; a pure-numpy fallback keeps the
package importable without a compiler. ESMETA_BACKEND=python|compiled
forces the choice (the benchmark uses this to compare both).
"""

from __future__ import annotations

import os

_requested = os.environ.get("ESMETA_BACKEND")

if _requested not in (None, "", "python", "compiled"):
    raise ImportError(f"ESMETA_BACKEND must be 'python' or 'compiled', got {_requested!r}")

if _requested == "python":
    from esmeta import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from esmeta import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from esmeta import _kernels_py as _impl

        BACKEND = "python"

FAMILY_VELOCITY = _impl.FAMILY_VELOCITY
FAMILY_DIRECTION = _impl.FAMILY_DIRECTION
FAMILY_POSITION = _impl.FAMILY_POSITION

point_rollout = _impl.point_rollout
