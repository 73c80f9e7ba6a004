"""Backend selection for the hot kernels.

Set ``SWEEPSFM_DISABLE_NUMBA=1`` to force the pure-numpy path.
"""

from __future__ import annotations

import os

ENV_FLAG = "SWEEPSFM_DISABLE_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except Exception:
        return False
    return True


USE_NUMBA = numba_requested() and numba_available()
