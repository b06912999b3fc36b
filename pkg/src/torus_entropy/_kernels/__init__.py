"""Hot prefix-tree kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; set
``TORUS_ENTROPY_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
active implementation.  Exact-rational inputs always take the Python path.
"""

import os

from . import _pykernels as python

compiled = None
if os.environ.get("TORUS_ENTROPY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # pragma: no cover - depends on the build
        compiled = None

BACKEND = "compiled" if compiled is not None else "python"

__all__ = ["python", "compiled", "BACKEND"]
