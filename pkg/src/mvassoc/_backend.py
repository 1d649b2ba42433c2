"""Pick the compiled kernels when importable, else the pure-Python ones.

Set ``MVASSOC_PURE_PYTHON=1`` to force the fallback.
"""

import os

from mvassoc import _pykernels

if os.environ.get("MVASSOC_PURE_PYTHON") == "1":
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from mvassoc import _kernels as kernels
        NAME = "cython"
    except ImportError:
        kernels = _pykernels
        NAME = "python"

python_kernels = _pykernels


def compiled_kernels():
    """Return the compiled module, or None when the extension was not built."""
    try:
        from mvassoc import _kernels
    except ImportError:
        return None
    return _kernels
