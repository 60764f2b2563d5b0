"""Backend selection for the mode-field synthesis kernel.

The compiled extension is used when it was built; setting the environment
variable ``CAVITYSHAPE_PURE=1`` forces the numpy implementation.
"""
import os

from . import _pykernels

GRAD, TE, TM = _pykernels.GRAD, _pykernels.TE, _pykernels.TM

BACKEND = "python"
synthesize = _pykernels.synthesize
if os.environ.get("CAVITYSHAPE_PURE", "") not in ("1", "true", "yes"):
    try:
        from ._ckernels import synthesize  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

python_synthesize = _pykernels.synthesize
