"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twins are used. Setting ``PANELDML_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if not os.environ.get("PANELDML_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

lasso_path_gram = _impl.lasso_path_gram
grow_tree = _impl.grow_tree
predict_tree = _impl.predict_tree

__all__ = ["BACKEND", "lasso_path_gram", "grow_tree", "predict_tree"]
