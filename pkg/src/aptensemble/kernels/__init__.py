"""Dense-layer kernels with backend selection at import time.

Prefers the compiled extension (built by setup.py); falls back to the
numpy implementation when the extension is absent. Set APTENSEMBLE_PURE_PY=1
to force the fallback, e.g. for benchmarking or debugging.
"""

import os

if os.environ.get("APTENSEMBLE_PURE_PY"):
    from . import _dense_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _dense as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _dense_py as _impl

        BACKEND = "python"

ACT_IDENTITY = _impl.ACT_IDENTITY
ACT_RELU = _impl.ACT_RELU
ACT_SIGMOID = _impl.ACT_SIGMOID
ACT_TANH = _impl.ACT_TANH

layer_forward = _impl.layer_forward
layer_backward = _impl.layer_backward

__all__ = [
    "BACKEND",
    "ACT_IDENTITY",
    "ACT_RELU",
    "ACT_SIGMOID",
    "ACT_TANH",
    "layer_forward",
    "layer_backward",
]
