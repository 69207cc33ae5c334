"""Kernel backend selection.

Two interchangeable backends implement the hot numeric kernels:

* ``_core`` — Cython extension, built at install time.
* ``pylib`` — numpy fallback, always available.

The compiled backend is preferred when importable. ``STRESSFORMER_KERNELS``
forces a choice: ``compiled``, ``python``, or ``auto`` (default). Forcing
``compiled`` without a built extension is an import-time error rather than a
silent fallback.
"""

from __future__ import annotations

import os

from ..errors import ConfigError
from . import pylib

try:
    from . import _core
except ImportError:  # extension not built; numpy fallback carries the load
    _core = None

_choice = os.environ.get("STRESSFORMER_KERNELS", "auto").lower()
if _choice == "auto":
    _impl = _core if _core is not None else pylib
elif _choice == "compiled":
    if _core is None:
        raise ConfigError(
            "STRESSFORMER_KERNELS=compiled but the extension is not built"
        )
    _impl = _core
elif _choice == "python":
    _impl = pylib
else:
    raise ConfigError(
        f"STRESSFORMER_KERNELS must be auto|compiled|python, got {_choice!r}"
    )

BACKEND = _impl.NAME

matmul = _impl.matmul
bmm = _impl.bmm
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
adam_update = _impl.adam_update


def available_backends() -> dict[str, object]:
    """Importable backend modules keyed by name (for parity tests/benchmarks)."""
    found = {pylib.NAME: pylib}
    if _core is not None:
        found[_core.NAME] = _core
    return found
