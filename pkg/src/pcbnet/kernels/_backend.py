"""Pick the compiled core when it imports, the numpy fallback otherwise.

``PCBNET_BACKEND`` (``auto``, ``compiled``, ``python``) overrides the choice at
import time; ``use_backend`` switches at runtime (tests and benchmarks).
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_BACKENDS = {"python": _fallback}
if _core is not None:
    _BACKENDS["compiled"] = _core

impl = _fallback
name = "python"


def available_backends():
    return sorted(_BACKENDS)


def use_backend(which):
    global impl, name
    if which == "auto":
        which = "compiled" if "compiled" in _BACKENDS else "python"
    if which not in _BACKENDS:
        raise ValueError(f"backend {which!r} unavailable; have {available_backends()}")
    impl = _BACKENDS[which]
    name = which
    return name


use_backend(os.environ.get("PCBNET_BACKEND", "auto"))
