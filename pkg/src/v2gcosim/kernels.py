"""Backend selection for the numerical hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python ``_pykernels`` module is used. Setting ``V2GCOSIM_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _pykernels

if os.environ.get("V2GCOSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
OK = _pykernels.OK
COLLAPSE = _pykernels.COLLAPSE
NONFINITE = _pykernels.NONFINITE

shoot = _impl.shoot
shoot_profile = _impl.shoot_profile
rk4_freq = _impl.rk4_freq
droop = _impl.droop
advance = _impl.advance
