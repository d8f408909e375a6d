"""Backend selection for the transmission hot loop.

The compiled extension is used when importable; set
``HYBRIDTD_PURE_PYTHON=1`` to force the reference implementation.
"""
import os

from . import _kernel_py

if os.environ.get("HYBRIDTD_PURE_PYTHON") == "1":
    _impl = _kernel_py
else:
    try:
        from . import _kernel as _impl
    except ImportError:
        _impl = _kernel_py

BACKEND = "compiled" if _impl is not _kernel_py else "python"

OK = _kernel_py.OK
NETWORK_DIVERGED = _kernel_py.NETWORK_DIVERGED
TRIPPED = _kernel_py.TRIPPED

solve_network = _impl.solve_network
integrate = _impl.integrate


def get_backend(name):
    """Return the kernel module by name (``"compiled"`` or ``"python"``)."""
    if name == "python":
        return _kernel_py
    from . import _kernel
    return _kernel
