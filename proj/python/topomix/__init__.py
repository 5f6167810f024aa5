"""Mixed linear/circular coordinates for multichannel motion series."""

try:
    from ._topomix import *  # noqa: F401,F403  (installed package layout)
    from . import _topomix as _impl
except ImportError:
    from _topomix import *  # noqa: F401,F403  (in-tree build on PYTHONPATH)
    import _topomix as _impl

__all__ = [name for name in dir(_impl) if not name.startswith("_")]
__version__ = "0.1.0"
