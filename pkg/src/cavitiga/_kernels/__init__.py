"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is unavailable or when ``CAVITIGA_FORCE_FALLBACK=1`` is set.
Both expose the same functions with identical numerical contracts, so the
benchmark suite can import each backend explicitly and compare.
"""

import os

from . import fallback

compiled = None
if os.environ.get("CAVITIGA_FORCE_FALLBACK", "0") != "1":
    try:
        from . import _core as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

active = compiled if compiled is not None else fallback

BACKEND = active.BACKEND
sym_triple_products = active.sym_triple_products
elasticity_blocks = active.elasticity_blocks

__all__ = ["BACKEND", "active", "compiled", "fallback",
           "sym_triple_products", "elasticity_blocks"]
