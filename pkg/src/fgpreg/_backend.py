"""Selects the compiled covariance core when available, NumPy otherwise.

Set ``FGPREG_BACKEND=numpy`` to force the fallback (used by the benchmark
and by tests that compare the two implementations).
"""

import os

from . import _core_py

if os.environ.get("FGPREG_BACKEND", "").lower() == "numpy":
    core = _core_py
else:
    try:
        from . import _core as core  # type: ignore[no-redef]
    except ImportError:
        core = _core_py

BACKEND_NAME = core.BACKEND_NAME

matern_from_dist = core.matern_from_dist
pairwise_distances = core.pairwise_distances
matern_pairwise = core.matern_pairwise
assemble_blocks = core.assemble_blocks
assemble_cross = core.assemble_cross
block_add = core.block_add
block_collapse = core.block_collapse
col_collapse = core.col_collapse
symmetrize_lower = core.symmetrize_lower
