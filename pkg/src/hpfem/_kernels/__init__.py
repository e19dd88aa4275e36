"""Kernel backend selection.

The compiled Cython module is used when it imported successfully; setting
HPFEM_PURE_PYTHON=1 (or a missing build) selects the numpy fallback. Both
expose the same functions; ``tests/test_kernels.py`` checks they agree.
"""

import os

from . import _fallback

if os.environ.get("HPFEM_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    backend = _fallback
else:
    try:
        from . import _core as backend  # type: ignore[attr-defined]
    except ImportError:
        backend = _fallback

IS_COMPILED = backend.IS_COMPILED

legendre_table = backend.legendre_table
shape_table = backend.shape_table
scalar_stiffness = backend.scalar_stiffness
mass_matrix = backend.mass_matrix
load_vector = backend.load_vector
elastic_stiffness = backend.elastic_stiffness
coupling_block = backend.coupling_block
chi_blocks = backend.chi_blocks
