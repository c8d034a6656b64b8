"""Kernel dispatch: compiled numba loops, or numpy when ``KGFGR_DISABLE_NUMBA`` is set."""
from . import _np_kernels as numpy_impl
from ._accel import USE_NUMBA

if USE_NUMBA:
    from . import _jit_kernels as impl
else:
    impl = numpy_impl

dominated_mask = impl.dominated_mask
integrate_modes = impl.integrate_modes
kg_evolve = impl.kg_evolve
