"""Transform provider.

FFTW (through pyfftw) is used when importable, otherwise scipy.fft.  Plans
are built with FFTW_ESTIMATE and a single thread so that results are bitwise
reproducible for a fixed shape; they are cached per thread because FFTW
plan objects own their scratch buffers.
"""
import threading

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import pyfftw

    _HAVE_FFTW = True
except ImportError:  # pragma: no cover
    _HAVE_FFTW = False
    import scipy.fft as _sfft

_local = threading.local()

BACKEND = "fftw" if _HAVE_FFTW else "scipy"


def _plan(kind, shape, in_dtype):
    cache = getattr(_local, "plans", None)
    if cache is None:
        cache = _local.plans = {}
    key = (kind, shape, in_dtype)
    plan = cache.get(key)
    if plan is None:
        if kind == "irfftn":
            a = pyfftw.empty_aligned(shape, dtype="complex128")
            out_shape = shape[:-1] + (2 * (shape[-1] - 1),)
            plan = pyfftw.builders.irfftn(a, s=out_shape, threads=1,
                                          planner_effort="FFTW_ESTIMATE")
        else:
            a = pyfftw.empty_aligned(shape, dtype=in_dtype)
            builder = getattr(pyfftw.builders, kind)
            plan = builder(a, threads=1, planner_effort="FFTW_ESTIMATE")
        cache[key] = plan
    return plan


def _run(plan, a, **kw):
    # always go through the plan's own buffers: c2r plans destroy their input
    plan.input_array[...] = a
    return plan(**kw).copy()


def fftn(a):
    a = np.asarray(a, dtype=complex)
    if not _HAVE_FFTW:
        return _sfft.fftn(a, workers=1)
    return _run(_plan("fftn", a.shape, "complex128"), a)


def ifftn(a):
    """Inverse transform *without* the 1/N normalisation."""
    a = np.asarray(a, dtype=complex)
    if not _HAVE_FFTW:
        return _sfft.ifftn(a, norm="forward", workers=1)
    return _run(_plan("ifftn", a.shape, "complex128"), a, normalise_idft=False)


def rfftn(a):
    a = np.asarray(a, dtype=float)
    if not _HAVE_FFTW:
        return _sfft.rfftn(a, workers=1)
    return _run(_plan("rfftn", a.shape, "float64"), a)


def irfftn(a):
    """Inverse real transform of a half spectrum (even last axis), unnormalised."""
    a = np.asarray(a, dtype=complex)
    if not _HAVE_FFTW:
        shape = a.shape[:-1] + (2 * (a.shape[-1] - 1),)
        return _sfft.irfftn(a, s=shape, norm="forward", workers=1)
    return _run(_plan("irfftn", a.shape, "complex128"), a, normalise_idft=False)
