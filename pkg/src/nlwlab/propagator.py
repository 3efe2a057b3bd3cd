"""Exact spectral propagators of the linear wave group and the Duhamel integral."""
import threading

import numpy as np

from .randomizer import DataPair
from .spectral import SpectralField


def wave_symbols(abs_xi, t):
    """cos(t|xi|) and sin(t|xi|)/|xi| (the latter equal to t at xi = 0)."""
    w = abs_xi
    c = np.cos(t * w)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(w > 0, np.sin(t * w) / np.where(w > 0, w, 1.0), t)
    return c, s


def _real(grid, coeffs):
    return SpectralField(grid, coeffs, True)


def free_evolution(data, t):
    """u_f(t) = cos(t|D|) f1 + sin(t|D|)/|D| f2."""
    g = data.grid
    c, s = wave_symbols(g.abs_xi, t)
    return SpectralField(g, c * data.f1.coeffs + s * data.f2.coeffs, data.f1.is_real and data.f2.is_real)


def free_velocity(data, t):
    """d/dt u_f(t) = -|D| sin(t|D|) f1 + cos(t|D|) f2."""
    g = data.grid
    w = g.abs_xi
    c = np.cos(t * w)
    return SpectralField(g, -w * np.sin(t * w) * data.f1.coeffs + c * data.f2.coeffs,
                         data.f1.is_real and data.f2.is_real)


def modified_evolution(data, t):
    """Companion field with d/dt u_f = <D> (this field)."""
    g = data.grid
    w = g.abs_xi
    br = g.bracket_xi
    sym1 = -(w / br) * np.sin(t * w)
    sym2 = np.cos(t * w) / br
    return SpectralField(g, sym1 * data.f1.coeffs + sym2 * data.f2.coeffs,
                         data.f1.is_real and data.f2.is_real)


def linear_flow(state, t):
    """Evolve a state pair (v, dv/dt) by the free wave group for time t."""
    data = DataPair(state[0], state[1])
    return free_evolution(data, t), free_velocity(data, t)


def duhamel(forcing, times, t=None):
    """Trapezoid approximation of int_0^t sin((t-s)|D|)/|D| F(s) ds.

    ``forcing`` holds SpectralFields sampled at the uniform ``times``; t defaults
    to the last sample time.
    """
    if len(forcing) == 0:
        raise ValueError("empty forcing sample set")
    if len(forcing) != len(times):
        raise ValueError("one time per forcing sample is required")
    times = np.asarray(times, dtype=float)
    if len(forcing) < 2:
        raise ValueError("at least two forcing samples are required")
    d = np.diff(times)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0.0) or d[0] <= 0:
        raise ValueError("forcing samples must be uniform in time")
    if t is None:
        t = times[-1]
    g = forcing[0].grid
    w = np.full(times.size, d[0])
    w[0] = w[-1] = 0.5 * d[0]
    acc = np.zeros(g.shape, dtype=complex)
    for wj, sj, F in zip(w, times, forcing):
        _, s = wave_symbols(g.abs_xi, t - sj)
        acc += wj * s * F.coeffs
    return SpectralField(g, acc, all(F.is_real for F in forcing))


class FreeEvolutionSampler:
    """Free and modified evolutions of fixed randomized data at arbitrary times.

    Multiplier tables are cached per time; the cache is guarded so concurrent
    readers are safe and one writer fills a missing entry.
    """

    def __init__(self, data, cache_size=256):
        self.data = data
        self.grid = data.grid
        self._h1 = data.f1.half()
        self._h2 = data.f2.half()
        self._cache = {}
        self._cache_size = cache_size
        self._lock = threading.Lock()

    def _tables(self, t):
        key = float(t)
        tab = self._cache.get(key)
        if tab is None:
            w = self.grid.abs_xi_half
            c, s = wave_symbols(w, key)
            sn = np.sin(key * w)
            tab = (c, s, -w * sn)
            with self._lock:
                if len(self._cache) >= self._cache_size:
                    self._cache.clear()
                self._cache[key] = tab
        return tab

    def u_half(self, t):
        c, s, _ = self._tables(t)
        return c * self._h1 + s * self._h2

    def ut_half(self, t):
        c, _, ws = self._tables(t)
        return ws * self._h1 + c * self._h2

    def utilde_half(self, t):
        return self.ut_half(t) / self.grid.bracket_xi_half

    def u(self, t):
        return SpectralField.from_half(self.grid, self.u_half(t))

    def ut(self, t):
        return SpectralField.from_half(self.grid, self.ut_half(t))

    def utilde(self, t):
        return SpectralField.from_half(self.grid, self.utilde_half(t))

    def u_physical(self, t, oversample=1):
        return self.grid.half_to_physical(self.u_half(t), oversample)
