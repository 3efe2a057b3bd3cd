"""Periodic-box grid, spectral fields, Fourier multipliers, projections and norms.

A field on the box [0, L)^3, L = 2*pi*M, is stored through its coefficients
on the orthonormal basis exp(i xi.x) / L^{3/2}, xi on the dual lattice
(1/M) Z^3 truncated to points_per_axis modes per axis.  With this
normalisation Parseval is an identity between the coefficient l2 norm and
the physical L2 norm, and refining the grid at fixed M leaves the
coefficients of a band-limited function unchanged.
"""
from collections import namedtuple
from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
from scipy.integrate import trapezoid

from . import _fft


def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the periodic box and of its dual lattice."""

    points_per_axis: int
    box_multiple: int

    @property
    def n(self):
        return self.points_per_axis

    @property
    def shape(self):
        return (self.n,) * 3

    @property
    def half_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def box_length(self):
        return 2.0 * math.pi * self.box_multiple

    @property
    def spacing(self):
        return self.box_length / self.n

    @property
    def dual_spacing(self):
        return 1.0 / self.box_multiple

    @property
    def volume(self):
        return self.box_length ** 3

    @property
    def cell_volume(self):
        return self.spacing ** 3

    @property
    def band_edge(self):
        """Largest |xi_i| on the lattice (the Nyquist frequency)."""
        return self.n / (2.0 * self.box_multiple)

    @cached_property
    def freqs(self):
        return np.fft.fftfreq(self.n, d=1.0 / self.n) / self.box_multiple

    @cached_property
    def xi(self):
        f = self.freqs
        return (f[:, None, None], f[None, :, None], f[None, None, :])

    @cached_property
    def xi_half(self):
        f = self.freqs
        fz = np.abs(f[: self.n // 2 + 1])
        return (f[:, None, None], f[None, :, None], fz[None, None, :])

    @cached_property
    def abs_xi(self):
        a, b, c = self.xi
        return np.sqrt(a * a + b * b + c * c)

    @cached_property
    def abs_xi_half(self):
        a, b, c = self.xi_half
        return np.sqrt(a * a + b * b + c * c)

    @cached_property
    def bracket_xi(self):
        return np.sqrt(1.0 + self.abs_xi ** 2)

    @cached_property
    def bracket_xi_half(self):
        return np.sqrt(1.0 + self.abs_xi_half ** 2)

    @cached_property
    def reflection(self):
        """Index map n -> -n (mod points_per_axis) along one axis."""
        return (-np.arange(self.n)) % self.n

    @cached_property
    def half_multiplicity(self):
        """Parseval weights of the half spectrum (planes kz=0 and kz=n/2 count once)."""
        w = np.full(self.half_shape, 2.0)
        w[:, :, 0] = 1.0
        w[:, :, -1] = 1.0
        return w

    @cached_property
    def nyquist_mask(self):
        idx = np.arange(self.n) == self.n // 2
        return idx[:, None, None] | idx[None, :, None] | idx[None, None, :]

    @cached_property
    def nyquist_mask_half(self):
        return self.nyquist_mask[:, :, : self.n // 2 + 1]

    @cached_property
    def coordinates(self):
        x = np.arange(self.n) * self.spacing
        return (x[:, None, None], x[None, :, None], x[None, None, :])

    @property
    def unitary_scale(self):
        return self.box_length ** 1.5

    # -- half-spectrum machinery used by the time integrators ------------

    def half_to_physical(self, h, oversample=1):
        """Real samples of a half spectrum on the (oversampled) grid."""
        if oversample != 1:
            h = pad_half(h, self.n * oversample)
        return _fft.irfftn(h) / self.unitary_scale

    def physical_to_half(self, u, drop_nyquist=True):
        """Half spectrum on this grid of real samples on an m^3 grid, m >= n."""
        m = u.shape[0]
        h = _fft.rfftn(u) * (self.unitary_scale / m ** 3)
        if m != self.n:
            h = truncate_half(h, self.n)
        if drop_nyquist:
            h[self.nyquist_mask_half] = 0.0
        return h

    def half_inner(self, a, b):
        """Real L2 pairing of two real fields given by half spectra."""
        return float(np.sum(self.half_multiplicity * (a.real * b.real + a.imag * b.imag)))

    def half_norm2(self, a, weight=None):
        s = self.half_multiplicity * (a.real ** 2 + a.imag ** 2)
        if weight is not None:
            s = s * weight
        return float(np.sum(s))


def _block_pairs(n, m):
    # (source, destination) slices of the first two axes of an n- vs m-point layout
    h = n // 2
    lo = (slice(0, h), slice(0, h))
    hi = (slice(h + 1, n), slice(m - h + 1, m))
    return [(lo, lo), (hi, hi)]


def pad_half(h, m):
    """Zero-pad a half spectrum of an n^3 grid to an m^3 grid, dropping Nyquist modes."""
    n = h.shape[0]
    out = np.zeros((m, m, m // 2 + 1), dtype=complex)
    z = slice(0, n // 2)
    for sx, dx in _block_pairs(n, m):
        for sy, dy in _block_pairs(n, m):
            out[dx[1], dy[1], z] = h[sx[0], sy[0], z]
    return out


def truncate_half(H, n):
    """Restrict an m^3 half spectrum to the n^3 lattice (Nyquist entries left zero)."""
    m = H.shape[0]
    out = np.zeros((n, n, n // 2 + 1), dtype=complex)
    z = slice(0, n // 2)
    for sx, dx in _block_pairs(n, m):
        for sy, dy in _block_pairs(n, m):
            out[sx[0], sy[0], z] = H[dx[1], dy[1], z]
    return out


def _pad_axis(a, axis, m):
    n = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = m
    out = np.zeros(shape, dtype=complex)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    src[axis], dst[axis] = slice(0, n // 2), slice(0, n // 2)
    out[tuple(dst)] = a[tuple(src)]
    src[axis], dst[axis] = slice(n // 2 + 1, n), slice(m - n // 2 + 1, m)
    out[tuple(dst)] = a[tuple(src)]
    # the Nyquist coefficient is split evenly between +n/2 and -n/2
    src[axis] = n // 2
    half_nyq = 0.5 * a[tuple(src)]
    dst[axis] = n // 2
    out[tuple(dst)] = half_nyq
    dst[axis] = m - n // 2
    out[tuple(dst)] = half_nyq
    return out


def pad_full(c, m):
    for axis in range(3):
        c = _pad_axis(c, axis, m)
    return c


def make_grid(points_per_axis, box_multiple=2):
    """Grid with box_length = 2*pi*box_multiple, so integer frequencies are lattice points."""
    if not _is_power_of_two(points_per_axis) or points_per_axis < 8:
        raise ValueError(f"points_per_axis must be a power of two >= 8, got {points_per_axis}")
    if int(box_multiple) != box_multiple or box_multiple < 2:
        raise ValueError(f"box_multiple must be an integer >= 2, got {box_multiple}")
    return GridSpec(int(points_per_axis), int(box_multiple))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of one scalar field on the dual lattice (fft ordering)."""

    grid: GridSpec
    coeffs: np.ndarray
    is_real: bool = False

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    @classmethod
    def zeros(cls, grid, is_real=True):
        return cls(grid, np.zeros(grid.shape, dtype=complex), is_real)

    @classmethod
    def from_half(cls, grid, h):
        """Rebuild a real field from its half spectrum."""
        n = grid.n
        c = np.empty(grid.shape, dtype=complex)
        c[:, :, : n // 2 + 1] = h
        r = grid.reflection
        kz = np.arange(n // 2 + 1, n)
        c[:, :, kz] = np.conj(h[np.ix_(r, r, (-kz) % n)])
        return cls(grid, c, True)

    def half(self):
        return self.coeffs[:, :, : self.grid.n // 2 + 1].copy()

    def physical(self, oversample=1):
        """Samples on the grid refined ``oversample`` times (trigonometric interpolation)."""
        c = self.coeffs
        if oversample != 1:
            c = pad_full(c, self.grid.n * oversample)
        scale = self.grid.unitary_scale
        if self.is_real:
            m = c.shape[0]
            return _fft.irfftn(c[:, :, : m // 2 + 1]) / scale
        return _fft.ifftn(c) / scale

    def conjugate(self):
        """Spectral representation of the complex conjugate field."""
        r = self.grid.reflection
        return SpectralField(self.grid, np.conj(self.coeffs[np.ix_(r, r, r)]), self.is_real)

    def hermitian_defect(self):
        r = self.grid.reflection
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[np.ix_(r, r, r)]))))

    def l2(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def _combine(self, other, op):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return SpectralField(self.grid, op(self.coeffs, other.coeffs), self.is_real and other.is_real)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs, self.is_real)

    def __mul__(self, a):
        if not np.isscalar(a):
            return NotImplemented
        real = self.is_real and np.isreal(a)
        return SpectralField(self.grid, self.coeffs * a, bool(real))

    __rmul__ = __mul__


def hermitian_symmetrize(c, grid):
    r = grid.reflection
    return 0.5 * (c + np.conj(c[np.ix_(r, r, r)]))


def transform(samples, grid):
    """Physical samples -> SpectralField (unitary normalisation)."""
    samples = np.asarray(samples)
    if samples.shape != grid.shape:
        raise ValueError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    c = _fft.fftn(samples) * (grid.unitary_scale / grid.n ** 3)
    if np.isrealobj(samples):
        return SpectralField(grid, hermitian_symmetrize(c, grid), True)
    return SpectralField(grid, c, False)


def inverse_transform(field, oversample=1):
    return field.physical(oversample)


def field_from_half(grid, h):
    return SpectralField.from_half(grid, h)


# -- multipliers ---------------------------------------------------------


def bracket_symbol(sigma):
    """<xi>^sigma."""
    return lambda a, b, c: (1.0 + a * a + b * b + c * c) ** (0.5 * sigma)


def riesz_symbol(sigma):
    """|xi|^sigma (supply the xi = 0 value separately when sigma <= 0)."""
    return lambda a, b, c: (a * a + b * b + c * c) ** (0.5 * sigma)


def evaluate_symbol(grid, symbol, zero_value=None):
    if callable(symbol):
        with np.errstate(all="ignore"):
            values = np.broadcast_to(symbol(*grid.xi), grid.shape).astype(complex)
    else:
        values = np.broadcast_to(np.asarray(symbol, dtype=complex), grid.shape).copy()
    if zero_value is not None:
        values[0, 0, 0] = zero_value
    if not np.all(np.isfinite(values)):
        raise ValueError("multiplier symbol is not finite on the lattice")
    return values


def apply_multiplier(field, symbol, zero_value=None):
    """Coefficientwise product with a symbol (callable of xi, or array)."""
    m = evaluate_symbol(field.grid, symbol, zero_value)
    out = field.coeffs * m
    if field.is_real:
        r = field.grid.reflection
        if np.allclose(np.conj(m[np.ix_(r, r, r)]), m, rtol=1e-14, atol=0.0):
            return SpectralField(field.grid, hermitian_symmetrize(out, field.grid), True)
    return SpectralField(field.grid, out, False)


# -- unit-scale partition of unity ---------------------------------------


def _bump(o, rho):
    q = (o ** 2).sum(axis=-1) / rho ** 2
    out = np.zeros(q.shape)
    inside = q < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - q[inside]))
    return out


class UnitPartition:
    """Smooth partition of unity psi(xi - k), k in Z^3, tabulated on the dual lattice.

    psi is a normalised radial bump of radius rho; on the lattice (1/M)Z^3 it is
    only needed at the offsets j/M with |j/M| < rho.
    """

    def __init__(self, grid, rho=0.99, k_max=None):
        if not (math.sqrt(3) / 2 < rho < 1.0):
            raise ValueError("rho must lie in (sqrt(3)/2, 1) for the cells to cover and fit in unit balls")
        M = grid.box_multiple
        self.grid = grid
        self.rho = rho
        default_kmax = grid.n // (2 * M) - 1
        self.k_max = default_kmax if k_max is None else int(k_max)
        if not 0 <= self.k_max <= default_kmax:
            raise ValueError(f"k_max must be in [0, {default_kmax}] for this grid")
        r = np.arange(-(M - 1), M)
        J = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        O = J / M
        phi0 = _bump(O, rho)
        keep = phi0 > 0
        J, O, phi0 = J[keep], O[keep], phi0[keep]
        shifts = np.stack(np.meshgrid(*([np.arange(-1, 2)] * 3), indexing="ij"), axis=-1).reshape(-1, 3)
        denom = np.array([_bump(o[None, :] - shifts, rho).sum() for o in O])
        psi = phi0 / denom
        # enforce exact evenness psi(j) == psi(-j)
        lookup = {tuple(j): v for j, v in zip(J, psi)}
        psi = np.array([0.5 * (lookup[tuple(j)] + lookup[tuple(-j)]) for j in J])
        self.offsets = J
        self.values = psi

    def psi_at(self, offset):
        """psi at lattice offset j/M (zero outside the stencil)."""
        for j, v in zip(self.offsets, self.values):
            if tuple(j) == tuple(offset):
                return float(v)
        return 0.0

    def residue_sums(self):
        """sum_k psi(xi - k) for every residue class of xi mod 1 on the lattice."""
        M = self.grid.box_multiple
        sums = {}
        for j, v in zip(self.offsets, self.values):
            key = tuple(int(x) % M for x in j)
            sums[key] = sums.get(key, 0.0) + v
        return sums

    @cached_property
    def cells(self):
        r = np.arange(-self.k_max, self.k_max + 1)
        return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)

    def check_cell(self, k):
        k = np.asarray(k, dtype=int)
        if k.shape != (3,) or np.max(np.abs(k)) > self.k_max:
            raise ValueError(f"cell {tuple(k)} outside the retained range |k|_inf <= {self.k_max}")
        return k

    def combine(self, amplitudes):
        """sum_k a_k psi(xi - k) as a full-lattice array; amplitudes indexed by cube position."""
        a = np.asarray(amplitudes)
        K = 2 * self.k_max + 1
        if a.shape != (K, K, K):
            raise ValueError(f"amplitudes must have shape {(K, K, K)}")
        n, M = self.grid.n, self.grid.box_multiple
        ext = np.zeros((n, n, n), dtype=np.result_type(a, float))
        base = -M * self.k_max + n // 2
        stop = base + M * (K - 1) + 1
        for j, v in zip(self.offsets, self.values):
            s = [slice(base + j[i], stop + j[i], M) for i in range(3)]
            ext[s[0], s[1], s[2]] += v * a
        return np.fft.ifftshift(ext)

    def cell_entries(self, k):
        """fft-ordered lattice indices touched by psi(xi - k) and the psi values there."""
        k = self.check_cell(k)
        idx = (self.grid.box_multiple * k[None, :] + self.offsets) % self.grid.n
        return idx[:, 0], idx[:, 1], idx[:, 2], self.values

    def cell_multiplier(self, k):
        ix, iy, iz, v = self.cell_entries(k)
        m = np.zeros(self.grid.shape)
        m[ix, iy, iz] = v
        return m

    @cached_property
    def window(self):
        """sum of psi(xi - k) over the retained cells."""
        K = 2 * self.k_max + 1
        return self.combine(np.ones((K, K, K)))

    @cached_property
    def interior_mask(self):
        """Lattice points touched by retained cells only (the window equals 1 there)."""
        a, b, c = self.grid.xi
        edge = self.k_max + 1 - self.rho
        return (np.abs(a) < edge) & (np.abs(b) < edge) & (np.abs(c) < edge)


def unit_projection(field, k, partition):
    """P_k f: multiply the coefficients by psi(xi - k)."""
    ix, iy, iz, v = partition.cell_entries(k)
    c = np.zeros(field.grid.shape, dtype=complex)
    c[ix, iy, iz] = field.coeffs[ix, iy, iz] * v
    return SpectralField(field.grid, c, field.is_real and not np.any(k))


def unit_bernstein_ratios(fields, partition, oversample=2, chunk=32):
    """Per-cell maximum over ``fields`` of ||P_k f||_inf / ||P_k f||_2.

    |P_k f| is the modulus of a trigonometric polynomial with the few offsets of
    the psi stencil, so it is evaluated on the refined grid by three separable
    contractions instead of a full inverse transform per cell.
    """
    g = partition.grid
    M = g.box_multiple
    m = oversample * g.n
    x = np.arange(m) * (g.box_length / m)
    w = np.arange(-(M - 1), M)
    E = np.exp(1j * np.outer(w / M, x))
    off = partition.offsets + (M - 1)
    entries = [partition.cell_entries(k) for k in partition.cells]
    ratios = np.zeros(len(entries))
    for f in fields:
        cube = np.zeros((len(entries), 2 * M - 1, 2 * M - 1, 2 * M - 1), dtype=complex)
        for i, (ix, iy, iz, v) in enumerate(entries):
            cube[i, off[:, 0], off[:, 1], off[:, 2]] = f.coeffs[ix, iy, iz] * v
        l2 = np.sqrt(np.sum(np.abs(cube) ** 2, axis=(1, 2, 3)))
        peak = np.empty(len(entries))
        for s in range(0, len(entries), chunk):
            q = np.tensordot(cube[s:s + chunk], E, axes=([3], [0]))
            q = np.tensordot(q, E, axes=([2], [0]))
            q = np.tensordot(q, E, axes=([1], [0]))
            peak[s:s + chunk] = np.abs(q).reshape(len(q), -1).max(axis=1) / g.unitary_scale
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(l2 > 0, peak / l2, 0.0)
        ratios = np.maximum(ratios, r)
    return ratios


def bernstein_shell_means(ratios, partition):
    """Mean per-cell ratio on each shell |k|_inf = 0, 1, ..., k_max."""
    shell = np.max(np.abs(partition.cells), axis=1)
    return np.array([ratios[shell == j].mean() for j in range(partition.k_max + 1)])


# -- Littlewood-Paley ------------------------------------------------------


def _smooth_step(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def lp_bump(r):
    """Radial phi: 1 on |xi| <= 1, 0 on |xi| >= 2, smooth in between."""
    r = np.asarray(r, dtype=float)
    a = _smooth_step(2.0 - r)
    b = _smooth_step(r - 1.0)
    return a / (a + b)


def lp_symbol(grid, N, fattened=False):
    if not _is_power_of_two(N):
        raise ValueError(f"Littlewood-Paley scale must be a dyadic integer >= 1, got {N}")
    r = grid.abs_xi
    if N == 1:
        return lp_bump(r / 2.0) if fattened else lp_bump(r)
    if fattened:
        return lp_bump(r / (2.0 * N)) - lp_bump(4.0 * r / N)
    return lp_bump(r / N) - lp_bump(2.0 * r / N)


def lp_projection(field, N, fattened=False):
    m = lp_symbol(field.grid, N, fattened)
    return SpectralField(field.grid, field.coeffs * m, field.is_real)


def dyadic_scales(grid):
    """Dyadic N = 1, 2, 4, ... up to the first N whose block covers the whole lattice."""
    top = float(grid.abs_xi.max())
    scales = [1]
    while scales[-1] < top:
        scales.append(2 * scales[-1])
    return scales


# -- norms ---------------------------------------------------------------


def _dyadic_exponent(r):
    # exponents 2, 4, 8, ... are evaluated by squaring so doubling a field doubles its norm exactly
    if r >= 2 and float(r).is_integer():
        k = int(r)
        if k & (k - 1) == 0:
            return k.bit_length() - 1
    return None


def abs_power(x, r):
    """|x|^r elementwise."""
    x = np.abs(x)
    k = _dyadic_exponent(r)
    if k is None:
        return x ** r
    for _ in range(k):
        x = x * x
    return x


def root(s, r):
    """s^{1/r}, computed with square roots for dyadic r."""
    k = _dyadic_exponent(r)
    if k is None:
        return s ** (1.0 / r)
    for _ in range(k):
        s = math.sqrt(s)
    return s


def lebesgue_norm(field, r, oversample=None):
    """L^r norm by collocation quadrature; L^inf is a grid maximum on a 2x refined grid."""
    if not r >= 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r}")
    if oversample is None:
        oversample = 2 if np.isinf(r) else 1
    u = np.abs(field.physical(oversample))
    if not np.all(np.isfinite(u)):
        raise ValueError("field is not finite")
    if np.isinf(r):
        return float(u.max())
    return samples_norm(u, r, field.grid.volume / u.size)


def samples_norm(u, r, dv):
    """Quadrature L^r norm of samples with cell volume dv (maximum for r = inf)."""
    if np.isinf(r):
        return float(np.max(np.abs(u)))
    return float(root(dv * float(np.sum(abs_power(u, r))), r))


def sobolev_norm(field, sigma, homogeneous=False):
    """H^sigma (weight <xi>^{2 sigma}) or homogeneous (|xi|^{2 sigma}) norm by Parseval."""
    g = field.grid
    c2 = np.abs(field.coeffs) ** 2
    if homogeneous:
        # the zero mode only needs to vanish to rounding
        if sigma < 0 and c2[0, 0, 0] > 1e-24 * float(np.sum(c2)):
            raise ValueError("negative homogeneous norm needs a vanishing zero mode")
        with np.errstate(divide="ignore"):
            w = g.abs_xi ** (2.0 * sigma)
        w[0, 0, 0] = 1.0 if sigma == 0 else 0.0
    else:
        w = g.bracket_xi ** (2.0 * sigma)
    return float(np.sqrt(np.sum(c2 * w)))


@dataclass(frozen=True)
class MixedNormSpec:
    """Exponents of a weighted norm ||<t>^{-delta} u||_{L^q_t L^r_x([0, T])}."""

    q: float
    r: float
    delta: float = 0.0
    T: float = None

    def __post_init__(self):
        if not self.q >= 1 or not self.r >= 1:
            raise ValueError("time and space exponents must be >= 1")
        if self.delta < 0:
            raise ValueError("weight exponent must be non-negative")
        if self.T is not None and self.T < 0:
            raise ValueError("time horizon must be non-negative")


def time_norm(times, values, q, delta=0.0):
    """Trapezoid L^q_t norm of <t>^{-delta} * values on a uniform time grid."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        raise ValueError("empty sample set")
    if times.size > 2:
        d = np.diff(times)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            raise ValueError("time samples must be uniform")
    w = (1.0 + times ** 2) ** (-0.5 * delta) * values
    if np.isinf(q):
        return float(np.max(np.abs(w)))
    if times.size == 1:
        return 0.0
    return float(root(float(trapezoid(abs_power(w, q), times)), q))


def mixed_norm(samples, times, spec):
    """Weighted mixed space-time norm of time-indexed fields."""
    times = np.asarray(times, dtype=float)
    if len(samples) == 0:
        raise ValueError("empty sample set")
    if len(samples) != times.size:
        raise ValueError("one time per sample is required")
    keep = np.ones(times.size, bool) if spec.T is None else times <= spec.T * (1 + 1e-12)
    values = [lebesgue_norm(f, spec.r) for f, k in zip(samples, keep) if k]
    return time_norm(times[keep], values, spec.q, spec.delta)


Admissibility = namedtuple("Admissibility", "wave_admissible scaling_matches sum_exponents scaling_residual")


def check_admissible(q, r, gamma, tol=1e-12):
    """Wave admissibility 1/q + 1/r <= 1/2 and the scaling identity 1/q + 3/r = 3/2 - gamma.

    Returns ``(ok, diagnostics)``.
    """
    iq = 0.0 if np.isinf(q) else 1.0 / q
    ir = 0.0 if np.isinf(r) else 1.0 / r
    s = iq + ir
    resid = iq + 3.0 * ir - (1.5 - gamma)
    diag = Admissibility(bool(s <= 0.5 + tol), bool(abs(resid) <= tol), s, resid)
    return diag.wave_admissible and diag.scaling_matches, diag
