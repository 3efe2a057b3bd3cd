"""Random coefficient ensembles, unit-scale randomization and seed profiles."""
from dataclasses import dataclass
import math
import struct

import numpy as np
from scipy.special import ndtri

from .spectral import SpectralField, UnitPartition, hermitian_symmetrize

DISTRIBUTIONS = ("gaussian", "rademacher", "uniform_compact")
_TAGS = {name: i for i, name in enumerate(DISTRIBUTIONS)}

MAGIC = b"RWCF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")

# each cell k owns one Philox block, addressed by an injective code of k
_CODE_BASE = 1 << 20


def in_half_lattice(k):
    """True iff the first nonzero coordinate of k is positive."""
    for c in k:
        if c != 0:
            return c > 0
    return False


def half_lattice_sign(a, b, c):
    """+1 on the half lattice, -1 on its reflection, 0 at the origin (broadcasting)."""
    a, b, c = np.broadcast_arrays(a, b, c)
    return np.where(a != 0, np.sign(a), np.where(b != 0, np.sign(b), np.sign(c))).astype(int)


def draw_seed(seed, index):
    """Independent 64-bit seed for draw ``index`` of a campaign keyed by ``seed``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _cell_code(kx, ky, kz):
    w = 2 * _CODE_BASE + 1
    return ((kx + _CODE_BASE) * w + (ky + _CODE_BASE)) * w + (kz + _CODE_BASE)


def _raw_blocks(bitgen, kx, ky, kz0, count):
    """Philox blocks of the cells (kx, ky, kz0 .. kz0+count-1), shape (count, 4)."""
    st = bitgen.state
    st["state"]["counter"] = np.array([_cell_code(kx, ky, kz0), 0, 0, 0], dtype=np.uint64)
    st["buffer_pos"] = 4
    bitgen.state = st
    return bitgen.random_raw(4 * count).reshape(count, 4)


def _to_variates(raw, distribution):
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
    if distribution == "gaussian":
        return ndtri(u)
    if distribution == "rademacher":
        return np.where(u < 0.5, -1.0, 1.0)
    if distribution == "uniform_compact":
        return math.sqrt(3.0) * (2.0 * u - 1.0)
    raise ValueError(f"unsupported distribution {distribution!r}; choose from {DISTRIBUTIONS}")


def _check_distribution(distribution):
    if distribution not in _TAGS:
        raise ValueError(f"unsupported distribution {distribution!r}; choose from {DISTRIBUTIONS}")


def cell_variates(distribution, seed, k):
    """The four unit-variance variates attached to cell k (order independent)."""
    _check_distribution(distribution)
    bg = np.random.Philox(key=np.array([int(seed), 0], dtype=np.uint64))
    return _to_variates(_raw_blocks(bg, int(k[0]), int(k[1]), int(k[2]), 1)[0], distribution)


@dataclass(frozen=True, eq=False)
class RandomCoefficients:
    """One draw omega: h_k, l_k on the cube |k|_inf <= k_max, indexed by k + k_max."""

    k_max: int
    seed: int
    distribution: str
    h: np.ndarray
    l: np.ndarray

    def at(self, k):
        i = tuple(int(c) + self.k_max for c in k)
        return self.h[i], self.l[i]

    def to_bytes(self):
        head = _HEADER.pack(MAGIC, VERSION, self.k_max, _TAGS[self.distribution], self.seed)
        quad = np.stack([self.h.real, self.h.imag, self.l.real, self.l.imag], axis=-1)
        return head + quad.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < _HEADER.size:
            raise ValueError("truncated coefficient file")
        magic, version, k_max, tag, seed = _HEADER.unpack_from(blob)
        if magic != MAGIC or version != VERSION:
            raise ValueError("not a coefficient file of a supported version")
        K = 2 * k_max + 1
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if body.size != 4 * K ** 3:
            raise ValueError("coefficient file size does not match its header")
        q = body.reshape(K, K, K, 4)
        return cls(k_max, seed, DISTRIBUTIONS[tag], q[..., 0] + 1j * q[..., 1], q[..., 2] + 1j * q[..., 3])

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def restricted(self, k_max):
        """The same draw on a smaller cube."""
        if k_max > self.k_max:
            raise ValueError("cannot enlarge a coefficient cube")
        d = self.k_max - k_max
        s = slice(d, d + 2 * k_max + 1)
        return RandomCoefficients(k_max, self.seed, self.distribution, self.h[s, s, s], self.l[s, s, s])


def sample_coefficients(distribution, seed, k_max):
    """Draw (h_k, l_k) for |k|_inf <= k_max from a counter-based stream keyed on (seed, k)."""
    _check_distribution(distribution)
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    K = 2 * k_max + 1
    bg = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
    raw = np.empty((K, K, K, 4), dtype=np.uint64)
    for i, kx in enumerate(range(-k_max, k_max + 1)):
        for j, ky in enumerate(range(-k_max, k_max + 1)):
            raw[i, j] = _raw_blocks(bg, kx, ky, -k_max, K)
    x = _to_variates(raw, distribution)
    r = np.arange(-k_max, k_max + 1)
    sgn = half_lattice_sign(r[:, None, None], r[None, :, None], r[None, None, :])
    inv = 1.0 / math.sqrt(2.0)
    h = (x[..., 0] + 1j * x[..., 1]) * inv
    l = (x[..., 2] + 1j * x[..., 3]) * inv
    # mirror the half lattice onto its reflection, real unit-variance value at k = 0
    h = np.where(sgn < 0, np.conj(h[::-1, ::-1, ::-1]), h)
    l = np.where(sgn < 0, np.conj(l[::-1, ::-1, ::-1]), l)
    c = k_max
    h[c, c, c] = x[c, c, c, 0]
    l[c, c, c] = x[c, c, c, 2]
    return RandomCoefficients(k_max, seed, distribution, h, l)


def unit_coefficients(k_max, value=1.0):
    """Deterministic coefficients h_k = l_k = value (value must be real)."""
    K = 2 * k_max + 1
    a = np.full((K, K, K), complex(value))
    return RandomCoefficients(k_max, 0, "gaussian", a, a.copy())


@dataclass(frozen=True, eq=False)
class DataPair:
    """Initial data (f1, f2) with declared regularity s for f1 (s - 1 for f2)."""

    f1: SpectralField
    f2: SpectralField
    s: float = None

    @property
    def grid(self):
        return self.f1.grid

    def scaled(self, c):
        return DataPair(self.f1 * c, self.f2 * c, self.s)

    def is_zero(self):
        return not (np.any(self.f1.coeffs) or np.any(self.f2.coeffs))


def _check_support(field, partition, tol=1e-10):
    c2 = np.abs(field.coeffs) ** 2
    total = c2.sum()
    if total == 0.0:
        return
    outside = c2[~partition.interior_mask].sum()
    if outside > tol * total:
        raise ValueError(
            f"data has {outside / total:.2e} of its mass outside the cells covered by the coefficients")


def _matching_partition(coeffs, partition):
    if coeffs.k_max < partition.k_max:
        raise ValueError(f"coefficients cover |k| <= {coeffs.k_max} but the partition needs {partition.k_max}")
    return coeffs.restricted(partition.k_max) if coeffs.k_max > partition.k_max else coeffs


def randomization_multipliers(coeffs, partition):
    """sum_k h_k psi(xi - k) and sum_k l_k psi(xi - k) on the lattice."""
    coeffs = _matching_partition(coeffs, partition)
    return partition.combine(coeffs.h), partition.combine(coeffs.l)


def randomize(data, coeffs, partition):
    """f^omega = (sum_k h_k P_k f1, sum_k l_k P_k f2) as one multiplier pass."""
    _check_support(data.f1, partition)
    _check_support(data.f2, partition)
    mh, ml = randomization_multipliers(coeffs, partition)
    g = data.grid
    f1 = SpectralField(g, hermitian_symmetrize(data.f1.coeffs * mh, g), True)
    f2 = SpectralField(g, hermitian_symmetrize(data.f2.coeffs * ml, g), True)
    return DataPair(f1, f2, data.s)


def _half_cells(partition):
    return [tuple(k) for k in partition.cells if in_half_lattice(k)]


def expand_real_part_batch(data, draws, partition, chunk=256):
    """Physical samples of f1^omega, f2^omega for several draws via the half-lattice real expansion.

    Each P_k f is synthesized once in physical space and the draws are combined
    with dense products; returns two arrays of shape (len(draws), n, n, n).
    """
    _check_support(data.f1, partition)
    _check_support(data.f2, partition)
    draws = [_matching_partition(c, partition) for c in draws]
    g = data.grid
    npts = g.n ** 3
    km = partition.k_max
    cells = _half_cells(partition)
    out = []
    for field, which in ((data.f1, "h"), (data.f2, "l")):
        ci = tuple(np.array(cells).T + km)
        coef = np.array([getattr(c, which)[ci] for c in draws])
        zero = np.array([getattr(c, which)[km, km, km].real for c in draws])
        acc = np.outer(zero, unit_projection_physical(field, (0, 0, 0), partition).real.ravel())
        for start in range(0, len(cells), chunk):
            block = cells[start:start + chunk]
            nb = len(block)
            # rows: Re P_k f for the block, then Im P_k f
            pk = np.empty((2 * nb, npts))
            for i, k in enumerate(block):
                z = unit_projection_physical(field, k, partition).ravel()
                pk[i] = z.real
                pk[nb + i] = z.imag
            a = coef[:, start:start + nb]
            acc += np.concatenate([2.0 * a.real, -2.0 * a.imag], axis=1) @ pk
        out.append(acc.reshape((len(draws),) + g.shape))
    return out[0], out[1]


def unit_projection_physical(field, k, partition):
    """Complex physical samples of P_k f."""
    from .spectral import unit_projection

    return unit_projection(field, k, partition).physical()


def expand_real_part(data, coeffs, partition):
    """Randomized data through h0 P0 f + 2 sum_{k in I} (Re h_k Re P_k f - Im h_k Im P_k f)."""
    from .spectral import transform

    u1, u2 = expand_real_part_batch(data, [coeffs], partition)
    g = data.grid
    return DataPair(transform(u1[0], g), transform(u2[0], g), data.s)


# -- seed profiles -----------------------------------------------------------

PROFILES = ("power_law", "gaussian")


def deterministic_phase(grid):
    """Odd phase pattern theta(-n) = -theta(n) on integer lattice indices."""
    M = grid.box_multiple
    a, b, c = (np.rint(x * M).astype(np.int64) for x in grid.xi)
    frac = np.mod(math.sqrt(2.0) * a * a + math.sqrt(3.0) * b * b + math.sqrt(5.0) * c * c, 1.0)
    return half_lattice_sign(a, b, c) * 2.0 * math.pi * frac


def synthesize_data(s, amplitude, profile="power_law", grid=None, partition=None, eps0=0.05):
    """Deterministic real data pair with f1 just above H^s and f2 just above H^{s-1}.

    The spectrum is cut sharply to the lattice points covered by the retained
    unit cells, so the randomization reproduces it exactly with unit coefficients.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"data regularity s must lie in (0, 1), got {s}")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")
    if partition is None:
        partition = UnitPartition(grid)
    grid = partition.grid
    br = grid.bracket_xi
    density = (2.0 * math.pi / grid.box_length) ** 1.5
    if profile == "power_law":
        a1 = br ** (-s - 1.5 - eps0)
        a2 = br ** (-(s - 1.0) - 1.5 - eps0)
    else:
        g = np.exp(-0.25 * grid.abs_xi ** 2)
        a1, a2 = g, br * g
    phase = np.exp(1j * deterministic_phase(grid))
    mask = partition.interior_mask
    c1 = np.where(mask, amplitude * density * a1 * phase, 0.0)
    c2 = np.where(mask, amplitude * density * a2 * phase, 0.0)
    return DataPair(SpectralField(grid, c1, True), SpectralField(grid, c2, True), s)
