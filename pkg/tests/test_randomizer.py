import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from nlwlab.randomizer import (DISTRIBUTIONS, DataPair, RandomCoefficients, cell_variates, draw_seed,
                               expand_real_part, expand_real_part_batch, half_lattice_sign, in_half_lattice,
                               randomize, sample_coefficients, synthesize_data, unit_coefficients)
from nlwlab.spectral import SpectralField, UnitPartition, make_grid, sobolev_norm, transform

G16 = make_grid(16, 2)
P16 = UnitPartition(G16)
D16 = synthesize_data(0.75, 1.0, partition=P16)


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.integers(-50, 50)] * 3))
def test_half_lattice_splits_nonzero_points(k):
    mk = tuple(-x for x in k)
    if any(k):
        assert in_half_lattice(k) != in_half_lattice(mk)
        assert half_lattice_sign(*k) == (1 if in_half_lattice(k) else -1)
    else:
        assert not in_half_lattice(k) and half_lattice_sign(*k) == 0


def test_draw_seed_deterministic_and_distinct():
    seeds = {draw_seed(5, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert draw_seed(5, 3) == draw_seed(5, 3)
    assert draw_seed(5, 3) != draw_seed(6, 3)


@pytest.mark.parametrize("dist", DISTRIBUTIONS)
def test_variates_unit_variance(dist):
    c = sample_coefficients(dist, 123, 12)
    x = np.concatenate([c.h.real.ravel(), c.h.imag.ravel()]) * math.sqrt(2)
    # the real parts; mirrored cells repeat values, which leaves mean and variance unbiased
    half = x[: x.size // 2]
    assert abs(half.mean()) < 0.05
    assert half.var() == pytest.approx(1.0, abs=0.05)
    if dist == "rademacher":
        assert set(np.unique(np.abs(c.h.real[c.h.real != 0]))) <= {1 / math.sqrt(2), 1.0}


def test_gaussian_variates_pass_ks():
    c = sample_coefficients("gaussian", 9, 10)
    K = 2 * 10 + 1
    sel = [i for i, k in enumerate(np.ndindex(K, K, K)) if in_half_lattice(np.array(k) - 10)]
    z = (np.concatenate([c.h.real.ravel()[sel], c.h.imag.ravel()[sel], c.l.real.ravel()[sel]]) * math.sqrt(2))
    assert stats.kstest(z, "norm").pvalue > 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 63), st.sampled_from(DISTRIBUTIONS))
def test_hermitian_structure(seed, dist):
    c = sample_coefficients(dist, seed, 3)
    assert np.array_equal(c.h, np.conj(c.h[::-1, ::-1, ::-1]))
    assert np.array_equal(c.l, np.conj(c.l[::-1, ::-1, ::-1]))
    assert c.h[3, 3, 3].imag == 0 and c.l[3, 3, 3].imag == 0


def test_cells_are_addressed_by_counter():
    c = sample_coefficients("gaussian", 77, 4)
    for k in [(1, 0, 0), (0, 2, -3), (4, -4, 4), (0, 0, 1)]:
        x = cell_variates("gaussian", 77, k)
        h, l = c.at(k)
        assert h == (x[0] + 1j * x[1]) / math.sqrt(2)
        assert l == (x[2] + 1j * x[3]) / math.sqrt(2)


def test_restriction_matches_smaller_draw():
    big = sample_coefficients("uniform_compact", 31, 6)
    small = sample_coefficients("uniform_compact", 31, 3)
    r = big.restricted(3)
    assert np.array_equal(r.h, small.h) and np.array_equal(r.l, small.l)
    with pytest.raises(ValueError):
        small.restricted(4)


def test_sidecar_round_trip(tmp_path):
    c = sample_coefficients("rademacher", 2 ** 63 + 5, 3)
    path = tmp_path / "c.rwcf"
    c.write(path)
    d = RandomCoefficients.read(path)
    assert (d.k_max, d.seed, d.distribution) == (3, 2 ** 63 + 5, "rademacher")
    assert np.array_equal(d.h, c.h) and np.array_equal(d.l, c.l)
    assert path.read_bytes()[:4] == b"RWCF"


def test_sidecar_rejects_corruption():
    blob = sample_coefficients("gaussian", 1, 1).to_bytes()
    with pytest.raises(ValueError):
        RandomCoefficients.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        RandomCoefficients.from_bytes(blob[:-8])
    with pytest.raises(ValueError):
        RandomCoefficients.from_bytes(blob[:5])


def test_unknown_distribution():
    with pytest.raises(ValueError):
        sample_coefficients("cauchy", 1, 2)


def test_unit_coefficients_reconstruct():
    r = randomize(D16, unit_coefficients(P16.k_max), P16)
    scale = np.max(np.abs(D16.f1.coeffs))
    assert np.max(np.abs(r.f1.coeffs - D16.f1.coeffs)) <= 1e-12 * scale
    assert np.max(np.abs(r.f2.coeffs - D16.f2.coeffs)) <= 1e-12 * np.max(np.abs(D16.f2.coeffs))


def test_randomized_data_is_real():
    r = randomize(D16, sample_coefficients("gaussian", 4, P16.k_max), P16)
    assert r.f1.is_real and r.f1.hermitian_defect() == 0.0
    assert np.isrealobj(r.f1.physical())


def test_randomize_matches_real_expansion():
    draws = [sample_coefficients("gaussian", draw_seed(8, i), P16.k_max) for i in range(10)]
    u1, u2 = expand_real_part_batch(D16, draws, P16)
    for i, c in enumerate(draws):
        r = randomize(D16, c, P16)
        assert np.max(np.abs(r.f1.physical() - u1[i])) <= 1e-11 * np.max(np.abs(u1[i]))
        assert np.max(np.abs(r.f2.physical() - u2[i])) <= 1e-11 * np.max(np.abs(u2[i]))
    single = expand_real_part(D16, draws[0], P16)
    assert np.max(np.abs(single.f1.physical() - u1[0])) <= 1e-12 * np.max(np.abs(u1[0]))


def test_randomize_rejects_unresolved_data():
    c = np.zeros(G16.shape, complex)
    c[7, 0, 0] = c[-7, 0, 0] = 1.0   # xi = 3.5 lies outside the retained cells
    f = SpectralField(G16, c, True)
    with pytest.raises(ValueError):
        randomize(DataPair(f, f), sample_coefficients("gaussian", 1, P16.k_max), P16)


def test_randomize_needs_enough_cells():
    with pytest.raises(ValueError):
        randomize(D16, sample_coefficients("gaussian", 1, P16.k_max - 1), P16)


def test_randomization_preserves_mean_square():
    acc = 0.0
    n = 200
    for i in range(n):
        r = randomize(D16, sample_coefficients("gaussian", draw_seed(3, i), P16.k_max), P16)
        acc += r.f1.l2() ** 2
    # E|sum_k h_k psi_k|^2 = sum_k psi_k^2 at every lattice point (h_k and h_-k are uncorrelated)
    psi2 = np.zeros(G16.shape)
    for k in P16.cells:
        ix, iy, iz, v = P16.cell_entries(k)
        psi2[ix, iy, iz] += v * v
    expect = float(np.sum(np.abs(D16.f1.coeffs) ** 2 * psi2))
    assert acc / n == pytest.approx(expect, rel=0.1)


def test_synthesized_regularity():
    g = make_grid(32, 2)
    d = synthesize_data(0.75, 1.0, partition=UnitPartition(g))
    assert d.f1.is_real and d.f2.is_real
    assert sobolev_norm(d.f1, 0.75) < np.inf
    # the profile decays like <xi>^{-s-3/2-eps}
    c = np.abs(d.f1.coeffs)
    br = g.bracket_xi
    nz = c > 0
    slope = np.polyfit(np.log(br[nz]), np.log(c[nz]), 1)[0]
    assert slope == pytest.approx(-0.75 - 1.5 - 0.05, abs=1e-9)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2])
def test_synthesize_rejects_regularity(s):
    with pytest.raises(ValueError):
        synthesize_data(s, 1.0, grid=G16)


def test_synthesize_rejects_profile():
    with pytest.raises(ValueError):
        synthesize_data(0.5, 1.0, profile="box", grid=G16)


def test_transform_of_expansion_is_consistent():
    c = sample_coefficients("gaussian", 12, P16.k_max)
    r = randomize(D16, c, P16)
    back = transform(r.f1.physical(), G16)
    assert np.max(np.abs(back.coeffs - r.f1.coeffs)) < 1e-12 * np.max(np.abs(r.f1.coeffs))


def _h_norms(n, s_data, s_eval):
    g = make_grid(n, 2)
    return sobolev_norm(synthesize_data(s_data, 1.0, grid=g).f1, s_eval)


@pytest.mark.xfail(strict=True, reason="the H^s tail of <xi>^{-s-3/2-eps} data converges like N^{-2 eps}; "
                                       "32 -> 64 changes it by about 15%; see the decisions ledger")
def test_regularity_norm_converges_under_refinement():
    a, b = _h_norms(32, 0.7, 0.7), _h_norms(64, 0.7, 0.7)
    assert abs(b / a - 1) < 0.01


def test_norm_above_regularity_grows_under_refinement():
    a, b = _h_norms(32, 0.7, 0.9), _h_norms(64, 0.7, 0.9)
    assert b / a > 1.10


def test_refinement_change_increases_with_regularity():
    change = [_h_norms(64, 0.7, e) / _h_norms(32, 0.7, e) - 1 for e in (0.0, 0.4, 0.7, 0.9)]
    assert all(0 < a < b for a, b in zip(change, change[1:]))
    assert change[0] < 0.03
