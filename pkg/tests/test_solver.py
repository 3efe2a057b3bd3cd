import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlwlab.propagator import FreeEvolutionSampler, wave_symbols
from nlwlab.randomizer import DataPair, draw_seed, randomize, sample_coefficients, synthesize_data
from nlwlab.solver import (ContractionFailure, NonlinearKernel, SolverConfig, _power_nl, calibrate_c_T,
                           exponent_table, global_extend, h1_norm2, lwp_window, nonlinearity, picard_solve,
                           reference_integrate, standard_energy, window_steps)
from nlwlab.spectral import SpectralField, UnitPartition, make_grid, pad_half, transform, truncate_half

G = make_grid(16, 2)
P = UnitPartition(G)


def data(amplitude=10.0, seed=0, s=0.75):
    d = synthesize_data(s, amplitude, partition=P)
    return randomize(d, sample_coefficients("gaussian", draw_seed(21, seed), P.k_max), P)


# -- exponents ----------------------------------------------------------------


def test_exponents_at_p4():
    t = exponent_table(4.0)
    assert (t.s_c, t.s_low, t.q, t.alpha) == pytest.approx((5 / 6, 3 / 5, 8.0, 0.5), abs=1e-12)
    assert t.window_exponent() == 6.0


@settings(max_examples=100, deadline=None)
@given(st.floats(3.01, 4.99))
def test_exponent_relations(p):
    t = exponent_table(p)
    assert t.s_c > t.s_low
    # the energy-critical Strichartz pair (q, 2p) is admissible at regularity 1
    assert 1 / t.q + 3 / (2 * p) == pytest.approx(0.5, abs=1e-12)
    assert t.delta_max(1.0) == pytest.approx(2 / (p - 1), abs=1e-12)


@pytest.mark.parametrize("p", [3.0, 5.0, 2.0, 6.1])
def test_power_range_enforced(p):
    with pytest.raises(ValueError):
        exponent_table(p)
    with pytest.raises(ValueError):
        SolverConfig(p=p)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0)
    with pytest.raises(ValueError):
        SolverConfig(window_policy="adaptive")
    assert SolverConfig(dt=2e-3, output_every=0.05).output_stride == 25


# -- nonlinearity -------------------------------------------------------------


@pytest.mark.parametrize("p", [3.5, 4.0, 4.5, 3.0 + 2.0])
def test_power_kernel_paths_agree(p):
    w = np.random.default_rng(0).standard_normal(1000)
    assert np.allclose(_power_nl(w, p), np.abs(w) ** (p - 1) * w, rtol=1e-14, atol=0)


def test_cubic_dealiasing_is_exact():
    # u^3 of a field band-limited to |n| < n/2 has no aliasing on the 2x grid
    d = data(1.0)
    h = d.f1.half()
    G3, _ = NonlinearKernel(G, 3.0, 1.0, oversample=2)(h)
    fine = make_grid(64, 2)
    u = fine.half_to_physical(pad_half(h, 64))
    ref = truncate_half(fine.physical_to_half(u ** 3), 16)
    assert np.max(np.abs(G3 - ref)) < 1e-12 * np.max(np.abs(ref))


def test_nonlinearity_physical_wrapper():
    u = data(1.0).f1.physical()
    out = nonlinearity(u, 4.0, G)
    assert out.shape == G.shape and np.all(np.isfinite(out))
    with pytest.raises(ValueError):
        nonlinearity(u + 0j, 4.0, G)


def test_kernel_raises_on_overflow():
    h = data(1.0).f1.half() * 1e100
    with pytest.raises(FloatingPointError):
        NonlinearKernel(G, 4.5)(h)


# -- local windows ------------------------------------------------------------


def test_lwp_window_formula():
    assert lwp_window(2.0, 4.0, 1.0) == pytest.approx(2.0 ** -6)
    assert lwp_window(1e-3, 4.0, 1.0, dt=1e-3, T_max=0.25) == 0.25
    assert lwp_window(1e6, 4.0, 1.0, dt=1e-3) == 1e-3
    with pytest.raises(ValueError):
        lwp_window(0.0, 4.0, 1.0)


def test_window_steps_policy():
    cfg = SolverConfig(window_policy="fixed", fixed_window=0.1, dt=0.01)
    assert window_steps(cfg, 5.0, 100) == 10
    assert window_steps(cfg, 5.0, 3) == 3


def _forward_substitution(state, sampler, t0, m, dt, kernel):
    """Independent oracle: the strictly lower triangular trapezoid Duhamel map solved step by step."""
    g = sampler.grid
    om = g.abs_xi_half
    v1, v2 = state
    vs, Gs = [v1], []
    for j in range(1, m + 1):
        Gs.append(kernel(sampler.u_half(t0 + (j - 1) * dt) + vs[j - 1])[0])
        c, s = wave_symbols(om, j * dt)
        acc = c * v1 + s * v2
        for i in range(j):
            wgt = 0.5 * dt if i == 0 else dt
            acc = acc - wgt * wave_symbols(om, (j - i) * dt)[1] * Gs[i]
        vs.append(acc)
    return vs


def test_picard_fixed_point_matches_forward_substitution():
    d = data(10.0, 1)
    s = FreeEvolutionSampler(d)
    k = NonlinearKernel(G, 4.0)
    zero = np.zeros(G.half_shape, complex)
    res = picard_solve((zero, zero.copy()), s, 0.3, 20, 5e-3, k, tol=1e-13)
    ref = _forward_substitution((zero, zero), s, 0.3, 20, 5e-3, NonlinearKernel(G, 4.0))
    scale = max(np.max(np.abs(x)) for x in ref)
    assert max(np.max(np.abs(a - b)) for a, b in zip(res.v, ref)) < 1e-11 * scale
    assert res.max_ratio < 0.9


def test_picard_lazy_evaluation_counts():
    d = data(10.0, 2)
    k = NonlinearKernel(G, 4.0)
    zero = np.zeros(G.half_shape, complex)
    res = picard_solve((zero, zero.copy()), FreeEvolutionSampler(d), 0.0, 1, 2e-3, k)
    # a single-step window needs the nonlinearity at its two endpoints only
    assert k.evaluations == 2
    assert res.iterations <= 2


def test_picard_reports_non_contraction():
    d = data(10.0, 3)
    zero = np.zeros(G.half_shape, complex)
    with pytest.raises(ContractionFailure):
        picard_solve((zero, zero.copy()), FreeEvolutionSampler(d), 0.0, 50, 1e-2, NonlinearKernel(G, 4.0),
                     tol=1e-300, max_iters=3)


def test_picard_converges_to_strang_at_second_order():
    d = data(10.0, 4)
    s = FreeEvolutionSampler(d)
    zero = np.zeros(G.half_shape, complex)
    T = 0.2
    errs = []
    for dt in (4e-3, 2e-3):
        m = int(round(T / dt))
        res = picard_solve((zero, zero.copy()), s, 0.0, m, dt, NonlinearKernel(G, 4.0), tol=1e-13)
        (v, vt), _ = reference_integrate((zero, zero.copy()), s, 0.0, T, dt, NonlinearKernel(G, 4.0))
        errs.append(math.sqrt(h1_norm2(G, res.v[-1] - v, res.vt[-1] - vt) / h1_norm2(G, v, vt)))
    assert errs[1] < errs[0] / 3.5


def test_reference_unforced_energy_drift():
    g = G
    f = synthesize_data(0.75, 10.0, partition=P)
    zero = SpectralField.zeros(g)
    s = FreeEvolutionSampler(DataPair(zero, zero))
    k = NonlinearKernel(g, 4.0)
    v0, vt0 = f.f1.half(), f.f2.half()
    E0 = standard_energy(g, v0, vt0, 4.0)
    (v, vt), rec = reference_integrate((v0, vt0), s, 0.0, 2.0, 1e-3, k, record_every=500)
    drift = max(abs(standard_energy(g, a, b, 4.0) - E0) / E0 for _, a, b in rec)
    assert drift <= 1e-6
    assert len(rec) == 5


def test_reference_integrate_rejects_partial_steps():
    d = data(1.0)
    zero = np.zeros(G.half_shape, complex)
    with pytest.raises(ValueError):
        reference_integrate((zero, zero), FreeEvolutionSampler(d), 0.0, 0.0105, 1e-3, NonlinearKernel(G, 4.0))


# -- global runs --------------------------------------------------------------


def test_global_run_reaches_horizon():
    cfg = SolverConfig(T_max=1.0, c_T=64.0, dt=2e-3)
    tr = global_extend(data(10.0, 5), cfg)
    assert tr.status == "reached_Tmax"
    assert tr.T_end == pytest.approx(1.0)
    assert tr.times.size == 501
    assert np.all(np.diff(tr.window_bounds) > 0)
    assert np.array_equal(tr.snapshot_steps, np.arange(0, 501, 25))
    assert tr.max_ratio < 0.9
    rel = np.abs(tr.dEdt_formula - tr.dEdt_fd())[1:-1] / np.maximum(1, np.abs(tr.dEdt_formula[1:-1]))
    assert np.max(rel) < 1e-3


def test_zero_data_stays_zero():
    zero = SpectralField.zeros(G)
    tr = global_extend(DataPair(zero, zero), SolverConfig(T_max=0.1, dt=1e-2, output_every=0.02))
    assert tr.status == "reached_Tmax"
    assert np.all(tr.energy == 0.0)


def test_fixed_window_policy_matches_formula_policy():
    d = data(10.0, 6)
    a = global_extend(d, SolverConfig(T_max=0.2, window_policy="fixed", fixed_window=0.05, picard_tol=1e-13))
    b = global_extend(d, SolverConfig(T_max=0.2, c_T=64.0, picard_tol=1e-13))
    assert a.status == b.status == "reached_Tmax"
    # the discrete fixed point does not depend on how time is cut into windows
    assert np.max(np.abs(a.h1_sq - b.h1_sq)) < 1e-9 * np.max(b.h1_sq)


def test_focusing_large_data_terminates_early():
    d = data(200.0, 7)
    tr = global_extend(d, SolverConfig(T_max=2.0, coupling=-1.0, c_T=64.0, blowup_threshold=1e8))
    assert tr.status in ("blowup", "contraction_failure")
    assert tr.T_end < 2.0


def test_calibration_returns_dyadic_constant():
    c_T, report = calibrate_c_T([data(10.0, 8)], SolverConfig(T_max=1.0), exponents=range(-2, 3))
    assert math.log2(c_T) in range(-2, 3)
    assert all(r["contracts"] for r in report if r["c_T"] <= c_T)


@pytest.mark.xfail(strict=True, reason="|u|^{p-1}u is not a polynomial for p = 4, so 2x padding leaves "
                                       "aliasing near 1e-4; see the decisions ledger")
def test_aliasing_below_1e_8():
    from nlwlab.runner import aliasing_defect
    assert aliasing_defect(data(10.0, 9), 4.0) < 1e-8


def test_aliasing_monitor_is_small_and_shrinks():
    from nlwlab.runner import aliasing_defect
    g32 = make_grid(32, 2)
    p32 = UnitPartition(g32)
    d32 = randomize(synthesize_data(0.75, 10.0, partition=p32),
                    sample_coefficients("gaussian", draw_seed(21, 9), p32.k_max), p32)
    a16, a32 = aliasing_defect(data(10.0, 9), 4.0), aliasing_defect(d32, 4.0)
    assert a32 < a16 < 1e-3
