"""Modified energy, its derivative, the growth functionals and the Gronwall envelope.

Also hosts two audits that evaluate both sides of fractional inequalities
(chain rule, interpolation) by quadrature and report their ratio.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .propagator import FreeEvolutionSampler
from .solver import NonlinearKernel, exponent_table
from .spectral import SpectralField, apply_multiplier, lebesgue_norm, riesz_symbol


@dataclass
class EnergyRecord:
    t: float
    E: float
    kinetic: float
    gradient: float
    mass: float
    potential: float
    dEdt_formula: float = float("nan")
    dEdt_fd: float = float("nan")
    A: float = float("nan")
    B: float = float("nan")

    def components_sum(self):
        return self.kinetic + self.gradient + self.mass + self.potential


def _half(field):
    return field.half()


def modified_energy(v, uf, p, coupling=1.0, t=None, oversample=2):
    """E(v) = int 1/2|grad v|^2 + 1/2|v_t|^2 + 1/2|v|^2 + c/(p+1)|u_f + v|^{p+1}."""
    v1, v2 = v
    g = v1.grid
    for f in (v1, v2, uf):
        if f.grid != g:
            raise ValueError("fields live on different grids")
        if not np.all(np.isfinite(f.coeffs)):
            raise ValueError("non-finite field")
    h1 = _half(v1)
    kin = 0.5 * g.half_norm2(_half(v2))
    grad = 0.5 * g.half_norm2(h1, g.abs_xi_half ** 2)
    mass = 0.5 * g.half_norm2(h1)
    _, pot = NonlinearKernel(g, p, 1.0, oversample)(_half(uf) + h1)
    pot = coupling * pot / (p + 1.0)
    return EnergyRecord(t, kin + grad + mass + pot, kin, grad, mass, pot)


def energy_derivative(v, vt, uf, utilde, p, coupling=1.0, oversample=2):
    """int v v_t + int (<D> utilde) |u_f + v|^{p-1}(u_f + v), paired in Fourier space."""
    g = v.grid
    G, _ = NonlinearKernel(g, p, coupling, oversample)(_half(uf) + _half(v))
    drive = g.bracket_xi_half * _half(utilde)
    val = g.half_inner(_half(v), _half(vt)) + g.half_inner(drive, G)
    if not math.isfinite(val):
        raise ValueError("non-finite energy derivative")
    return val


@dataclass(frozen=True)
class EnvelopeParams:
    """Parameters of the growth bound: regularity s, weight delta, slack eps_plus, constant C."""

    p: float
    s: float
    delta: float = None
    eps_plus: float = 0.01
    C: float = None

    def __post_init__(self):
        tab = exponent_table(self.p)
        dmax = tab.delta_max(self.s)
        if dmax <= 0:
            raise ValueError(
                f"no admissible weight: the energy growth bound needs s > {(self.p - 1) / (self.p + 1):.6g}")
        if self.delta is None:
            object.__setattr__(self, "delta", 0.5 * dmax)
        if not 0.0 < self.delta < dmax:
            raise ValueError(f"the energy growth bound requires 0 < delta < {dmax:.6g} (got {self.delta})")
        if not self.eps_plus > 0:
            raise ValueError("eps_plus must be positive")
        if not self.sigma_u < self.s:
            raise ValueError(
                f"eps_plus too large: ((p-1)/2)(1 - s + delta + eps_plus) = {self.sigma_u:.6g} must stay below s")
        if self.C is not None and not self.C > 0:
            raise ValueError("the envelope constant must be positive")

    @property
    def sigma_a(self):
        """Derivative order s - delta on the modified evolution."""
        return self.s - self.delta

    @property
    def sigma_u(self):
        """Derivative order ((p-1)/2)(1 - s + delta + eps_plus) on the free evolution."""
        return 0.5 * (self.p - 1.0) * (1.0 - self.s + self.delta + self.eps_plus)


def initial_block(v1, v2, f1, p):
    """|(v1, v2)|^2 in H^1 x L^2 plus |v1|^{p+1}_{p+1} plus |f1|^{p+1}_{p+1}."""
    g = v1.grid
    h = g.half_norm2(_half(v1), g.bracket_xi_half ** 2) + g.half_norm2(_half(v2))
    return h + lebesgue_norm(v1, p + 1.0) ** (p + 1.0) + lebesgue_norm(f1, p + 1.0) ** (p + 1.0)


@dataclass
class GrowthFunctionals:
    times: np.ndarray
    A: np.ndarray
    B: np.ndarray
    terms: dict = field(default_factory=dict)

    def at_end(self):
        return float(self.A[-1]), float(self.B[-1])


def growth_integrands(sampler, t, params, oversample=2):
    """Pointwise-in-time integrands of A and of the three parts of B."""
    g = sampler.grid
    p = params.p
    ut = sampler.utilde_half(t)
    u = sampler.u_half(t)
    wa = g.bracket_xi_half ** params.sigma_a
    a_inf = float(np.max(np.abs(g.half_to_physical(wa * ut, oversample))))
    ut_phys = g.half_to_physical(ut)
    lp1 = g.cell_volume * float(np.sum(np.abs(ut_phys) ** (p + 1.0)))
    l2w = g.half_norm2(u, g.bracket_xi_half ** (2.0 * params.sigma_u))
    return a_inf, lp1, a_inf ** 2, l2w ** 2


def growth_functionals(source, times, params, oversample=2):
    """Running A(t) and B(t) over uniform ``times`` starting at 0.

    ``source`` is randomized data or a FreeEvolutionSampler.  A is the L^1_t L^inf_x
    norm of <D>^{s-delta} utilde; B adds |utilde|^{p+1} in L^{p+1}_{t,x}, the square of
    the L^2_t L^inf_x norm of <D>^{s-delta} utilde and the fourth power of the
    L^4_t L^2_x norm of <D>^{sigma_u} u_f.  Time integrals use the trapezoid rule.
    """
    sampler = source if isinstance(source, FreeEvolutionSampler) else FreeEvolutionSampler(source)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("empty time grid")
    if times.size > 2:
        d = np.diff(times)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            raise ValueError("time samples must be uniform")
    vals = np.array([growth_integrands(sampler, t, params, oversample) for t in times])
    if times.size == 1:
        z = np.zeros(1)
        return GrowthFunctionals(times, z, z.copy(), {k: z.copy() for k in ("lp1", "linf2", "l4l2")})
    cum = cumulative_trapezoid(vals, times, axis=0, initial=0.0)
    terms = {"lp1": cum[:, 1], "linf2": cum[:, 2], "l4l2": cum[:, 3]}
    return GrowthFunctionals(times, cum[:, 0], cum[:, 1] + cum[:, 2] + cum[:, 3], terms)


def gronwall_envelope(block, A, B, T, C):
    """C (block + B) exp(C (T + A))."""
    if not np.all(np.asarray(C) > 0):
        raise ValueError("the envelope constant must be positive")
    return C * (block + B) * np.exp(C * (T + A))


def fit_envelope_constant(times, h1_sq, A, B, block, t_fit):
    """Smallest C whose envelope dominates the running sup of h1_sq on [0, t_fit]."""
    times = np.asarray(times)
    sup = np.maximum.accumulate(np.asarray(h1_sq))
    best = 0.0
    for t, y, a, b in zip(times, sup, A, B):
        if t > t_fit * (1 + 1e-12):
            break
        if y <= 0:
            continue
        f = lambda c: math.log(c) + math.log(block + b) + c * (t + a) - math.log(y)
        lo, hi = 1e-300, 1.0
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e6:
                raise ValueError("no envelope constant up to 1e6 dominates the trajectory")
        if f(lo) >= 0:
            continue
        best = max(best, brentq(f, lo, hi, xtol=1e-300, rtol=1e-14))
    return best if best > 0 else 1e-300


@dataclass
class EnvelopeSummary:
    C_fit: float
    A_T: float
    B_T: float
    E_max: float
    envelope_margin_min: float
    dominated: bool

    def as_dict(self):
        return {"C_fit": self.C_fit, "A(T)": self.A_T, "B(T)": self.B_T, "E_max": self.E_max,
                "envelope_margin_min": self.envelope_margin_min}


def envelope_check(times, h1_sq, energy, A, B, block, T):
    """Fit C on [0, T/2] and check dominance of the running sup on [T/2, T].

    The margin is min over the check interval of (envelope - sup) / envelope.
    """
    times = np.asarray(times)
    C = fit_envelope_constant(times, h1_sq, A, B, block, 0.5 * T)
    # nudge above the binding constraint so the fitted half is dominated too
    C *= 1.0 + 1e-9
    sup = np.maximum.accumulate(np.asarray(h1_sq))
    env = gronwall_envelope(block, np.asarray(A), np.asarray(B), times, C)
    sel = (times >= 0.5 * T * (1 - 1e-12)) & (times <= T * (1 + 1e-12))
    margin = float(np.min((env[sel] - sup[sel]) / env[sel])) if np.any(sel) else float("nan")
    return EnvelopeSummary(C, float(A[-1]), float(B[-1]), float(np.max(energy)), margin, bool(margin > 0))


# -- inequality audits -------------------------------------------------------


def _check_holder(r, r1, r2):
    if abs(1.0 / r - (1.0 / r1 + 1.0 / r2)) > 1e-12:
        raise ValueError(f"Hoelder exponents violated: 1/{r} != 1/{r1} + 1/{r2}")


def _riesz(field, sigma):
    return apply_multiplier(field, riesz_symbol(sigma), zero_value=0.0)


def chain_rule_audit(u, p, sigma, r, r1, r2):
    """Both sides of | |D|^s G(u) |_r <~ |G'(u)|_{r1} | |D|^s u |_{r2} for G(u) = |u|^{p-1}u."""
    from .spectral import transform
    from .solver import NonlinearKernel

    if not 0.0 < sigma <= 1.0:
        raise ValueError("sigma must lie in (0, 1]")
    _check_holder(r, r1, r2)
    g = u.grid
    Gh, _ = NonlinearKernel(g, p, 1.0)(u.half())
    G = SpectralField.from_half(g, Gh)
    lhs = lebesgue_norm(_riesz(G, sigma), r)
    gp = transform(p * np.abs(u.physical()) ** (p - 1.0), g)
    rhs = lebesgue_norm(gp, r1) * lebesgue_norm(_riesz(u, sigma), r2)
    return lhs, rhs, (lhs / rhs if rhs > 0 else 0.0)


def interpolation_audit(f, sigma, p):
    """Both sides of | |D|^s f |_{(p+1)/2} <~ | |D|^{(p-1)s/2} f |_2^{2/(p-1)} |f|_{p+1}^{(p-3)/(p-1)}."""
    if not 0.0 < sigma < 1.0 or not sigma * (p - 1.0) / 2.0 < 1.0:
        raise ValueError("need 0 < sigma < 1 and sigma (p-1)/2 < 1")
    lhs = lebesgue_norm(_riesz(f, sigma), (p + 1.0) / 2.0)
    a = lebesgue_norm(_riesz(f, 0.5 * (p - 1.0) * sigma), 2.0)
    b = lebesgue_norm(f, p + 1.0)
    rhs = a ** (2.0 / (p - 1.0)) * b ** ((p - 3.0) / (p - 1.0))
    return lhs, rhs, (lhs / rhs if rhs > 0 else 0.0)


def interpolant_weights_ok(grid, sigma):
    """|xi|^{2 sigma} <= 1 + |xi|^2 at every lattice point (so the energy bounds every H^sigma)."""
    return bool(np.all(grid.abs_xi ** (2.0 * sigma) <= 1.0 + grid.abs_xi ** 2))


def trajectory_records(traj, growth=None):
    """EnergyRecords at the snapshot steps of a trajectory."""
    fd = traj.dEdt_fd()
    out = []
    for n, i in enumerate(traj.snapshot_steps):
        rec = EnergyRecord(float(traj.times[i]), float(traj.energy[i]), float(traj.kinetic[i]),
                           float(traj.gradient[i]), float(traj.mass[i]), float(traj.potential[i]),
                           float(traj.dEdt_formula[i]), float(fd[i]))
        if growth is not None:
            rec.A, rec.B = float(growth.A[n]), float(growth.B[n])
        out.append(rec)
    return out
