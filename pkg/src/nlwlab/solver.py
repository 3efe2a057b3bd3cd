"""Windowed Picard solver for the nonlinear remainder and a splitting reference integrator.

The full solution is u = u_f + v, where u_f is the free evolution of the
randomized data and v solves

    v_tt - Lap v = -c |u_f + v|^{p-1} (u_f + v),    c = +1 defocusing,

on successive local windows.  Everything internal works on real-field half
spectra of shape (n, n, n/2 + 1) with Nyquist modes kept at zero.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .propagator import FreeEvolutionSampler, wave_symbols
from .spectral import SpectralField, time_norm

STATUSES = ("reached_Tmax", "blowup", "contraction_failure")


# -- exponents ---------------------------------------------------------------


@dataclass(frozen=True)
class ExponentTable:
    p: float
    s_c: float
    s_low: float
    q: float
    alpha: float

    def delta_max(self, s):
        """Upper end of the admissible weight window for data regularity s."""
        return (self.p + 1.0) / (self.p - 1.0) * s - 1.0

    def window_exponent(self):
        """Power of lambda in the local existence time."""
        return 2.0 * (self.p - 1.0) / (5.0 - self.p)


def check_power(p):
    if not 3.0 < p < 5.0:
        raise ValueError(f"the nonlinearity power must satisfy 3 < p < 5, got p = {p}")


def exponent_table(p):
    """Critical regularity, lower regularity threshold and the local theory exponents."""
    check_power(p)
    return ExponentTable(
        p=p,
        s_c=1.5 - 2.0 / (p - 1.0),
        s_low=(p - 1.0) / (p + 1.0),
        q=2.0 * p / (p - 3.0),
        alpha=(5.0 - p) / 2.0,
    )


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    p: float = 4.0
    dt: float = 2e-3
    window_policy: str = "paper_formula"
    picard_tol: float = 1e-10
    picard_max_iters: int = 60
    blowup_threshold: float = 1e12
    T_max: float = 20.0
    c_T: float = 1.0
    max_window: float = 0.25
    fixed_window: float = 0.1
    coupling: float = 1.0
    output_every: float = 0.05
    max_halvings: int = 5

    def __post_init__(self):
        check_power(self.p)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise ValueError("picard_max_iters must be at least 1")
        if self.window_policy not in ("paper_formula", "fixed"):
            raise ValueError("window_policy must be 'paper_formula' or 'fixed'")
        if not self.T_max >= 0:
            raise ValueError("T_max must be non-negative")
        if not self.c_T > 0 or not self.max_window > 0 or not self.fixed_window > 0:
            raise ValueError("window constants must be positive")

    @property
    def defocusing(self):
        return self.coupling >= 0

    @property
    def output_stride(self):
        return max(1, int(round(self.output_every / self.dt)))

    def with_(self, **kw):
        return replace(self, **kw)


# -- nonlinearity ------------------------------------------------------------


def _power_nl(w, p):
    # |w|^{p-1} w with repeated products when p - 1 is a small integer
    k = p - 1.0
    a = np.abs(w)
    if k == int(k) and k <= 6:
        k = int(k)
        if k % 2 == 0:
            r = w.copy()
            for _ in range(k):
                r *= w
            return r
        r = a * w
        for _ in range(k - 1):
            r *= w
        return r
    return a ** k * w


class NonlinearKernel:
    """|u|^{p-1} u of a band-limited real field, evaluated on an oversampled grid.

    Calling the kernel on a half spectrum returns the truncated half spectrum of
    coupling * |u|^{p-1} u and the quadrature of |u|^{p+1} on the fine grid.
    """

    def __init__(self, grid, p, coupling=1.0, oversample=2):
        self.grid = grid
        self.p = p
        self.coupling = coupling
        self.oversample = oversample
        self.m = grid.n * oversample
        self.dv = grid.volume / self.m ** 3
        self.evaluations = 0

    def __call__(self, w_half):
        g = self.grid
        w = g.half_to_physical(w_half, self.oversample)
        # overflow is reported below as FloatingPointError
        with np.errstate(over="ignore", invalid="ignore"):
            r = _power_nl(w, self.p)
            pot = self.dv * float(np.sum(r * w))
        if not (np.isfinite(pot) and np.all(np.isfinite(r))):
            raise FloatingPointError("non-finite values in the nonlinearity")
        G = g.physical_to_half(r)
        if self.coupling != 1.0:
            G *= self.coupling
        self.evaluations += 1
        return G, pot


def nonlinearity(u, p, grid=None, oversample=2):
    """Pointwise |u|^{p-1} u of physical samples, dealiased through an oversampled grid."""
    u = np.asarray(u)
    if np.iscomplexobj(u):
        raise ValueError("the nonlinearity acts on real samples")
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite samples")
    if grid is None:
        from .spectral import make_grid

        grid = make_grid(u.shape[0], 2)
    h = grid.physical_to_half(u)
    G, _ = NonlinearKernel(grid, p, 1.0, oversample)(h)
    return grid.half_to_physical(G)


# -- local windows -----------------------------------------------------------


def lwp_window(lam, p, c_T, dt=0.0, T_max=math.inf):
    """Local existence time c_T * lam^{-2(p-1)/(5-p)} clamped to [dt, T_max]."""
    if not lam > 0:
        raise ValueError("the size parameter lambda must be positive")
    T = c_T * lam ** (-exponent_table(p).window_exponent())
    return float(min(max(T, dt), T_max))


class ContractionFailure(RuntimeError):
    pass


class BlowUp(RuntimeError):
    pass


@dataclass
class WindowResult:
    t0: float
    dt: float
    v: list
    vt: list
    G: list
    potential: np.ndarray
    iterations: int
    residuals: list
    uf: list = None
    uft: list = None

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.v))

    @property
    def ratios(self):
        r = self.residuals
        return [r[i + 1] / r[i] for i in range(len(r) - 1) if r[i] > 0]

    @property
    def max_ratio(self):
        rs = self.ratios
        return max(rs) if rs else 0.0


def _window_tables(grid, dt, m):
    w = grid.abs_xi_half
    cos, sin, sw = [], [], []
    for j in range(m + 1):
        c, s = wave_symbols(w, j * dt)
        cos.append(c)
        sin.append(np.sin(j * dt * w))
        sw.append(s)
    return cos, sin, sw


def picard_solve(state, sampler, t0, steps, dt, kernel, tol=1e-10, max_iters=60,
                 initial_guess="zero", G0=None, free_state=None):
    """Fixed point of the Duhamel map on [t0, t0 + steps*dt] sampled at cadence dt.

    ``state`` is the half-spectrum pair (v, v_t) at t0.  The time integral uses the
    trapezoid rule with the exact kernel sin((t-s)|D|)/|D|; because that kernel
    vanishes at s = t the map is strictly lower triangular in time, so only the
    samples whose iterate changed are re-evaluated.  ``G0`` may carry the
    nonlinearity already known at t0 together with its potential.
    """
    g = sampler.grid
    m = int(steps)
    if m < 1:
        raise ValueError("a window needs at least one step")
    om = g.abs_xi_half
    cos, sin, sw = _window_tables(g, dt, m)
    v1, v2 = state
    if free_state is None:
        U0, Ut0 = sampler.u_half(t0), sampler.ut_half(t0)
    else:
        U0, Ut0 = free_state
    uf = [cos[j] * U0 + sw[j] * Ut0 for j in range(m + 1)]
    uft = [-om * sin[j] * U0 + cos[j] * Ut0 for j in range(m + 1)]
    lin = [cos[j] * v1 + sw[j] * v2 for j in range(m + 1)]
    lin[0] = v1
    if initial_guess == "zero":
        v = [v1] + [np.zeros_like(v1) for _ in range(m)]
    elif initial_guess == "free":
        v = list(lin)
    else:
        raise ValueError("initial_guess must be 'zero' or 'free'")

    G = [None] * (m + 1)
    pot = np.zeros(m + 1)
    used = [None] * (m + 1)
    if G0 is not None:
        G[0], pot[0] = G0
        used[0] = v1

    def refresh(j):
        if used[j] is None or not np.array_equal(used[j], v[j]):
            G[j], pot[j] = kernel(uf[j] + v[j])
            used[j] = v[j]

    residuals = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        C = np.zeros_like(v1)
        S = np.zeros_like(v1)
        new = [v1]
        for j in range(1, m + 1):
            i = j - 1
            refresh(i)
            wgt = 0.5 * dt if i == 0 else dt
            C = C + wgt * cos[i] * G[i]
            S = S + wgt * sw[i] * G[i]
            new.append(lin[j] - (sw[j] * C - cos[j] * S))
        res = max(math.sqrt(g.half_norm2(new[j] - v[j])) for j in range(1, m + 1))
        residuals.append(res)
        v = new
        if res < tol:
            converged = True
            break
        if len(residuals) >= 2 and residuals[-2] > 0 and res >= residuals[-2]:
            break
    if not converged:
        raise ContractionFailure(
            f"Picard iteration did not contract on [{t0:.6g}, {t0 + m * dt:.6g}] "
            f"(residuals {', '.join(f'{r:.2e}' for r in residuals[-3:])})")

    # velocities need the nonlinearity of the final iterate at every sample
    vt = [v2]
    C = np.zeros_like(v1)
    S = np.zeros_like(v1)
    refresh(0)
    for j in range(1, m + 1):
        i = j - 1
        wgt = 0.5 * dt if i == 0 else dt
        C = C + wgt * cos[i] * G[i]
        S = S + wgt * sw[i] * G[i]
        refresh(j)
        Cj = C + 0.5 * dt * cos[j] * G[j]
        Sj = S + 0.5 * dt * sw[j] * G[j]
        lin_t = -om * sin[j] * v1 + cos[j] * v2
        vt.append(lin_t - (cos[j] * Cj + om * sin[j] * Sj))
    return WindowResult(t0, dt, v, vt, G, pot, it, residuals, uf, uft)


def _half_linear_flow(grid, v, vt, tau):
    om = grid.abs_xi_half
    c, s = wave_symbols(om, tau)
    return c * v + s * vt, -om * np.sin(tau * om) * v + c * vt


def reference_integrate(state, sampler, t0, t1, dt, kernel, blowup_threshold=1e12, record_every=None):
    """Strang splitting: exact linear half step, nonlinear kick, exact linear half step.

    Returns the end state and, if ``record_every`` is given, the states every that
    many steps as a list of (t, v, v_t).
    """
    g = sampler.grid
    steps = int(round((t1 - t0) / dt))
    if steps < 0 or abs(t0 + steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ValueError("the interval must be a whole number of steps")
    v, vt = state
    om = g.abs_xi_half
    c, s = wave_symbols(om, 0.5 * dt)
    sn = -om * np.sin(0.5 * dt * om)
    rec = [(t0, v, vt)] if record_every else []
    for j in range(steps):
        v, vt = c * v + s * vt, sn * v + c * vt
        tm = t0 + (j + 0.5) * dt
        G, _ = kernel(sampler.u_half(tm) + v)
        vt = vt - dt * G
        v, vt = c * v + s * vt, sn * v + c * vt
        if not (np.all(np.isfinite(v)) and g.half_norm2(vt) < blowup_threshold):
            raise BlowUp(f"reference integration left the finite regime near t = {tm:.4g}")
        if record_every and (j + 1) % record_every == 0:
            rec.append((t0 + (j + 1) * dt, v, vt))
    return (v, vt), rec


def standard_energy(grid, v, vt, p, coupling=1.0, oversample=2):
    """1/2|v_t|^2 + 1/2|grad v|^2 + c/(p+1)|v|^{p+1} integrated over the box."""
    kin = 0.5 * grid.half_norm2(vt)
    grad = 0.5 * grid.half_norm2(v, grid.abs_xi_half ** 2)
    _, pot = NonlinearKernel(grid, p, 1.0, oversample)(v)
    return kin + grad + coupling * pot / (p + 1.0)


def h1_norm2(grid, v, vt):
    """Squared energy-space norm |v|_{H^1}^2 + |v_t|_{L^2}^2 of half spectra."""
    return grid.half_norm2(v, grid.bracket_xi_half ** 2) + grid.half_norm2(vt)


# -- global runs -------------------------------------------------------------


@dataclass
class SolutionTrajectory:
    """Per-step scalar diagnostics plus field snapshots at the output cadence."""

    grid: object
    p: float
    coupling: float
    dt: float
    times: np.ndarray
    kinetic: np.ndarray
    gradient: np.ndarray
    mass: np.ndarray
    potential: np.ndarray
    dEdt_formula: np.ndarray
    h1_sq: np.ndarray
    window_index: np.ndarray
    lp1_integral: np.ndarray
    snapshot_steps: np.ndarray
    v: list
    vt: list
    window_bounds: list
    status: str
    max_ratio: float = 0.0
    iterations: list = field(default_factory=list)
    evaluations: int = 0

    @property
    def energy(self):
        return self.kinetic + self.gradient + self.mass + self.potential

    @property
    def snapshot_times(self):
        return self.times[self.snapshot_steps]

    @property
    def T_end(self):
        return float(self.times[-1])

    def dEdt_fd(self):
        """Central differences of the energy (one-sided at the ends)."""
        E = self.energy
        d = np.full(E.shape, np.nan)
        if E.size >= 3:
            d[1:-1] = (E[2:] - E[:-2]) / (2.0 * self.dt)
        return d

    def state(self, i):
        """Snapshot i as SpectralFields (v, v_t)."""
        return (SpectralField.from_half(self.grid, self.v[i]),
                SpectralField.from_half(self.grid, self.vt[i]))


class ForcingNormTable:
    """Coarse-cadence table of |u_f(t)|_{L^{2p}}^q for window sizing."""

    def __init__(self, sampler, p, t_end, cadence=0.05):
        self.q = exponent_table(p).q
        self.r = 2.0 * p
        self.cadence = cadence
        n = int(math.ceil(t_end / cadence)) + 1
        self.t = cadence * np.arange(n)
        g = sampler.grid
        vals = []
        for t in self.t:
            u = g.half_to_physical(sampler.u_half(t))
            vals.append((g.cell_volume * np.sum(np.abs(u) ** self.r)) ** (1.0 / self.r))
        self.values = np.array(vals)

    def norm(self, a, b):
        """L^q_t L^{2p}_x norm of u_f over [a, b] (table cells covering the interval)."""
        i0 = int(math.floor(a / self.cadence + 1e-9))
        i1 = int(math.ceil(b / self.cadence - 1e-9))
        i1 = min(max(i1, i0 + 1), self.t.size - 1)
        i0 = min(i0, i1 - 1)
        if i0 < 0:
            return 0.0
        return time_norm(self.t[i0:i1 + 1], self.values[i0:i1 + 1], self.q)


def window_steps(cfg, lam, remaining_steps):
    if cfg.window_policy == "fixed":
        T = cfg.fixed_window
    elif lam <= 0:
        T = cfg.max_window
    else:
        T = lwp_window(lam, cfg.p, cfg.c_T, cfg.dt, cfg.max_window)
    T = min(T, cfg.max_window)
    return int(max(1, min(remaining_steps, math.floor(T / cfg.dt + 1e-9))))


def global_extend(data, cfg, sampler=None, progress=None):
    """Iterate local Picard windows from v = 0 up to T_max or a terminal status."""
    g = data.grid
    sampler = sampler or FreeEvolutionSampler(data)
    kernel = NonlinearKernel(g, cfg.p, cfg.coupling)
    total = int(round(cfg.T_max / cfg.dt))
    stride = cfg.output_stride
    lookahead = cfg.max_window if cfg.window_policy == "paper_formula" else cfg.fixed_window
    table = ForcingNormTable(sampler, cfg.p, cfg.T_max + lookahead) if cfg.window_policy == "paper_formula" else None

    zero = np.zeros(g.half_shape, dtype=complex)
    v, vt = zero, zero.copy()
    rows = {k: [] for k in ("t", "kin", "grad", "mass", "pot", "lp1", "dE", "h1", "win")}
    snaps, snap_v, snap_vt = [], [], []
    bounds = [0.0]
    iterations = []
    max_ratio = 0.0
    status = "reached_Tmax"
    G0 = None
    U0, Ut0 = sampler.u_half(0.0), sampler.ut_half(0.0)
    p1 = cfg.p + 1.0

    def record(step, t, vj, vtj, Gj, potj, uftj, win):
        kin = 0.5 * g.half_norm2(vtj)
        grad = 0.5 * g.half_norm2(vj, g.abs_xi_half ** 2)
        mass = 0.5 * g.half_norm2(vj)
        rows["t"].append(t)
        rows["kin"].append(kin)
        rows["grad"].append(grad)
        rows["mass"].append(mass)
        rows["pot"].append(cfg.coupling * potj / p1)
        rows["lp1"].append(potj)
        rows["dE"].append(g.half_inner(vj, vtj) + g.half_inner(uftj, Gj))
        rows["h1"].append(2.0 * (grad + mass + kin))
        rows["win"].append(win)
        if step % stride == 0 or step == total:
            snaps.append(len(rows["t"]) - 1)
            snap_v.append(vj)
            snap_vt.append(vtj)

    step = 0
    win = 0
    if total == 0:
        G, pot = kernel(U0)
        record(0, 0.0, v, vt, G, pot, Ut0, 0)
    while step < total:
        t0 = step * cfg.dt
        lam = 0.0
        if table is not None:
            lam = math.sqrt(h1_norm2(g, v, vt)) + table.norm(t0, t0 + cfg.max_window)
        m = window_steps(cfg, lam, total - step)
        res = None
        for _ in range(cfg.max_halvings + 1):
            try:
                res = picard_solve((v, vt), sampler, t0, m, cfg.dt, kernel, cfg.picard_tol,
                                   cfg.picard_max_iters, G0=G0, free_state=(U0, Ut0))
                break
            except ContractionFailure:
                if m == 1:
                    break
                m = max(1, m // 2)
            except FloatingPointError:
                res = None
                status = "blowup"
                break
        if res is None:
            if status != "blowup":
                status = "contraction_failure"
            break
        iterations.append(res.iterations)
        max_ratio = max(max_ratio, res.max_ratio)
        first = 0 if step == 0 else 1
        for j in range(first, m + 1):
            record(step + j, t0 + j * cfg.dt, res.v[j], res.vt[j], res.G[j], res.potential[j], res.uft[j], win)
        step += m
        v, vt = res.v[m], res.vt[m]
        G0 = (res.G[m], res.potential[m])
        U0, Ut0 = res.uf[m], res.uft[m]
        bounds.append(step * cfg.dt)
        win += 1
        E = rows["kin"][-1] + rows["grad"][-1] + rows["mass"][-1] + rows["pot"][-1]
        if not np.isfinite(E) or abs(E) > cfg.blowup_threshold:
            status = "blowup"
            break
        if progress is not None:
            progress(step, total)

    arr = {k: np.array(val) for k, val in rows.items()}
    return SolutionTrajectory(
        grid=g, p=cfg.p, coupling=cfg.coupling, dt=cfg.dt, times=arr["t"], kinetic=arr["kin"],
        gradient=arr["grad"], mass=arr["mass"], potential=arr["pot"], dEdt_formula=arr["dE"],
        h1_sq=arr["h1"], window_index=arr["win"].astype(int), lp1_integral=arr["lp1"], snapshot_steps=np.array(snaps, dtype=int),
        v=snap_v, vt=snap_vt, window_bounds=bounds, status=status, max_ratio=max_ratio,
        iterations=iterations, evaluations=kernel.evaluations)


def calibrate_c_T(draws, cfg, exponents=range(-8, 9)):
    """Largest c_T = 2^j whose first window contracts (all ratios < 0.9) for every draw.

    ``draws`` is a sequence of randomized DataPairs.  Returns (c_T, report) where the
    report lists, per tried constant, the window length and the worst ratio.
    """
    report = []
    best = None
    for j in sorted(exponents):
        c_T = 2.0 ** j
        c = cfg.with_(c_T=c_T)
        ok = True
        worst = 0.0
        steps_used = []
        for d in draws:
            sampler = FreeEvolutionSampler(d)
            kernel = NonlinearKernel(d.grid, c.p, c.coupling)
            table = ForcingNormTable(sampler, c.p, c.max_window)
            lam = table.norm(0.0, c.max_window)
            m = window_steps(c, lam, int(round(c.T_max / c.dt)) or 1)
            steps_used.append(m)
            zero = np.zeros(d.grid.half_shape, dtype=complex)
            try:
                r = picard_solve((zero, zero.copy()), sampler, 0.0, m, c.dt, kernel, c.picard_tol,
                                 c.picard_max_iters)
                worst = max(worst, r.max_ratio)
                ok = ok and r.max_ratio < 0.9
            except (ContractionFailure, FloatingPointError):
                ok = False
                worst = math.inf
        report.append({"c_T": c_T, "steps": max(steps_used), "worst_ratio": worst, "contracts": ok})
        if ok:
            best = c_T
    if best is None:
        raise ContractionFailure("no calibration constant gave a contracting first window")
    return best, report
