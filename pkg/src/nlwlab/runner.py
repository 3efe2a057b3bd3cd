"""Experiment configuration, validation, artifact writing and replay."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import datetime
import hashlib
import json
import logging
import math
import os
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import __version__
from .deviation import check_campaign_window, strichartz_tail_campaign
from .energy import EnvelopeParams, envelope_check, growth_functionals, initial_block
from .propagator import FreeEvolutionSampler
from .randomizer import (DISTRIBUTIONS, PROFILES, RandomCoefficients, draw_seed, randomize, sample_coefficients,
                         synthesize_data)
from .solver import NonlinearKernel, SolverConfig, exponent_table, global_extend
from .spectral import MixedNormSpec, SpectralField, UnitPartition, make_grid

log = logging.getLogger("nlwlab")

WORKERS_ENV = "NLWLAB_WORKERS"
MODES = ("simulate", "tails", "audit", "exponents")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

TRAJECTORY_COLUMNS = ("t", "E", "dEdt_formula", "dEdt_fd", "H1_norm_v", "L2_norm_vt", "Lp1_norm_u",
                      "A_of_t", "B_of_t", "window_index")


class ConfigError(ValueError):
    """Raised with the full list of violated parameter windows."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class ChecksumMismatch(RuntimeError):
    pass


# -- configuration -----------------------------------------------------------


@dataclass
class GridSection:
    points_per_axis: int = 32
    box_multiple: int = 2


@dataclass
class PhysicsSection:
    p: float = 4.0
    s: float = 0.75
    delta: float = None
    eps_plus: float = 0.01
    amplitude: float = 10.0
    profile: str = "power_law"
    coupling: float = 1.0


@dataclass
class RandomizationSection:
    distribution: str = "gaussian"
    seed: int = 20240601
    n_draws: int = 20


@dataclass
class SolverSection:
    dt: float = 2e-3
    T_max: float = 20.0
    picard_tol: float = 1e-10
    picard_max_iters: int = 60
    c_T: float = 64.0
    blowup_threshold: float = 1e12
    window_policy: str = "paper_formula"
    max_window: float = 0.25
    output_every: float = 0.05


@dataclass
class CampaignSection:
    q: float = 4.0
    r: float = 4.0
    delta_weight: float = 1.3
    T_mc: float = 20.0
    dt_mc: float = 0.1
    n_samples: int = 2000
    evolution: str = "u"
    sobolev_weight: float = 0.0
    headroom: float = None
    lambda_policy: str = "auto"
    lambda_values: list = None


@dataclass
class AuditSection:
    corpus: int = 100
    sigma: float = 0.5
    seed: int = 7
    bernstein_points: int = 16


@dataclass
class OutputSection:
    directory: str = "out"


SECTIONS = {
    "grid": GridSection,
    "physics": PhysicsSection,
    "randomization": RandomizationSection,
    "solver": SolverSection,
    "campaign": CampaignSection,
    "audit": AuditSection,
    "output": OutputSection,
}


@dataclass
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    randomization: RandomizationSection = field(default_factory=RandomizationSection)
    solver: SolverSection = field(default_factory=SolverSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)
    audit: AuditSection = field(default_factory=AuditSection)
    output: OutputSection = field(default_factory=OutputSection)

    def as_dict(self):
        return {name: _drop_none(asdict(getattr(self, name))) for name in SECTIONS}

    def computational_dict(self):
        """Everything except the output location (which does not affect results)."""
        d = self.as_dict()
        d.pop("output")
        return d

    def hash(self):
        blob = json.dumps(self.computational_dict(), sort_keys=True, default=_json_default).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_toml(self):
        return tomli_w.dumps(self.as_dict())


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _coerce(cls, name, value):
    f = {x.name: x for x in fields(cls)}[name]
    default = f.default
    if value is None:
        return None
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError([f"{name} must be an integer, got {value}"])
        return int(value)
    if isinstance(default, float) or (default is None and name not in ("lambda_values",)):
        return float(value)
    if name == "lambda_values":
        return [float(x) for x in value]
    return value


def config_from_dict(data):
    problems = []
    sections = {}
    for name, cls in SECTIONS.items():
        raw = dict(data.get(name, {}))
        known = {f.name for f in fields(cls)}
        for key in raw:
            if key not in known:
                problems.append(f"unknown key {name}.{key}")
        kwargs = {}
        for key in known & raw.keys():
            try:
                kwargs[key] = _coerce(cls, key, raw[key])
            except (TypeError, ValueError) as exc:
                problems.append(f"{name}.{key}: {exc}")
        sections[name] = cls(**kwargs)
    for name in data:
        if name not in SECTIONS and name != "mode":
            problems.append(f"unknown section [{name}]")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**sections)


def load_config(path=None, overrides=None):
    """Config from a TOML file (optional) with dotted-key overrides applied on top."""
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError([f"cannot parse {path}: {exc}"])
    for key, value in (overrides or {}).items():
        sec, _, name = key.partition(".")
        data.setdefault(sec, {})[name] = value
    return config_from_dict(data)


def flag_table():
    """(dotted key, section class, field) for every config entry, used to build CLI flags."""
    out = []
    for sec, cls in SECTIONS.items():
        for f in fields(cls):
            out.append((f"{sec}.{f.name}", cls, f))
    return out


# -- validation ---------------------------------------------------------------


def validate(cfg, mode="simulate"):
    """Every violated parameter window, as human-readable messages (empty if valid)."""
    out = []
    g, ph, rz, so, ca = cfg.grid, cfg.physics, cfg.randomization, cfg.solver, cfg.campaign
    try:
        make_grid(g.points_per_axis, g.box_multiple)
    except ValueError as exc:
        out.append(f"grid: {exc}")
    p = ph.p
    p_ok = 3.0 < p < 5.0
    if not p_ok:
        out.append(f"the energy-subcritical, mass-supercritical power range requires 3 < p < 5 (got p = {p})")
    if not 0.0 < ph.s < 1.0:
        out.append(f"data synthesis requires 0 < s < 1 (got s = {ph.s})")
    if p_ok:
        tab = exponent_table(p)
        if not tab.s_low < ph.s < 1.0:
            out.append(f"the almost sure global existence window requires (p-1)/(p+1) = {tab.s_low:.6g} < s < 1 "
                       f"(got s = {ph.s})")
        else:
            try:
                EnvelopeParams(p, ph.s, ph.delta, ph.eps_plus)
            except ValueError as exc:
                out.append(f"energy growth bound window: {exc}")
    if ph.profile not in PROFILES:
        out.append(f"physics.profile must be one of {PROFILES}")
    if not ph.amplitude >= 0:
        out.append("physics.amplitude must be non-negative")
    if rz.distribution not in DISTRIBUTIONS:
        out.append(f"randomization.distribution must be one of {DISTRIBUTIONS}")
    if rz.n_draws < 0:
        out.append("randomization.n_draws must be non-negative")
    if not 0 <= rz.seed < 2 ** 64:
        out.append("randomization.seed must fit in 64 bits")
    if not so.dt > 0:
        out.append("solver.dt must be positive")
    else:
        if not so.T_max >= 0 or abs(so.T_max / so.dt - round(so.T_max / so.dt)) > 1e-6:
            out.append("solver.T_max must be a non-negative multiple of solver.dt")
        if abs(so.output_every / so.dt - round(so.output_every / so.dt)) > 1e-6 or so.output_every < so.dt:
            out.append("solver.output_every must be a positive multiple of solver.dt")
    if not so.picard_tol > 0:
        out.append("solver.picard_tol must be positive")
    if so.picard_max_iters < 1:
        out.append("solver.picard_max_iters must be at least 1")
    if not so.c_T > 0 or not so.max_window > 0:
        out.append("solver.c_T and solver.max_window must be positive")
    if so.window_policy not in ("paper_formula", "fixed"):
        out.append("solver.window_policy must be 'paper_formula' or 'fixed'")
    if not so.blowup_threshold > 0:
        out.append("solver.blowup_threshold must be positive")
    if mode == "tails":
        try:
            spec = MixedNormSpec(ca.q, ca.r, ca.delta_weight, ca.T_mc)
            check_campaign_window(spec, ca.sobolev_weight, ca.headroom, ph.s)
        except ValueError as exc:
            out.append(f"weighted tail bound window: {exc}")
        if ca.evolution not in ("u", "utilde"):
            out.append("campaign.evolution must be 'u' or 'utilde'")
        if ca.n_samples < 1:
            out.append("campaign.n_samples must be positive")
        if not ca.dt_mc > 0 or not ca.T_mc > 0:
            out.append("campaign.T_mc and campaign.dt_mc must be positive")
        if ca.lambda_policy not in ("auto", "explicit"):
            out.append("campaign.lambda_policy must be 'auto' or 'explicit'")
        elif ca.lambda_policy == "explicit" and not ca.lambda_values:
            out.append("campaign.lambda_values is required when lambda_policy = 'explicit'")
    if cfg.audit.corpus < 1:
        out.append("audit.corpus must be positive")
    if mode == "audit":
        try:
            make_grid(cfg.audit.bernstein_points, g.box_multiple)
        except ValueError as exc:
            out.append(f"audit.bernstein_points: {exc}")
        if not 0.0 < cfg.audit.sigma < 1.0 or not cfg.audit.sigma * (p - 1.0) / 2.0 < 1.0:
            out.append("the interpolation audit requires 0 < sigma < 1 and sigma (p-1)/2 < 1")
    return out


def solver_config(cfg):
    so = cfg.solver
    return SolverConfig(p=cfg.physics.p, dt=so.dt, window_policy=so.window_policy, picard_tol=so.picard_tol,
                        picard_max_iters=so.picard_max_iters, blowup_threshold=so.blowup_threshold,
                        T_max=so.T_max, c_T=so.c_T, max_window=so.max_window, coupling=cfg.physics.coupling,
                        output_every=so.output_every)


def workers_from_env():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# -- artifact helpers ----------------------------------------------------------


def sha256_bytes(b):
    return hashlib.sha256(b).hexdigest()


def sha256_file(path):
    return sha256_bytes(Path(path).read_bytes())


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def csv_bytes(header, rows, cfg):
    """CSV with '#' lines carrying the config and a checksum of the data section."""
    body = ",".join(header) + "\n" + "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)
    conf = json.dumps(cfg.computational_dict(), sort_keys=True, default=_json_default)
    return (f"# config: {conf}\n# sha256: {sha256_bytes(body.encode())}\n" + body).encode()


def json_bytes(payload, cfg):
    """JSON document with the config embedded and a checksum over its content."""
    doc = {"config": cfg.computational_dict(), **payload}
    content = json.dumps(doc, sort_keys=True, default=_json_default, allow_nan=False)
    doc["sha256"] = sha256_bytes(content.encode())
    return (json.dumps(doc, sort_keys=True, indent=1, default=_json_default, allow_nan=False) + "\n").encode()


def _clean(x):
    # JSON has no inf/nan
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# -- simulate -------------------------------------------------------------------


def simulate_draw(cfg, index):
    """One randomized global run; returns the artifact payloads and a summary."""
    g = make_grid(cfg.grid.points_per_axis, cfg.grid.box_multiple)
    part = UnitPartition(g)
    ph = cfg.physics
    data = synthesize_data(ph.s, ph.amplitude, ph.profile, partition=part)
    seed = draw_seed(cfg.randomization.seed, index)
    coeffs = sample_coefficients(cfg.randomization.distribution, seed, part.k_max)
    rdata = randomize(data, coeffs, part)
    sc = solver_config(cfg)
    sampler = FreeEvolutionSampler(rdata)
    traj = global_extend(rdata, sc, sampler)
    params = EnvelopeParams(ph.p, ph.s, ph.delta, ph.eps_plus)
    ts = traj.snapshot_times
    gf = growth_functionals(sampler, ts, params)
    idx = traj.snapshot_steps
    fd = traj.dEdt_fd()
    rows = []
    with np.errstate(invalid="ignore"):
        lp1 = traj.lp1_integral ** (1.0 / (ph.p + 1.0))
    for n, i in enumerate(idx):
        rows.append((traj.times[i], traj.energy[i], traj.dEdt_formula[i], fd[i],
                     math.sqrt(2.0 * (traj.gradient[i] + traj.mass[i])), math.sqrt(2.0 * traj.kinetic[i]),
                     lp1[i], gf.A[n], gf.B[n], traj.window_index[i]))
    summary = {
        "index": index,
        "seed": seed,
        "status": traj.status,
        "T_end": traj.T_end,
        "windows": len(traj.window_bounds) - 1,
        "picard_max_ratio": traj.max_ratio,
        "nonlinearity_evaluations": traj.evaluations,
        "E_max": float(np.max(traj.energy)),
        "dEdt_mismatch_max": float(np.nanmax(np.abs(traj.dEdt_formula - fd) / np.maximum(1.0, np.abs(traj.dEdt_formula))))
        if traj.times.size >= 3 else None,
        "aliasing_defect": aliasing_defect(rdata, ph.p),
    }
    if sc.defocusing and traj.status == "reached_Tmax" and traj.T_end > 0:
        zero = SpectralField.zeros(g)
        block = initial_block(zero, zero, rdata.f1, ph.p)
        env = envelope_check(ts, traj.h1_sq[idx], traj.energy, gf.A, gf.B, block, traj.T_end)
        summary["envelope"] = {**env.as_dict(), "dominated": env.dominated, "initial_block": block}
    return rows, coeffs.to_bytes(), summary


def aliasing_defect(rdata, p):
    """Relative difference of the dealiased nonlinearity at t = 0 between 2x and 3x oversampling."""
    g = rdata.grid
    h = rdata.f1.half()
    a, _ = NonlinearKernel(g, p, 1.0, 2)(h)
    b, _ = NonlinearKernel(g, p, 1.0, 3)(h)
    nb = g.half_norm2(b)
    return math.sqrt(g.half_norm2(a - b) / nb) if nb > 0 else 0.0


def _simulate_task(args):
    cfg, index = args
    return simulate_draw(cfg, index)


def _map_ordered(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def run_simulate(cfg, outdir, workers=1):
    artifacts = {}
    draws = []
    summaries = []
    results = _map_ordered(_simulate_task, [(cfg, i) for i in range(cfg.randomization.n_draws)], workers)
    for i, (rows, coef_blob, summary) in enumerate(results):
        d = Path("draws") / str(i)
        artifacts[str(d / "trajectory.csv")] = csv_bytes(TRAJECTORY_COLUMNS, rows, cfg)
        artifacts[str(d / "coefficients.rwcf")] = coef_blob
        draws.append({"index": i, "seed": summary["seed"], "coefficients": str(d / "coefficients.rwcf")})
        summaries.append(summary)
    env = [s["envelope"] for s in summaries if "envelope" in s]
    report = {
        "mode": "simulate",
        "draws": summaries,
        "statuses": {st: sum(1 for s in summaries if s["status"] == st) for st in
                     ("reached_Tmax", "blowup", "contraction_failure")},
        "envelope_dominated": sum(1 for e in env if e["dominated"]),
        "envelope_checked": len(env),
        "C_fit_distribution": _distribution([e["C_fit"] for e in env]),
        "variance_convention": "E|h_k|^2 = 1 (real and imaginary parts of variance 1/2 off the origin)",
    }
    artifacts["report.json"] = json_bytes(_clean(report), cfg)
    failed = any(s["status"] != "reached_Tmax" for s in summaries)
    return artifacts, draws, (EXIT_NUMERICAL if failed else EXIT_OK)


def _distribution(vals):
    if not vals:
        return None
    v = np.array(vals)
    return {"min": float(v.min()), "median": float(np.median(v)), "max": float(v.max())}


# -- tails ---------------------------------------------------------------------------


def campaign_estimate(cfg, workers=1):
    g = make_grid(cfg.grid.points_per_axis, cfg.grid.box_multiple)
    ph, ca = cfg.physics, cfg.campaign
    data = synthesize_data(ph.s, ph.amplitude, ph.profile, partition=UnitPartition(g))
    spec = MixedNormSpec(ca.q, ca.r, ca.delta_weight, ca.T_mc)
    lam = None if ca.lambda_policy == "auto" else np.array(ca.lambda_values, dtype=float)
    return strichartz_tail_campaign(data, ca.evolution, ca.sobolev_weight, spec, lam, ca.n_samples,
                                    cfg.randomization.seed, cfg.randomization.distribution, ca.T_mc, ca.dt_mc,
                                    ca.headroom, workers)


def run_tails(cfg, outdir, workers=1):
    est = campaign_estimate(cfg, workers)
    artifacts = {
        "report.json": json_bytes(_clean({"mode": "tails", **est.report()}), cfg),
        "tails.csv": csv_bytes(("lambda", "lambda_sq", "log_p_hat"), est.csv_rows(), cfg),
    }
    return artifacts, [], EXIT_OK


# -- exponents ----------------------------------------------------------------------

EXPONENT_P_GRID = (3.2, 3.5, 4.0, 4.5, 4.9)


def exponent_rows(p_values, s):
    rows = []
    for p in p_values:
        t = exponent_table(p)
        rows.append((p, t.s_c, t.s_low, t.q, t.alpha, t.delta_max(s)))
    return rows


def run_exponents(cfg, outdir, workers=1):
    ps = sorted(set(EXPONENT_P_GRID) | {cfg.physics.p})
    rows = exponent_rows(ps, cfg.physics.s)
    cols = ("p", "s_c", "s_low", "q", "alpha", "delta_max_at_s")
    sc = [r[1] for r in rows]
    sl = [r[2] for r in rows]
    report = {
        "mode": "exponents",
        "s": cfg.physics.s,
        "table": [dict(zip(cols, r)) for r in rows],
        "s_c_increasing": bool(np.all(np.diff(sc) > 0)),
        "s_low_increasing": bool(np.all(np.diff(sl) > 0)),
        "supercritical_gap": bool(all(a > b for a, b in zip(sc, sl))),
    }
    return {"exponents.csv": csv_bytes(cols, rows, cfg), "report.json": json_bytes(_clean(report), cfg)}, [], EXIT_OK


# -- audit -----------------------------------------------------------------------------


def run_audit(cfg, outdir, workers=1):
    from .audit import audit_report

    report = audit_report(cfg)
    return {"report.json": json_bytes(_clean({"mode": "audit", **report}), cfg)}, [], EXIT_OK


RUNNERS = {"simulate": run_simulate, "tails": run_tails, "audit": run_audit, "exponents": run_exponents}


# -- orchestration ----------------------------------------------------------------------


def make_run_id(cfg, now=None):
    now = now or datetime.datetime.now(datetime.timezone.utc)
    return now.strftime("%Y%m%dT%H%M%SZ") + "-" + cfg.hash()[:10]


def produce(cfg, mode, workers=1):
    """Compute all artifacts of a run in memory: (artifacts, draws, exit code)."""
    return RUNNERS[mode](cfg, None, workers)


def write_run(cfg, mode, outdir, artifacts, draws, code, run_id):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.snapshot").write_text(f'mode = "{mode}"\n' + cfg.to_toml())
    for rel, blob in artifacts.items():
        path = outdir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    manifest = {
        "run_id": run_id,
        "mode": mode,
        "package_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.computational_dict(),
        "config_hash": cfg.hash(),
        "artifacts": {rel: sha256_bytes(blob) for rel, blob in sorted(artifacts.items())},
        "draws": draws,
        "exit_code": code,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=_json_default) + "\n")
    return outdir


def run_experiment(cfg, mode, out_root=None, workers=None, run_id=None):
    """Validate, compute and write one run; returns (exit code, run directory or None)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    problems = validate(cfg, mode)
    if problems:
        raise ConfigError(problems)
    workers = workers_from_env() if workers is None else workers
    artifacts, draws, code = produce(cfg, mode, workers)
    run_id = run_id or make_run_id(cfg)
    root = Path(out_root if out_root is not None else cfg.output.directory)
    outdir = write_run(cfg, mode, root / run_id, artifacts, draws, code, run_id)
    return code, outdir


def replay(manifest_path, workers=None):
    """Regenerate every artifact of a run and compare checksums; returns the list of verified files."""
    manifest_path = Path(manifest_path)
    man = json.loads(manifest_path.read_text())
    cfg = config_from_dict(man["config"])
    if cfg.hash() != man.get("config_hash"):
        raise ChecksumMismatch("manifest config does not match its recorded config hash")
    problems = validate(cfg, man["mode"])
    if problems:
        raise ConfigError(problems)
    for d in man.get("draws", []):
        if d["seed"] != draw_seed(cfg.randomization.seed, d["index"]):
            raise ChecksumMismatch(f"seed of draw {d['index']} does not derive from the configured seed")
        side = manifest_path.parent / d["coefficients"]
        if side.exists():
            stored = RandomCoefficients.read(side)
            if stored.seed != d["seed"]:
                raise ChecksumMismatch(f"coefficient file of draw {d['index']} carries a different seed")
    workers = workers_from_env() if workers is None else workers
    artifacts, draws, _ = produce(cfg, man["mode"], workers)
    expected = man["artifacts"]
    if set(expected) != set(artifacts):
        raise ChecksumMismatch("replay produced a different set of artifacts")
    bad = [rel for rel, blob in artifacts.items() if sha256_bytes(blob) != expected[rel]]
    if bad:
        raise ChecksumMismatch("checksum mismatch for: " + ", ".join(sorted(bad)))
    on_disk = [rel for rel in expected
               if (manifest_path.parent / rel).exists() and sha256_file(manifest_path.parent / rel) != expected[rel]]
    if on_disk:
        raise ChecksumMismatch("stored artifacts differ from the manifest: " + ", ".join(sorted(on_disk)))
    return sorted(artifacts)
