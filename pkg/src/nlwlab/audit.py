"""Corpus audits of the fractional inequalities and of the discrete identities."""
import math

import numpy as np

from .energy import chain_rule_audit, interpolant_weights_ok, interpolation_audit
from .randomizer import draw_seed, randomize, synthesize_data, unit_coefficients
from .spectral import (SpectralField, UnitPartition, bernstein_shell_means, make_grid, pad_half,
                       unit_bernstein_ratios, unit_projection)


def corpus_field(grid, seed, index, cutoff=3.5, decay=1.0):
    """Band-limited random real field: gaussian coefficients times <xi>^-decay on |xi| <= cutoff.

    The coefficients depend only on (seed, index) and the box, not on the number
    of grid points, provided the cutoff is resolved; refining the grid yields the
    same trigonometric polynomial.
    """
    M = grid.box_multiple
    nc = int(math.floor(cutoff * M))
    if nc >= grid.n // 2:
        raise ValueError(f"cutoff {cutoff} is not resolved by {grid.n} points")
    base = make_grid(_base_points(nc), M)
    rng = np.random.Generator(np.random.Philox(key=[draw_seed(seed, index), 2]))
    h = rng.standard_normal(base.half_shape) + 1j * rng.standard_normal(base.half_shape)
    h *= (base.abs_xi_half <= cutoff) * base.bracket_xi_half ** (-decay)
    # rebuild through the full spectrum so the kz = 0 plane is Hermitian
    c = SpectralField.from_half(base, h).coeffs
    c = 0.5 * (c + np.conj(c[np.ix_(base.reflection, base.reflection, base.reflection)]))
    h = c[:, :, : base.n // 2 + 1]
    if base.n != grid.n:
        h = pad_half(h, grid.n)
    return SpectralField.from_half(grid, h)


def _base_points(nc):
    n = 8
    while n // 2 <= nc:
        n *= 2
    return n


def corpus(grid, size, seed, cutoff=3.5):
    return [corpus_field(grid, seed, i, cutoff) for i in range(size)]


def chain_rule_exponents(p):
    """(r, r1, r2) = ((p+1)/p, (p+1)/(p-1), p+1)."""
    return (p + 1.0) / p, (p + 1.0) / (p - 1.0), p + 1.0


def inequality_audit(points, box_multiple, p, sigma, size, seed, cutoff=3.5):
    """Max and median lhs/rhs ratios of both fractional inequalities over a corpus."""
    g = make_grid(points, box_multiple)
    r, r1, r2 = chain_rule_exponents(p)
    cr, ip = [], []
    for f in corpus(g, size, seed, cutoff):
        cr.append(chain_rule_audit(f, p, sigma, r, r1, r2)[2])
        ip.append(interpolation_audit(f, sigma, p)[2])
    cr, ip = np.array(cr), np.array(ip)
    return {
        "points_per_axis": points,
        "chain_rule": {"sigma": sigma, "r": r, "r1": r1, "r2": r2, "max_ratio": float(cr.max()),
                       "median_ratio": float(np.median(cr))},
        "interpolation": {"sigma": sigma, "max_ratio": float(ip.max()), "median_ratio": float(np.median(ip))},
    }


def refinement_stability(coarse, fine):
    """Relative change of the corpus max ratios between two resolutions."""
    out = {}
    for name in ("chain_rule", "interpolation"):
        a, b = coarse[name]["max_ratio"], fine[name]["max_ratio"]
        out[name] = abs(b - a) / abs(a) if a else math.inf
    return out


def white_noise_field(grid, seed, index):
    """Complex field with independent standard gaussian coefficients at every lattice point.

    Its law is invariant under modulation by lattice frequencies, so every unit
    cell sees the same distribution of P_k f.
    """
    rng = np.random.Generator(np.random.Philox(key=[draw_seed(seed, index), 3]))
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return SpectralField(grid, c, False)


def bernstein_audit(grid, size, seed):
    """Per-cell max of |P_k f|_inf / |P_k f|_2 over a white-noise corpus, summarised by shell."""
    part = UnitPartition(grid)
    ratios = unit_bernstein_ratios((white_noise_field(grid, seed, i) for i in range(size)), part)
    shells = bernstein_shell_means(ratios, part)
    return {"max_ratio": float(ratios.max()), "shell_means": [float(x) for x in shells],
            "shell_variation": float(shells.max() / shells.min() - 1.0)}


def identity_audit(grid, seed):
    """Discrete identities that must hold to rounding error."""
    part = UnitPartition(grid)
    interior = part.interior_mask
    data = synthesize_data(0.75, 1.0, partition=part)
    f = data.f1
    ones = randomize(data, unit_coefficients(part.k_max), part).f1
    worst_conj = 0.0
    for k in part.cells[: min(len(part.cells), 27)]:
        a = unit_projection(f, k, part).conjugate()
        b = unit_projection(f, tuple(-x for x in k), part)
        worst_conj = max(worst_conj, float(np.max(np.abs(a.coeffs - b.coeffs))))
    u = f.physical()
    l2_phys = math.sqrt(np.sum(u * u) * grid.cell_volume)
    return {
        "partition_of_unity_defect": float(np.max(np.abs(part.window[interior] - 1.0))),
        "conjugate_projection_defect": worst_conj,
        "unit_reconstruction_defect": float(np.max(np.abs(ones.coeffs - f.coeffs))),
        "parseval_defect": abs(l2_phys - f.l2()) / f.l2(),
        "interpolant_weights_ok": interpolant_weights_ok(grid, 0.5),
    }


def audit_report(cfg):
    """Full audit for a run configuration: identities, Bernstein constant and inequality stability."""
    a = cfg.audit
    n, M, p = cfg.grid.points_per_axis, cfg.grid.box_multiple, cfg.physics.p
    coarse = inequality_audit(n, M, p, a.sigma, a.corpus, a.seed)
    fine = inequality_audit(2 * n, M, p, a.sigma, a.corpus, a.seed)
    g = make_grid(n, M)
    return {
        "identities": identity_audit(g, a.seed),
        "bernstein": bernstein_audit(make_grid(a.bernstein_points, M), a.corpus, a.seed),
        "inequalities": [coarse, fine],
        "refinement_change": refinement_stability(coarse, fine),
    }
