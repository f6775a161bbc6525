"""Markov-chain driver and measure-level diagnostics.

Ensembles are weighted particle sets advanced with per-particle
counter-based kick streams, so results are independent of sampling order
and worker count.  The dual-Lipschitz distance is certified from below
by a dictionary of clamped linear functionals plus exact one-dimensional
bounded-Lipschitz distances of projected samples (a small LP per
direction).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse

from .basis import DomainSpec, eigenvalues, poincare_constant
from .dynamics import SolverConfig, advance_columns, time_one_map
from .errors import InsufficientDataError
from .noise import NoiseSpec, amplitudes, kick_rng, sample_kick, sample_xi, support_bound

__all__ = [
    "EmpiricalEnsemble",
    "TestDictionary",
    "markov_run",
    "make_compact",
    "ensemble_step",
    "krylov_average",
    "default_test_dictionary",
    "bl_distance_1d",
    "dual_lipschitz_lower",
    "mc_floor",
    "mixing_fit",
    "tail_energy",
    "absorbing_constants",
    "k_star",
]


@dataclass
class EmpiricalEnsemble:
    """Weighted particle approximation of a measure on H."""

    particles: np.ndarray  # (N, K)
    weights: np.ndarray  # (N,), sums to 1
    kick_index: int
    master_seed: int
    particle_ids: np.ndarray  # (N,) stream identities

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape[0] != self.particles.shape[0]:
            raise ValueError("weights/particles length mismatch")
        if self.particles.shape[0] and abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]


def make_compact(spec: DomainSpec, radius: float, n_points: int, seed: int,
                 n_active: int = 8, id_offset: int = 0) -> EmpiricalEnsemble:
    """Uniform points on a sphere of the given radius in the leading modes."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xC0,)))
    n_active = min(n_active, spec.n_modes)
    pts = rng.standard_normal((n_points, n_active))
    pts *= radius / np.linalg.norm(pts, axis=1, keepdims=True)
    particles = np.zeros((n_points, spec.n_modes))
    particles[:, :n_active] = pts
    return EmpiricalEnsemble(
        particles, np.full(n_points, 1.0 / n_points), 0, seed,
        np.arange(id_offset, id_offset + n_points),
    )


def markov_run(u0: np.ndarray, n_kicks: int, seed: int, spec: DomainSpec,
               cfg: SolverConfig, noise: NoiseSpec, traj_id: int = 0) -> np.ndarray:
    """States at integer times 0..n_kicks for one seeded kick sequence."""
    states = np.empty((n_kicks + 1, spec.n_modes))
    states[0] = u0
    u = np.array(u0, dtype=float)
    for k in range(n_kicks):
        eta = sample_kick(noise, spec, kick_rng(seed, traj_id, k))
        u = time_one_map(u, eta, spec, cfg)
        states[k + 1] = u
    return states


def _sample_ensemble_kicks(ens: EmpiricalEnsemble, spec: DomainSpec,
                           noise: NoiseSpec) -> np.ndarray:
    """(N, P, K) kick coefficients, one independent stream per particle."""
    b = amplitudes(noise, spec)
    out = np.empty((ens.n_particles,) + b.shape)
    for i, pid in enumerate(ens.particle_ids):
        rng = kick_rng(ens.master_seed, int(pid), ens.kick_index)
        out[i] = b * sample_xi(rng, b.shape)
    return out


def ensemble_step(ens: EmpiricalEnsemble, spec: DomainSpec, cfg: SolverConfig,
                  noise: NoiseSpec, workers: int = 1) -> EmpiricalEnsemble:
    """Push the ensemble forward by one kick (one application of P*_1)."""
    if ens.n_particles == 0:
        return EmpiricalEnsemble(ens.particles, ens.weights, ens.kick_index + 1,
                                 ens.master_seed, ens.particle_ids)
    coeffs = _sample_ensemble_kicks(ens, spec, noise)
    cols = ens.particles.T  # (K, N)
    if workers <= 1 or ens.n_particles < 2 * workers:
        new_cols = advance_columns(cols, coeffs, spec, cfg)
    else:
        chunks = np.array_split(np.arange(ens.n_particles), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda idx: advance_columns(cols[:, idx], coeffs[idx], spec, cfg),
                chunks,
            ))
        new_cols = np.concatenate(parts, axis=1)
    return EmpiricalEnsemble(new_cols.T, ens.weights.copy(), ens.kick_index + 1,
                             ens.master_seed, ens.particle_ids)


def krylov_average(history: list[EmpiricalEnsemble] | np.ndarray,
                   burn_in: int = 0) -> EmpiricalEnsemble:
    """Time-averaged occupation measure over post-burn-in snapshots."""
    if isinstance(history, np.ndarray):
        if history.ndim == 2:
            snaps = [history[burn_in:]]
            weights = [np.full(s.shape[0], 1.0) for s in snaps]
            seed, ids = 0, None
        else:
            raise ValueError("array history must be (T, K) integer-time states")
    else:
        snaps = [e.particles for e in history[burn_in:]]
        weights = [e.weights for e in history[burn_in:]]
        seed = history[-1].master_seed if history else 0
        ids = None
    if not snaps or sum(s.shape[0] for s in snaps) == 0:
        raise InsufficientDataError("empty history for time averaging")
    particles = np.concatenate(snaps, axis=0)
    w = np.concatenate(weights)
    w = w / w.sum()
    return EmpiricalEnsemble(particles, w, 0, seed, np.arange(particles.shape[0]))


@dataclass
class TestDictionary:
    """Unit directions and clamp radius defining the test functionals.

    Each direction w yields g(u) = clamp(<u, w>, -R, R) / max(1, R), with
    a factor 1/2 applied at evaluation so that the sup-norm plus Lipschitz
    seminorm of the evaluated functional is at most 1.
    """

    directions: np.ndarray  # (D, K), unit rows
    clamp_radius: float = 1.0


def default_test_dictionary(spec: DomainSpec, n_random: int = 4, seed: int = 0,
                            clamp_radius: float = 1.0) -> TestDictionary:
    """Leading eigenmode directions plus seeded random unit directions."""
    K = spec.n_modes
    lead = np.eye(K)[:min(8, K)]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xD1,)))
    rand = rng.standard_normal((n_random, K))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return TestDictionary(np.vstack([lead, rand]), clamp_radius)


def bl_distance_1d(x1: np.ndarray, w1: np.ndarray, x2: np.ndarray,
                   w2: np.ndarray) -> float:
    """Exact bounded-Lipschitz distance of two weighted 1D samples.

    Solves max sum_i d_i g_i subject to |g| <= beta and local Lipschitz
    bounds (1 - beta) on the pooled sorted support, jointly over the
    sup/Lipschitz budget split beta.  The constraints are linear, so one
    LP gives the exact value.
    """
    z = np.concatenate([x1, x2])
    d = np.concatenate([w1, -w2])
    order = np.argsort(z, kind="stable")
    z, d = z[order], d[order]
    # merge duplicates to keep the LP small and well-posed
    uz, inv = np.unique(z, return_inverse=True)
    ud = np.zeros_like(uz)
    np.add.at(ud, inv, d)
    n = uz.shape[0]
    if n < 2:
        return 0.0
    gaps = np.diff(uz)
    # variables: g_0..g_{n-1}, beta
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for i in range(n):  # g_i - beta <= 0 ; -g_i - beta <= 0
        rows += [r, r, r + 1, r + 1]
        cols += [i, n, i, n]
        vals += [1.0, -1.0, -1.0, -1.0]
        rhs += [0.0, 0.0]
        r += 2
    for i in range(n - 1):  # +-(g_{i+1} - g_i) + gap*beta <= gap
        rows += [r, r, r, r + 1, r + 1, r + 1]
        cols += [i + 1, i, n, i + 1, i, n]
        vals += [1.0, -1.0, gaps[i], -1.0, 1.0, gaps[i]]
        rhs += [gaps[i], gaps[i]]
        r += 2
    a_ub = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(r, n + 1))
    c = np.concatenate([-ud, [0.0]])
    bounds = [(-1.0, 1.0)] * n + [(0.0, 1.0)]
    res = scipy.optimize.linprog(c, A_ub=a_ub, b_ub=np.array(rhs), bounds=bounds,
                                 method="highs")
    if not res.success:
        raise RuntimeError(f"1D bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


def dual_lipschitz_lower(mu1: EmpiricalEnsemble, mu2: EmpiricalEnsemble,
                         dictionary: TestDictionary) -> float:
    """Certified lower bound of the dual-Lipschitz distance of two ensembles."""
    if mu1.n_particles == 0 or mu2.n_particles == 0:
        raise ValueError("empty ensemble")
    if mu1.particles.shape[1] != mu2.particles.shape[1]:
        raise ValueError("ensemble dimension mismatch")
    rad = dictionary.clamp_radius
    best = 0.0
    for w in dictionary.directions:
        p1 = mu1.particles @ w
        p2 = mu2.particles @ w
        g1 = 0.5 * np.clip(p1, -rad, rad) / max(1.0, rad)
        g2 = 0.5 * np.clip(p2, -rad, rad) / max(1.0, rad)
        best = max(best, abs(float(g1 @ mu1.weights - g2 @ mu2.weights)))
        best = max(best, bl_distance_1d(p1, mu1.weights, p2, mu2.weights))
    return best


def mc_floor(n_particles: int) -> float:
    """Monte-Carlo resolution floor of an n-particle distance estimate."""
    return 3.0 / math.sqrt(n_particles)


def mixing_fit(ks, distances) -> tuple[float, float, float]:
    """Least-squares fit log d_k = log C - c k; returns (C, c, R^2)."""
    ks = np.asarray(list(ks), dtype=float)
    d = np.asarray(list(distances), dtype=float)
    mask = d > 0
    ks, d = ks[mask], d[mask]
    if ks.shape[0] < 4:
        raise InsufficientDataError(
            f"mixing fit needs >= 4 usable points, got {ks.shape[0]}"
        )
    y = np.log(d)
    slope, intercept = np.polyfit(ks, y, 1)
    pred = slope * ks + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(np.exp(intercept)), float(-slope), r2


def tail_energy(ens: EmpiricalEnsemble, lam_cut: float,
                spec: DomainSpec) -> tuple[np.ndarray, float]:
    """Per-particle and max energy above the eigenvalue cutoff."""
    if not lam_cut > 0:
        raise ValueError("cutoff must be positive")
    mask = eigenvalues(spec) > lam_cut
    per = (ens.particles[:, mask] ** 2).sum(axis=1)
    return per, float(per.max(initial=0.0))


def absorbing_constants(spec: DomainSpec, noise: NoiseSpec) -> tuple[float, float, float]:
    """(kappa_bar, M2, absorbing radius squared 2 M2 / (1 - kappa_bar))."""
    nu = spec.viscosity
    lam1 = poincare_constant(spec)
    kappa = math.exp(-nu * lam1)
    _, vp_sup = support_bound(noise, spec)
    m2 = vp_sup / (nu * nu * lam1)
    return kappa, m2, 2.0 * m2 / (1.0 - kappa)


def k_star(m1: float, spec: DomainSpec, noise: NoiseSpec) -> int:
    """Kicks needed for the radius-sqrt(m1) set to reach the absorbing set."""
    nu = spec.viscosity
    lam1 = poincare_constant(spec)
    kappa, m2, _ = absorbing_constants(spec, noise)
    arg = m1 * (1.0 - kappa) / m2
    if arg <= 1.0:
        return 0
    return math.ceil(math.log(arg) / (nu * lam1))
