"""Tangent and forcing derivatives of the time-one map.

The linearised stepper is the exact tangent of the nonlinear
exponential-Euler stepper with coefficients frozen along a recorded base
trajectory.  Jacobians are assembled column-wise (all columns propagated
together as one matrix), which keeps finite-difference cross-checks tight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DomainSpec, eigenvalues, grid_operators
from .dynamics import SolverConfig, Trajectory, _factors
from .noise import KickPath, NoiseSpec, legendre_values

__all__ = [
    "TangentOperators",
    "bilinear_q",
    "tangent_apply",
    "psi_split",
    "forcing_derivative_apply",
    "assemble_gram",
    "linearize_kick",
    "gram_limit_check",
    "compactness_diagnostic",
    "tail_index",
]


@dataclass
class TangentOperators:
    """Dense operators assembled along one base trajectory.

    psi1 holds the diagonal of the Stokes semigroup factor; psi2 the
    compact remainder; a_matrix the forcing derivative on the noise basis
    (columns in p-major flat order); gram = a_matrix @ a_matrix.T with a
    cached eigendecomposition.
    """

    psi1: np.ndarray | None = None
    psi2: np.ndarray | None = None
    a_matrix: np.ndarray | None = None
    gram: np.ndarray | None = None
    gram_eigvals: np.ndarray | None = None
    gram_eigvecs: np.ndarray | None = None
    base: Trajectory | None = None


def _require_substeps(base: Trajectory) -> None:
    if base.states is None or base.states.shape[0] < 2:
        raise ValueError("base trajectory lacks substep states")


def bilinear_q(a: np.ndarray, bvec: np.ndarray, spec: DomainSpec,
               cfg: SolverConfig | None = None) -> np.ndarray:
    """Symmetrised advection Q(a, b) = P(a.grad b) + P(b.grad a).

    ``bvec`` may be a (K,) vector or a (K, n) column stack with ``a`` fixed.
    """
    cfg = cfg or SolverConfig()
    ops = grid_operators(spec, cfg.nx, cfg.nyq)
    return _q_on_grid(_grid_fields(a, ops), bvec, ops)


def _grid_fields(a: np.ndarray, ops):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite coefficients in bilinear form input")
    return (ops.syn6 @ a).reshape(6, ops.n_points)


def _q_on_grid(af, bvec, ops):
    """Q(a, .) applied to columns of bvec, with a's grid fields precomputed."""
    a1, a2, a1x, a1y, a2x, a2y = af
    if bvec.ndim == 2:
        a1, a2 = a1[:, None], a2[:, None]
        a1x, a1y, a2x, a2y = a1x[:, None], a1y[:, None], a2x[:, None], a2y[:, None]
    npts = ops.n_points
    g = (ops.syn6 @ bvec).reshape((6, npts) + bvec.shape[1:])
    b1, b2, b1x, b1y, b2x, b2y = g
    c1 = a1 * b1x + a2 * b1y + b1 * a1x + b2 * a1y
    c2 = a1 * b2x + a2 * b2y + b1 * a2x + b2 * a2y
    return ops.ana2 @ np.concatenate([c1, c2], axis=0)


def tangent_apply(base: Trajectory, w0: np.ndarray, spec: DomainSpec,
                  cfg: SolverConfig) -> np.ndarray:
    """Propagate w0 (vector or column stack) through the linearised flow."""
    _require_substeps(base)
    ops = grid_operators(spec, cfg.nx, cfg.nyq)
    decay, gain = _factors(spec, cfg.dt)
    w = np.array(w0, dtype=float)
    dcol = decay[:, None] if w.ndim == 2 else decay
    gcol = gain[:, None] if w.ndim == 2 else gain
    for i in range(base.states.shape[0] - 1):
        af = _grid_fields(base.states[i], ops)
        w = dcol * w - gcol * _q_on_grid(af, w, ops)
    return w


def psi_split(base: Trajectory, spec: DomainSpec, cfg: SolverConfig,
              ops: TangentOperators | None = None) -> TangentOperators:
    """Fill psi1 (diagonal semigroup) and psi2 = D_u S - diag(psi1)."""
    out = ops or TangentOperators()
    K = spec.n_modes
    horizon = (base.states.shape[0] - 1) * cfg.dt
    lam = spec.viscosity * eigenvalues(spec) + spec.damping
    out.psi1 = np.exp(-lam * horizon)
    jac = tangent_apply(base, np.eye(K), spec, cfg)
    out.psi2 = jac - np.diag(out.psi1)
    out.base = base
    return out


def forcing_derivative_apply(base: Trajectory, zeta: KickPath, spec: DomainSpec,
                             cfg: SolverConfig) -> np.ndarray:
    """D_eta S applied to one kick direction: linearised solve with source."""
    _require_substeps(base)
    ops = grid_operators(spec, cfg.nx, cfg.nyq)
    decay, gain = _factors(spec, cfg.dt)
    n = base.states.shape[0] - 1
    t_mid = (np.arange(n) + 0.5) * cfg.dt
    src = legendre_values(zeta.coeffs.shape[0], t_mid % 1.0) @ zeta.coeffs
    w = np.zeros(spec.n_modes)
    for i in range(n):
        af = _grid_fields(base.states[i], ops)
        w = decay * w + gain * (src[i] - _q_on_grid(af, w, ops))
    return w


def assemble_gram(base: Trajectory, spec: DomainSpec, cfg: SolverConfig,
                  noise: NoiseSpec, ops: TangentOperators | None = None) -> TangentOperators:
    """Fill a_matrix (columns = noise basis elements) and gram = A A^T."""
    _require_substeps(base)
    gops = grid_operators(spec, cfg.nx, cfg.nyq)
    decay, gain = _factors(spec, cfg.dt)
    K = spec.n_modes
    P = noise.p_order
    n = base.states.shape[0] - 1
    t_mid = (np.arange(n) + 0.5) * cfg.dt
    tau = legendre_values(P, t_mid % 1.0)  # (n, P)
    rows = np.arange(K)
    z = np.zeros((K, P * K))
    for i in range(n):
        af = _grid_fields(base.states[i], gops)
        z = decay[:, None] * z - gain[:, None] * _q_on_grid(af, z, gops)
        for p in range(P):
            z[rows, p * K + rows] += gain * tau[i, p]
    out = ops or TangentOperators()
    out.a_matrix = z
    out.gram = z @ z.T
    out.gram_eigvals, out.gram_eigvecs = np.linalg.eigh(out.gram)
    out.base = base
    return out


def linearize_kick(base: Trajectory, spec: DomainSpec, cfg: SolverConfig,
                   noise: NoiseSpec) -> TangentOperators:
    """Assemble the full operator bundle (psi1, psi2, A, G) for one kick."""
    ops = psi_split(base, spec, cfg)
    return assemble_gram(base, spec, cfg, noise, ops=ops)


def gram_limit_check(ops: TangentOperators, f: np.ndarray, gammas) -> np.ndarray:
    """Relative residuals ||G (G + gamma I)^-1 f - f|| / ||f|| per gamma."""
    if ops.gram_eigvals is None:
        raise ValueError("gram not assembled")
    f = np.asarray(f, dtype=float)
    nf = np.linalg.norm(f)
    if nf == 0:
        raise ValueError("gram_limit_check needs a nonzero direction")
    coeffs = ops.gram_eigvecs.T @ f
    gammas = np.asarray(list(gammas), dtype=float)
    res = np.empty(gammas.shape[0])
    for i, g in enumerate(gammas):
        res[i] = np.linalg.norm(coeffs * (g / (ops.gram_eigvals + g))) / nf
    return res


def compactness_diagnostic(ops: TangentOperators) -> np.ndarray:
    """Singular values of psi2, descending."""
    if ops.psi2 is None:
        raise ValueError("psi2 not assembled")
    return np.linalg.svd(ops.psi2, compute_uv=False)


def tail_index(sigmas: np.ndarray, eps: float) -> int:
    """Smallest j with sigma_j <= eps (0-based; len(sigmas) if none)."""
    idx = np.nonzero(sigmas <= eps)[0]
    return int(idx[0]) if idx.size else len(sigmas)
