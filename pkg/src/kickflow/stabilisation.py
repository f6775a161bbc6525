"""Regularised right inverse, stabilising control, and two-trajectory coupling.

The control map drives a second trajectory with a corrected kick so the
pair contracts: phi = -R_{M,gamma} Psi2 (u' - u), where R_{M,gamma} is
the Tikhonov-regularised right inverse of the forcing derivative
truncated to the leading M noise coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .basis import DomainSpec
from .dynamics import SolverConfig, flow, time_one_map
from .errors import SqueezingViolatedError, TuningFailedError
from .linearization import TangentOperators, linearize_kick
from .noise import KickPath, NoiseSpec, pm_order, sample_kick, kick_rng

__all__ = [
    "ControlConfig",
    "CouplingReport",
    "right_inverse_apply",
    "right_inverse_matrix",
    "phi",
    "epsilon_check",
    "tune",
    "couple",
]

GAMMA_GRID = tuple(10.0 ** (-e) for e in range(1, 9))


@dataclass(frozen=True)
class ControlConfig:
    """Truncation rank M, Tikhonov gamma, and coupling thresholds."""

    rank: int
    gamma: float
    delta: float = 1e-2
    q_target: float = 0.95

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be positive, got {self.rank}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 < self.q_target < 1:
            raise ValueError(f"q_target must be in (0, 1), got {self.q_target}")


@dataclass
class CouplingReport:
    """Per-step coupling record plus summary statistics."""

    steps: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    qhats: list = field(default_factory=list)
    phi_norms: list = field(default_factory=list)
    eps_hats: list = field(default_factory=list)

    @property
    def q_max(self) -> float:
        return max(self.qhats) if self.qhats else 0.0

    @property
    def q_geo_mean(self) -> float:
        if not self.qhats:
            return 0.0
        return float(np.exp(np.mean(np.log(np.maximum(self.qhats, 1e-300)))))

    @property
    def c_hat(self) -> float:
        """Largest observed ||phi||_E / ||u - u'|| ratio."""
        ratios = [p / d for p, d in zip(self.phi_norms, self.distances) if d > 0]
        return max(ratios) if ratios else 0.0


def _solve_regularised(ops: TangentOperators, f: np.ndarray, gamma: float) -> np.ndarray:
    if ops.gram_eigvals is None:
        raise ValueError("gram not assembled")
    v = ops.gram_eigvecs
    return v @ ((v.T @ f) / (ops.gram_eigvals + gamma))


def right_inverse_apply(ops: TangentOperators, f: np.ndarray, ctl: ControlConfig,
                        noise: NoiseSpec, spec: DomainSpec) -> KickPath:
    """R_{M,gamma} f = P_M A^T (G + gamma I)^{-1} f as a kick path."""
    e_flat = ops.a_matrix.T @ _solve_regularised(ops, np.asarray(f, dtype=float), ctl.gamma)
    keep = pm_order(noise, spec)[:ctl.rank]
    out = np.zeros_like(e_flat)
    out[keep] = e_flat[keep]
    return KickPath(out.reshape(noise.p_order, spec.n_modes))


def right_inverse_matrix(ops: TangentOperators, ctl: ControlConfig,
                         noise: NoiseSpec, spec: DomainSpec) -> np.ndarray:
    """Dense (P*K, K) matrix of R_{M,gamma}."""
    v = ops.gram_eigvecs
    ginv = v @ (v.T / (ops.gram_eigvals + ctl.gamma)[:, None])
    r = ops.a_matrix.T @ ginv
    mask = np.zeros(r.shape[0], dtype=bool)
    mask[pm_order(noise, spec)[:ctl.rank]] = True
    r[~mask] = 0.0
    return r


def phi(u: np.ndarray, u_prime: np.ndarray, ops: TangentOperators, ctl: ControlConfig,
        noise: NoiseSpec, spec: DomainSpec) -> KickPath:
    """Stabilising control phi = -R_{M,gamma} Psi2 (u' - u); linear in u' - u."""
    if ops.psi2 is None:
        raise ValueError("psi2 not assembled")
    return right_inverse_apply(ops, ops.psi2 @ (np.asarray(u) - np.asarray(u_prime)),
                               ctl, noise, spec)


def epsilon_check(ops: TangentOperators, ctl: ControlConfig, noise: NoiseSpec,
                  spec: DomainSpec) -> float:
    """Spectral norm of (A R_{M,gamma} - I) Psi2, the control defect."""
    r = right_inverse_matrix(ops, ctl, noise, spec)
    defect = (ops.a_matrix @ r - np.eye(spec.n_modes)) @ ops.psi2
    return float(np.linalg.norm(defect, 2))


def tune(ops: TangentOperators, epsilon_target: float, noise: NoiseSpec,
         spec: DomainSpec, delta: float = 1e-2, q_target: float = 0.95) -> ControlConfig:
    """Grid search for the cheapest (smallest M, then largest gamma) config.

    Scans M over multiples of K up to P*K and gamma over a log grid,
    returning the first pair with control defect <= epsilon_target.
    """
    K = spec.n_modes
    best = np.inf
    for rank in range(K, noise.p_order * K + 1, K):
        for gamma in GAMMA_GRID:
            ctl = ControlConfig(rank, gamma, delta, q_target)
            eps = epsilon_check(ops, ctl, noise, spec)
            best = min(best, eps)
            if eps <= epsilon_target:
                return ctl
    raise TuningFailedError(best, epsilon_target)


def couple(u0: np.ndarray, u0_prime: np.ndarray, kick_seed: int, n_steps: int,
           spec: DomainSpec, cfg: SolverConfig, ctl: ControlConfig,
           noise: NoiseSpec, traj_id: int = 0) -> CouplingReport:
    """Run the stabilised two-trajectory coupling for n_steps kicks.

    The leader advances with sampled kicks; the follower receives the
    corrected kick eta + phi.  Raises SqueezingViolatedError (with the
    partial report attached) if the pair distance ever exceeds delta.
    """
    cfg = replace(cfg, record_substeps=True)
    u = np.array(u0, dtype=float)
    up = np.array(u0_prime, dtype=float)
    report = CouplingReport()
    for k in range(n_steps):
        dist = float(np.linalg.norm(u - up))
        if dist < 1e-14:
            break
        eta = sample_kick(noise, spec, kick_rng(kick_seed, traj_id, k))
        base = flow(u, eta, spec, cfg)
        ops = linearize_kick(base, spec, cfg, noise)
        control = phi(u, up, ops, ctl, noise, spec)
        eps_hat = epsilon_check(ops, ctl, noise, spec)
        u_next = base.endpoint
        up_next = time_one_map(up, eta + control, spec, cfg)
        dist_next = float(np.linalg.norm(u_next - up_next))
        qhat = dist_next / dist
        report.steps.append(k)
        report.distances.append(dist)
        report.qhats.append(qhat)
        report.phi_norms.append(control.norm_e)
        report.eps_hats.append(eps_hat)
        if dist_next > ctl.delta:
            raise SqueezingViolatedError(k, qhat, report)
        u, up = u_next, up_next
    return report
