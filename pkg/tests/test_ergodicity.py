"""Ensembles, distance certificates, fits, and absorbing-set constants."""

import math

import numpy as np
import pytest

from kickflow.basis import poincare_constant
from kickflow.errors import InsufficientDataError
from kickflow.ergodicity import (
    EmpiricalEnsemble,
    absorbing_constants,
    bl_distance_1d,
    default_test_dictionary,
    dual_lipschitz_lower,
    ensemble_step,
    k_star,
    krylov_average,
    make_compact,
    markov_run,
    mc_floor,
    mixing_fit,
    tail_energy,
)
from kickflow.noise import support_bound


def _dirac(x, spec_dim):
    p = np.zeros((1, spec_dim))
    p[0, 0] = x
    return EmpiricalEnsemble(p, np.array([1.0]), 0, 0, np.array([0]))


class TestEnsembleBasics:
    def test_make_compact_radius(self, spec):
        ens = make_compact(spec, 3.0, 16, seed=0)
        assert np.allclose(np.linalg.norm(ens.particles, axis=1), 3.0)
        assert ens.weights.sum() == pytest.approx(1.0)
        assert np.abs(ens.particles[:, 8:]).max() == 0.0

    def test_make_compact_reproducible(self, spec):
        a = make_compact(spec, 1.0, 8, seed=5)
        b = make_compact(spec, 1.0, 8, seed=5)
        assert np.array_equal(a.particles, b.particles)

    def test_weight_validation(self, spec):
        with pytest.raises(ValueError):
            EmpiricalEnsemble(np.zeros((2, spec.n_modes)), np.array([0.6, 0.6]),
                              0, 0, np.array([0, 1]))


class TestEnsembleStep:
    def test_matches_markov_run(self, spec, fast_cfg, noise):
        ens = make_compact(spec, 0.5, 3, seed=7)
        stepped = ensemble_step(ens, spec, fast_cfg, noise)
        for i, pid in enumerate(ens.particle_ids):
            path = markov_run(ens.particles[i], 1, ens.master_seed, spec, fast_cfg,
                              noise, traj_id=int(pid))
            assert np.abs(stepped.particles[i] - path[1]).max() < 1e-13

    def test_worker_count_invariance(self, spec, fast_cfg, noise):
        ens = make_compact(spec, 0.5, 8, seed=7)
        serial = ensemble_step(ens, spec, fast_cfg, noise, workers=1)
        parallel = ensemble_step(ens, spec, fast_cfg, noise, workers=4)
        again = ensemble_step(ens, spec, fast_cfg, noise, workers=4)
        assert np.array_equal(parallel.particles, again.particles)
        assert np.abs(serial.particles - parallel.particles).max() < 1e-13

    def test_kick_index_advances(self, spec, fast_cfg, noise):
        ens = make_compact(spec, 0.5, 2, seed=7)
        stepped = ensemble_step(ens, spec, fast_cfg, noise)
        assert stepped.kick_index == ens.kick_index + 1
        assert np.array_equal(stepped.particle_ids, ens.particle_ids)


class TestKrylovAverage:
    def test_pools_history(self, spec, fast_cfg, noise):
        ens = make_compact(spec, 0.5, 4, seed=7)
        hist = [ens]
        for _ in range(2):
            hist.append(ensemble_step(hist[-1], spec, fast_cfg, noise))
        avg = krylov_average(hist, burn_in=1)
        assert avg.n_particles == 8
        assert avg.weights.sum() == pytest.approx(1.0)

    def test_empty_history_raises(self):
        with pytest.raises(InsufficientDataError):
            krylov_average([])


class TestBlDistance1d:
    def test_identical_samples(self, rng):
        x = rng.standard_normal(20)
        w = np.full(20, 1.0 / 20)
        assert bl_distance_1d(x, w, x, w) < 1e-9

    def test_two_point_closed_form(self):
        """Diracs at distance d have distance exactly 2d/(2+d)."""
        one = np.array([0.0])
        w = np.array([1.0])
        for d in (0.05, 0.5, 3.0, 50.0):
            got = bl_distance_1d(one, w, np.array([d]), w)
            assert got == pytest.approx(2 * d / (2 + d), abs=1e-9)

    def test_symmetry(self, rng):
        x = rng.standard_normal(15)
        y = rng.standard_normal(10) + 0.5
        wx = np.full(15, 1.0 / 15)
        wy = np.full(10, 1.0 / 10)
        ab = bl_distance_1d(x, wx, y, wy)
        ba = bl_distance_1d(y, wy, x, wx)
        assert ab == pytest.approx(ba, abs=1e-9)
        assert 0.0 <= ab <= 2.0

    def test_mixture_of_diracs(self):
        """Half the mass moved by d costs half the two-point value."""
        d = 0.2
        x1 = np.array([0.0, 5.0])
        x2 = np.array([d, 5.0])
        w = np.array([0.5, 0.5])
        got = bl_distance_1d(x1, w, x2, w)
        assert got == pytest.approx(0.5 * 2 * d / (2 + d), abs=1e-6)


class TestDualLipschitzLower:
    def test_zero_on_identical(self, spec):
        ens = make_compact(spec, 1.0, 10, seed=1)
        dic = default_test_dictionary(spec)
        assert dual_lipschitz_lower(ens, ens, dic) < 1e-9

    def test_detects_translation(self, spec):
        a = _dirac(0.0, spec.n_modes)
        b = _dirac(1.0, spec.n_modes)
        dic = default_test_dictionary(spec)
        got = dual_lipschitz_lower(a, b, dic)
        assert got == pytest.approx(2.0 / 3.0, abs=1e-6)

    def test_dimension_mismatch(self, spec):
        a = _dirac(0.0, spec.n_modes)
        b = _dirac(0.0, spec.n_modes + 1)
        with pytest.raises(ValueError):
            dual_lipschitz_lower(a, b, default_test_dictionary(spec))

    def test_dictionary_shape(self, spec):
        dic = default_test_dictionary(spec, n_random=3)
        assert dic.directions.shape == (8 + 3, spec.n_modes)
        assert np.allclose(np.linalg.norm(dic.directions, axis=1), 1.0)


class TestFitsAndFloors:
    def test_mc_floor(self):
        assert mc_floor(512) == pytest.approx(3.0 / math.sqrt(512))

    def test_mixing_fit_recovers_exponential(self):
        ks = np.arange(8)
        d = 1.7 * np.exp(-0.43 * ks)
        c_big, c_rate, r2 = mixing_fit(ks, d)
        assert c_big == pytest.approx(1.7, rel=1e-10)
        assert c_rate == pytest.approx(0.43, rel=1e-10)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_mixing_fit_needs_points(self):
        with pytest.raises(InsufficientDataError):
            mixing_fit([0, 1, 2], [1.0, 0.5, 0.25])


class TestConstants:
    def test_absorbing_constants_formulas(self, spec, noise):
        nu, lam1 = spec.viscosity, poincare_constant(spec)
        kappa, m2, rad2 = absorbing_constants(spec, noise)
        _, vp = support_bound(noise, spec)
        assert kappa == pytest.approx(math.exp(-nu * lam1), rel=1e-14)
        assert m2 == pytest.approx(vp / (nu * nu * lam1), rel=1e-14)
        assert rad2 == pytest.approx(2 * m2 / (1 - kappa), rel=1e-14)

    def test_k_star_cases(self, spec, noise):
        _, m2, _ = absorbing_constants(spec, noise)
        assert k_star(1e-9, spec, noise) == 0
        assert k_star(9.0, spec, noise) >= 1
        assert k_star(9.0, spec, noise) >= k_star(1.0, spec, noise)

    def test_tail_energy(self, spec):
        ens = make_compact(spec, 2.0, 4, seed=3)
        per, mx = tail_energy(ens, 1e9, spec)
        assert mx == 0.0
        per, mx = tail_energy(ens, poincare_constant(spec) / 2, spec)
        assert mx == pytest.approx(4.0, rel=1e-12)
        with pytest.raises(ValueError):
            tail_energy(ens, 0.0, spec)
