import math
from dataclasses import replace

import numpy as np
import pytest

from src.services.bayes_filter import (
    SufficientStats,
    common_log_prefactor,
    log_likelihood_ratio,
    loglik_from_stats,
    map_decision,
    new_filter_state,
    posterior,
    update_loglik,
    update_stats,
)
from src.services.constellation import build_constellation
from src.services.errors import ArityError, DomainError, TimeMismatchError
from src.services.signal import TimeGrid, drift_increment, simulate_trajectory
from src.services.strategies import AdaptiveTopTwo, Heterodyne, OptimalTwoPhase, StaticHomodyne


def random_setup(rng):
    """Random constellation with 2, 4 or 8 phases and a strategy that fits it"""
    n_qubits = int(rng.integers(1, 4))
    pulls = rng.uniform(0.05, 1.5, size=n_qubits) * rng.choice([-1, 1], size=n_qubits)
    c = build_constellation(pulls, float(rng.uniform(0.5, 6.0)))
    options = [
        StaticHomodyne(phase=float(rng.uniform(0, 2 * math.pi))),
        Heterodyne(rate=float(rng.uniform(10, 300)) * math.pi),
        AdaptiveTopTwo(),
    ]
    if c.size == 2:
        options.append(OptimalTwoPhase())
    return c, options[int(rng.integers(len(options)))]


def test_fresh_state_is_uniform(n4_constellation):
    state = new_filter_state(n4_constellation)
    assert posterior(state) == pytest.approx(np.full(4, 0.25))
    assert state.t == 0.0
    decision = map_decision(state)
    assert decision.index == 0
    assert decision.tie


def test_batched_state_shapes(n4_constellation):
    state = new_filter_state(n4_constellation, batch_shape=5, track_stats=True)
    assert state.log_liks.shape == (5, 4)
    assert state.stats.R.shape == (5,)
    assert posterior(state).shape == (5, 4)


def test_prior_validation(n4_constellation):
    with pytest.raises(ArityError):
        new_filter_state(n4_constellation, priors=[0.5, 0.5])
    with pytest.raises(DomainError):
        new_filter_state(n4_constellation, priors=[0.5, 0.5, 0.5, 0.5])
    with pytest.raises(DomainError):
        new_filter_state(n4_constellation, priors=[1.5, -0.5, 0.0, 0.0])


def test_zero_prior_stays_zero(n4_constellation):
    state = new_filter_state(n4_constellation, priors=[0.0, 0.5, 0.25, 0.25])
    state = update_loglik(state, 0.3, 0.05, 0.0, 1e-3)
    post = posterior(state)
    assert post[0] == 0.0
    assert post.sum() == pytest.approx(1.0)


def test_update_rejects_clock_mismatch(n4_constellation):
    state = new_filter_state(n4_constellation)
    with pytest.raises(TimeMismatchError):
        update_loglik(state, 0.0, 0.0, 0.5, 1e-3)
    state = update_loglik(state, 0.0, 0.0, 0.0, 1e-3)
    assert state.t == pytest.approx(1e-3)
    with pytest.raises(DomainError):
        update_loglik(state, 0.0, 0.0, 1e-3, 0.0)


def test_single_step_matches_formula(n4_constellation):
    alpha, dt, t, phi_lo, dI = 5.0, 1e-3, 0.0, 1.1, 0.02
    state = update_loglik(new_filter_state(n4_constellation), phi_lo, dI, t, dt)
    for j, phase in enumerate(n4_constellation.phases):
        c = math.cos(phi_lo - phase)
        expected = -2 * alpha * (alpha * c * c * dt - c * dI)
        assert state.log_liks[j] == pytest.approx(expected, rel=1e-12)


def test_posterior_invariant_under_common_shift(n4_constellation):
    state = new_filter_state(n4_constellation)
    state = replace(state, log_liks=np.array([3.0, -1.0, 0.5, 2.0]))
    shifted = replace(state, log_liks=state.log_liks + 1234.5)
    assert posterior(shifted) == pytest.approx(posterior(state), abs=1e-12)
    assert posterior(state).sum() == pytest.approx(1.0)


def test_posterior_is_stable_for_large_exponents(n4_constellation):
    state = replace(new_filter_state(n4_constellation), log_liks=np.array([-5000.0, -4990.0, -6000.0, -7000.0]))
    post = posterior(state)
    assert np.all(np.isfinite(post))
    assert post[1] == pytest.approx(1.0, abs=1e-4)


def test_map_decision_ties_go_to_lowest_index(n4_constellation):
    state = replace(new_filter_state(n4_constellation), log_liks=np.array([0.0, 2.0, 2.0, 1.0]))
    decision = map_decision(state)
    assert decision.index == 1
    assert decision.tie
    clear = replace(state, log_liks=np.array([0.0, 2.0, 1.0, 1.0]))
    assert map_decision(clear) == (1, False)


def test_log_likelihood_ratio(n2_constellation, n4_constellation):
    state = replace(new_filter_state(n2_constellation), log_liks=np.array([1.5, -0.5]))
    assert log_likelihood_ratio(state) == pytest.approx(2.0)
    with pytest.raises(ArityError):
        log_likelihood_ratio(new_filter_state(n4_constellation))


def test_loglik_from_stats_index_check(n4_constellation):
    with pytest.raises(IndexError):
        loglik_from_stats(SufficientStats.zeros(), n4_constellation, 4)


def test_stats_accumulate_time_and_envelope():
    stats = SufficientStats.zeros()
    for k in range(1000):
        stats = update_stats(stats, 0.0, 0.0, k * 1e-3, 1e-3)
    assert stats.t == pytest.approx(1.0)
    assert stats.envelope == pytest.approx(1 - math.exp(-1.0), abs=1e-3)
    assert complex(stats.S) == pytest.approx(-stats.envelope)


def test_oracle_equivalence():
    """Statistics route minus accumulated route is alpha^2 times the envelope, for every hypothesis."""
    rng = np.random.default_rng(314)
    grid = TimeGrid()
    for trial in range(100):
        c, strategy = random_setup(rng)
        label = int(rng.integers(c.size))
        _, state = simulate_trajectory(c, label, strategy, grid, seed=(314, trial), track_stats=True)
        prefactor = common_log_prefactor(state)
        assert prefactor == pytest.approx(c.amplitude ** 2 * (1 - math.exp(-grid.horizon)), rel=1e-3)
        for j in range(c.size):
            from_stats = loglik_from_stats(state.stats, c, j)
            assert abs(from_stats - state.log_liks[j] - prefactor) <= 1e-9


def test_noise_free_maximality():
    """Without noise the true hypothesis never loses ground to any other."""
    rng = np.random.default_rng(2718)
    grid = TimeGrid(dt=1e-2, horizon=1.0)
    for _ in range(100):
        c, strategy = random_setup(rng)
        true_index = int(rng.integers(c.size))
        true_phase = c.phases[true_index]
        state = new_filter_state(c)
        previous = state.log_liks - state.log_liks[true_index]
        for t in grid.times:
            phi = strategy.lo_phase(t, state)
            dI = drift_increment(c.amplitude, true_phase, phi, t, grid.dt)
            state = update_loglik(state, phi, dI, t, grid.dt)
            gap = state.log_liks - state.log_liks[true_index]
            assert np.all(gap - previous <= 1e-12)
            previous = gap
        assert np.all(previous <= 1e-12)


def test_noise_free_run_decides_correctly(n4_constellation):
    grid = TimeGrid(dt=1e-2, horizon=1.0)
    for label in range(4):
        _, state = simulate_trajectory(n4_constellation, label, AdaptiveTopTwo(), grid, seed=None, noise_free=True)
        assert map_decision(state).index == label


def test_priors_leave_log_likelihoods_unchanged(n4_constellation):
    grid = TimeGrid(dt=1e-2, horizon=1.0)
    priors = [0.1, 0.2, 0.3, 0.4]
    _, uniform = simulate_trajectory(n4_constellation, 2, StaticHomodyne(), grid, seed=(8, 1))
    _, weighted = simulate_trajectory(n4_constellation, 2, StaticHomodyne(), grid, seed=(8, 1), priors=priors)
    assert np.array_equal(uniform.log_liks, weighted.log_liks)
    assert weighted.priors == pytest.approx(priors)
    assert not np.allclose(posterior(uniform), posterior(weighted))


@pytest.mark.parametrize("phase", [0.3, 1.0, 2.5])
def test_noise_free_static_homodyne_decides_correctly(n4_constellation, phase):
    """Any static LO separating the cosines identifies the true phase without noise."""
    cosines = np.cos(phase - n4_constellation.phase_array)
    assert len(np.unique(np.round(cosines, 6))) == 4
    grid = TimeGrid(dt=1e-2, horizon=1.0)
    for label in range(4):
        _, state = simulate_trajectory(
            n4_constellation, label, StaticHomodyne(phase=phase), grid, seed=None, noise_free=True,
        )
        assert map_decision(state) == (label, False)


def test_log_likelihood_ratio_flips_for_mirrored_pair():
    grid = TimeGrid(dt=1e-2, horizon=1.0)
    plus = build_constellation([math.pi / 10], 2.0)
    minus = build_constellation([-math.pi / 10], 2.0)
    assert minus.phases == (plus.phases[1], plus.phases[0])

    record, _ = simulate_trajectory(plus, 0, StaticHomodyne(phase=math.pi / 2), grid, seed=(21, 0))
    a, b = new_filter_state(plus), new_filter_state(minus)
    for t, phi, dI in zip(grid.times, record.lo_phases, record.increments):
        a = update_loglik(a, phi, dI, t, grid.dt)
        b = update_loglik(b, phi, dI, t, grid.dt)
    assert log_likelihood_ratio(a) != 0.0
    assert log_likelihood_ratio(b) == pytest.approx(-log_likelihood_ratio(a), abs=1e-12)


def test_log_likelihood_ratio_agrees_with_map_decision(n2_constellation):
    grid = TimeGrid(dt=1e-2, horizon=1.0)
    c = n2_constellation.with_amplitude(1.0)
    for run in range(20):
        _, state = simulate_trajectory(c, run % 2, StaticHomodyne(phase=math.pi / 2), grid, seed=(22, run))
        expected = 0 if log_likelihood_ratio(state) > 0 else 1
        assert map_decision(state).index == expected
