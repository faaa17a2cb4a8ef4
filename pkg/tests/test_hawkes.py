import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import make_params
from hawkes_field.core import FiringRate, InitialCondition, SynapticKernel
from hawkes_field.harness.stats import RunningStats
from hawkes_field.hawkes import (
    EnvelopeViolation,
    EventLog,
    ExplosionError,
    compensator,
    intensity_integrals,
    potential_at,
    potentials_at,
    read_event_log,
    replay_potentials,
    simulate_hawkes,
    write_event_log,
)

W0 = SynapticKernel("constant", A=0.0)


def random_log(n, T, n_events, seed):
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, T, n_events))
    return EventLog(times, rng.integers(1, n + 1, n_events), n, T)


def brute_potential(log, p, t, i):
    """Term-by-term sum written independently of the library."""
    n = log.n
    total = math.exp(-p.alpha * t) * float(p.u0.eval(i / n))
    for s, j in zip(log.times.tolist(), log.neurons.tolist()):
        if s <= t:
            total += float(p.w.eval(j / n, i / n)) * math.exp(-p.alpha * (t - s)) / n
    return total


def test_event_log_invariants():
    with pytest.raises(ValueError):
        EventLog([0.2, 0.1], [1, 1], 2, 1.0)
    with pytest.raises(ValueError):
        EventLog([0.1, 0.1], [1, 2], 2, 1.0)
    with pytest.raises(ValueError):
        EventLog([0.0], [1], 2, 1.0)
    with pytest.raises(ValueError):
        EventLog([0.5], [3], 2, 1.0)
    with pytest.raises(ValueError):
        EventLog([1.5], [1], 2, 1.0)


def test_potential_empty_log():
    p = make_params()
    log = EventLog([], [], 5, 1.0)
    for i in range(1, 6):
        assert potential_at(log, p, 0.7, i) == pytest.approx(math.exp(-0.7) * p.u0.eval(i / 5), rel=1e-15)


def test_potential_single_event():
    p = make_params()
    log = EventLog([0.5], [2], 4, 1.0)
    for i in range(1, 5):
        want = math.exp(-0.8) * p.u0.eval(i / 4) + 0.25 * p.w.eval(0.5, i / 4) * math.exp(-0.3)
        assert potential_at(log, p, 0.8, i) == pytest.approx(want, rel=1e-14)


def test_potential_includes_event_at_t():
    p = make_params()
    log = EventLog([0.5], [1], 3, 1.0)
    assert potential_at(log, p, 0.5, 2) - math.exp(-0.5) * p.u0.eval(2 / 3) == pytest.approx(p.w.eval(1 / 3, 2 / 3) / 3)


def test_potential_matches_brute_force_sum():
    p = make_params(kernel=SynapticKernel("mexican_hat", A=0.8, sigma=4.0))
    log = random_log(12, 2.0, 50, 7)
    vec = potentials_at(log, p, 1.3)
    for i in range(1, 13):
        ref = brute_potential(log, p, 1.3, i)
        assert abs(potential_at(log, p, 1.3, i) - ref) <= 1e-12
        assert abs(vec[i - 1] - ref) <= 1e-12


def test_potential_argument_errors():
    log = EventLog([], [], 3, 1.0)
    with pytest.raises(IndexError):
        potential_at(log, make_params(), 0.5, 4)
    with pytest.raises(ValueError):
        potential_at(log, make_params(), 1.5, 1)


def test_replay_matches_direct_recomputation(mexican, rng):
    log = simulate_hawkes(mexican, 64, 1.0, 11)
    assert len(log) > 10
    times = np.sort(rng.uniform(0, 1, 20))
    rep = replay_potentials(log, mexican, times)
    for q, t in enumerate(times):
        assert np.abs(rep[q] - potentials_at(log, mexican, t)).max() <= 1e-10


def test_simulation_is_deterministic(mexican):
    a = simulate_hawkes(mexican, 32, 1.0, 99)
    b = simulate_hawkes(mexican, 32, 1.0, 99)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.neurons, b.neurons)
    c = simulate_hawkes(mexican, 32, 1.0, 100)
    assert not (len(a) == len(c) and np.array_equal(a.times, c.times))


def test_simulation_argument_checks(mexican):
    with pytest.raises(ValueError):
        simulate_hawkes(mexican, 0, 1.0, 1)
    with pytest.raises(ValueError):
        simulate_hawkes(mexican, 4, 0.0, 1)


def test_homogeneous_poisson_law():
    c = 1.5
    p = make_params(rate=FiringRate("constant", f0=c, floor=0.0), kernel=W0,
                    u0=InitialCondition("constant", a=0.0))
    n, T, R = 8, 2.0, 2000
    counts = np.array([simulate_hawkes(p, n, T, s).counts() for s in range(R)], dtype=float)
    per = counts.ravel()
    st_ = RunningStats().extend(per)
    assert abs(st_.mean - c * T) <= 3 * st_.se_mean
    # index of dispersion per neuron, averaged; SE from its spread across neurons
    disp = counts.var(axis=0, ddof=1) / counts.mean(axis=0)
    se_disp = math.sqrt(2.0 / (R - 1))
    assert abs(disp.mean() - 1.0) <= 3 * se_disp / math.sqrt(n)


def test_inhomogeneous_poisson_law():
    p = make_params(kernel=W0, u0=InitialCondition("constant", a=1.0), rate=FiringRate("sigmoid", f0=1.0, floor=0.05))
    T, R, n = 2.0, 1000, 4
    target = quad(lambda s: float(p.f.eval(math.exp(-s))), 0, T, epsabs=1e-12)[0]
    st_ = RunningStats().extend(np.concatenate([simulate_hawkes(p, n, T, s).counts() for s in range(R)]))
    assert abs(st_.mean - target) <= 3 * st_.se_mean


def test_envelope_holds_in_debug_mode(mexican, gaussian_cfg):
    for p in (mexican, gaussian_cfg):
        for seed in range(5):
            simulate_hawkes(p, 64, 1.0, seed, debug=True)


def test_negative_rate_is_reported_in_debug_mode():
    p = make_params(rate=FiringRate("affine", f0=1.0, kappa=0.5, floor=0.0),
                    u0=InitialCondition("constant", a=1.0), kernel=SynapticKernel("constant", A=-20.0))
    with pytest.raises(EnvelopeViolation):
        simulate_hawkes(p, 4, 5.0, 0, debug=True)


def test_explosion_guard():
    p = make_params(rate=FiringRate("affine", f0=1.0, kappa=-1.0, floor=0.0),
                    kernel=SynapticKernel("constant", A=20.0), u0=InitialCondition("constant", a=1.0))
    with pytest.raises(ExplosionError):
        simulate_hawkes(p, 4, 5.0, 0, max_events=500)


def test_zero_rate_gives_empty_log():
    p = make_params(rate=FiringRate("constant", f0=0.0, floor=0.0))
    assert len(simulate_hawkes(p, 16, 3.0, 0)) == 0


def test_compensator_constant_rate():
    p = make_params(rate=FiringRate("constant", f0=2.5, floor=0.0))
    log = random_log(6, 1.0, 30, 3)
    for j in (1, 4):
        assert abs(compensator(log, p, j, 0.9) - 2.5 * 0.9) <= 1e-12


def test_compensator_frozen_potential():
    p = make_params(alpha=0.0)
    log = EventLog([], [], 5, 2.0)
    assert compensator(log, p, 3, 1.7) == pytest.approx(p.f.eval(p.u0.eval(0.6)) * 1.7, rel=1e-13)


def test_compensator_matches_fine_simpson():
    p = make_params(kernel=SynapticKernel("mexican_hat", A=0.8, sigma=4.0), rate=FiringRate("sigmoid", 2.0, 0.3, 0.05))
    log = random_log(5, 1.0, 50, 21)
    j, t = 2, 1.0
    # composite Simpson on each inter-event piece at step ~1e-5
    bounds = np.concatenate([[0.0], log.times, [t]])
    total = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a:
            continue
        m = max(2, 2 * int(math.ceil((b - a) / 2e-5)))
        s = np.linspace(a, b, m + 1)
        u = np.array([brute_potential(log, p, a, j)]) * np.exp(-p.alpha * (s - a))
        v = p.f.eval(u)
        total += (b - a) / (3 * m) * (v[0] + v[-1] + 4 * v[1:-1:2].sum() + 2 * v[2:-1:2].sum())
    assert abs(compensator(log, p, j, t) - total) <= 1e-8


def test_compensator_argument_checks():
    log = EventLog([], [], 3, 1.0)
    with pytest.raises(ValueError):
        compensator(log, make_params(), 1, 0.5, quad_tol=0.0)
    with pytest.raises(IndexError):
        compensator(log, make_params(), 5, 0.5)


def test_martingale_increment_has_zero_mean(gaussian_cfg):
    n, R, t = 8, 1000, 1.0
    st_ = RunningStats()
    for s in range(R):
        log = simulate_hawkes(gaussian_cfg, n, t, s)
        st_.extend(log.counts() - intensity_integrals(log, gaussian_cfg, t))
    assert abs(st_.mean) <= 3 * st_.se_mean


def test_event_count_bound_is_stable_in_n(mexican):
    means = []
    for n in (16, 64, 256):
        means.append(np.mean([simulate_hawkes(mexican, n, 1.0, s).counts().mean() for s in range(100)]))
    assert all(np.isfinite(means))
    assert max(means) / min(means) < 1.3


@given(st.integers(0, 2**32))
def test_envelope_debug_random_seeds(seed):
    p = make_params(kernel=SynapticKernel("mexican_hat", A=0.8, sigma=4.0))
    log = simulate_hawkes(p, 16, 0.5, seed, debug=True)
    assert np.all(np.diff(log.times) > 0)


def test_event_log_round_trip(tmp_path, mexican):
    log = simulate_hawkes(mexican, 32, 1.0, 5)
    path = write_event_log(log, tmp_path / "ev.csv")
    text = path.read_text().splitlines()
    assert text[0].startswith("# schema_version=") and text[1] == "t,neuron"
    back = read_event_log(path)
    assert np.array_equal(back.times, log.times) and np.array_equal(back.neurons, log.neurons)
    assert (back.n, back.horizon, back.seed, back.params_hash) == (log.n, log.horizon, log.seed, log.params_hash)
