import numpy as np
import pytest

from oracles import kalman_variance_fixed_point
from trajkit import classical_filter as cf
from trajkit.statekit import classical_fidelity
from trajkit.stochproc import (
    LogWeight,
    NoiseStream,
    Record,
    RecordFormatError,
    WeightUnderflowError,
    effective_sample_size,
)


@pytest.fixture(scope="module")
def scenario():
    return cf.ClassicalScenario()  # k = l = b = beta = 1


def test_linear_sde_trivial_step(scenario):
    sc = cf.ClassicalScenario(k=0.0, l=0.0)
    assert cf.linear_sde_step(0.7, f=0.3, m=0.3, dt=1e-3, sc=sc) == 0.7


def test_linear_sde_deterministic_relaxation(scenario):
    # A = 1 - x with f = m: x(t) = 1 - exp(-t)
    x, dt = 0.0, 1e-3
    for _ in range(2000):
        x = cf.linear_sde_step(x, f=0.0, m=0.0, dt=dt, sc=scenario)
    assert x == pytest.approx(1 - np.exp(-2.0), abs=2e-3)


def test_linear_sde_variance_growth():
    # pure diffusion: Var[x(t)] = t
    sc = cf.ClassicalScenario(k=0.0, l=0.0, b=1.0)
    stream = NoiseStream(1, 0)
    n, steps, dt = 4000, 100, 1e-2
    x = np.zeros(n)
    for _ in range(steps):
        f = stream.normals(n) / np.sqrt(dt)
        x = cf.linear_sde_step(x, f, 0.0, dt, sc)
    t = steps * dt
    assert np.var(x) == pytest.approx(t, rel=0.1)


def test_kalman_steady_state_variance(scenario):
    state = cf.GaussianFilterState(0.0, 0.1)
    for _ in range(scenario.n_steps):
        state = cf.kalman_exact_step(state, r=0.0, dt=scenario.dt, sc=scenario)
    nu_star = kalman_variance_fixed_point(1.0, 1.0, 1.0)
    assert nu_star == pytest.approx(np.sqrt(2) - 1, abs=1e-12)
    assert abs(state.var - nu_star) < 1e-6


def test_kalman_variance_monotone_approach(scenario):
    for nu0 in (0.05, 2.0):
        state = cf.GaussianFilterState(0.0, nu0)
        nu_star = scenario.stationary_variance()
        prev_gap = abs(state.var - nu_star)
        for _ in range(3000):
            state = cf.kalman_exact_step(state, r=0.0, dt=scenario.dt, sc=scenario)
            gap = abs(state.var - nu_star)
            assert gap <= prev_gap + 1e-15
            prev_gap = gap


def test_kalman_variance_decay_without_information():
    # no diffusion, negligible measurement information: nu ~ nu0 exp(-2kt)
    sc = cf.ClassicalScenario(b=0.0, beta=1e12, dt=1e-4, t_final=1.0)
    state = cf.GaussianFilterState(0.0, 0.5)
    for _ in range(sc.n_steps):
        state = cf.kalman_exact_step(state, r=0.0, dt=sc.dt, sc=sc)
    assert state.var == pytest.approx(0.5 * np.exp(-2.0), rel=1e-3)


def test_grid_matches_exact_filter(scenario):
    t, means, varis, record = cf.kalman_reference_run(scenario, seed=3, out_every=250)
    tg, mg, vg = cf.kse_grid_run(scenario, record, out_every=250)
    assert np.max(np.abs(mg - means)) < 1e-3
    assert np.max(np.abs(vg - varis)) < 1e-3


def test_grid_cfl_rejected(scenario):
    p = cf.initial_grid_density(scenario)
    with pytest.raises(ValueError):
        cf.kse_grid_step(p, r=0.0, dt=0.01, sc=scenario)  # dx^2/b^2 = 2.5e-3


def test_grid_trivial_step():
    # r at the current mean, no drift, no diffusion: P unchanged
    sc = cf.ClassicalScenario(k=0.0, l=0.0, b=0.0, dt=1e-3)
    p = cf.initial_grid_density(sc)
    mean0, _ = cf.grid_moments(sc.grid(), p, sc.dx)
    out = cf.kse_grid_step(p, r=mean0, dt=sc.dt, sc=sc, innovation="linear")
    assert np.allclose(out, p, atol=1e-12)


def test_grid_linear_innovation_mass_second_order(scenario):
    # before renormalization the linear innovation conserves mass to O(dt^2)
    p = cf.initial_grid_density(scenario)
    for dt, r in ((1e-3, 5.0), (1e-3, -9.0)):
        out = cf.kse_grid_step(p, r=r, dt=dt, sc=scenario, renormalize=False,
                               innovation="linear")
        assert abs(np.sum(out) * scenario.dx - 1.0) < 1e-10


def test_grid_mass_conserved_after_renormalization(scenario):
    t, means, varis, record = cf.kalman_reference_run(scenario, seed=5, out_every=1000)
    p = cf.initial_grid_density(scenario)
    for r in record.values[:500]:
        p = cf.kse_grid_step(p, r, scenario.dt, scenario)
        assert abs(np.sum(p) * scenario.dx - 1.0) <= 1e-9


def test_particle_weight_trivial(scenario):
    # mu = m and lam = x freeze the weight
    w = cf.particle_weight_step(LogWeight(0.0), x=0.8, f=2.1, r=-3.0, dt=1e-3,
                                sc=scenario, lam=0.8, mu=scenario.m)
    assert w.log_p == 0.0


def test_particle_weight_underflow(scenario):
    with pytest.raises(WeightUnderflowError):
        cf.particle_weight_step(LogWeight(0.0), x=5.0, f=0.0, r=-300.0, dt=1.0,
                                sc=scenario, lam=0.0, mu=0.0)


def test_one_step_oracle_exact():
    for dt in (0.01, 0.001):
        rep = cf.one_step_oracle(dt=dt)
        assert rep["weight_err"] <= 1e-12
        assert rep["moment_err"] <= 1e-12
        assert rep["p_r_err"] <= 1e-12


def test_estimate_moments_equal_weights():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(500)
    mean, var = cf.estimate_classical_moments((x, np.zeros(500)))
    assert mean == pytest.approx(np.mean(x), abs=1e-12)
    assert var == pytest.approx(np.var(x), abs=1e-12)


def test_estimate_moments_single_particle():
    mean, var = cf.estimate_classical_moments([cf.WeightedParticle(1.3, LogWeight(0.0))])
    assert mean == 1.3 and var == 0.0


def test_sample_initial_particles(scenario):
    xs = cf.sample_initial_particles(scenario, 20000, NoiseStream(2, 0))
    assert np.var(xs) == pytest.approx(scenario.init_var, rel=0.05)
    assert np.array_equal(
        cf.sample_initial_particles(scenario, 100, NoiseStream(2, 5)),
        cf.sample_initial_particles(scenario, 100, NoiseStream(2, 5)),
    )
    point = cf.ClassicalScenario(init_var=0.0, init_mean=0.4)
    assert np.all(cf.sample_initial_particles(point, 10, NoiseStream(2, 0)) == 0.4)


@pytest.fixture(scope="module")
def short_run():
    sc = cf.ClassicalScenario(t_final=2.0)
    t, means, varis, record = cf.kalman_reference_run(sc, seed=41, out_every=100)
    return sc, t, means, varis, record


def test_particle_ensemble_tracks_exact(short_run):
    sc, t, means, varis, record = short_run
    _, per_n = cf.particle_ensemble(sc, record, 4000, seed=41, out_every=100)
    m_o, v_o, ess = per_n[4000]
    assert np.max(np.abs(m_o - means)) < 0.05
    assert np.max(np.abs(v_o - varis)) < 0.05
    fids = [
        classical_fidelity((means[j], varis[j]), (m_o[j], v_o[j])) for j in range(len(t))
    ]
    assert min(fids) > 0.995
    assert ess[-1] > 100


def test_particle_reference_law_invariance(short_run):
    # lam = mu = 0 and a shifted reference law estimate the same state
    sc, t, means, varis, record = short_run
    _, base = cf.particle_ensemble(sc, record, 4000, seed=13, out_every=200)
    _, shifted = cf.particle_ensemble(sc, record, 4000, seed=13, lam=0.5, mu=0.3,
                                      out_every=200)
    assert np.max(np.abs(base[4000][0] - shifted[4000][0])) < 0.06
    assert np.max(np.abs(base[4000][1] - shifted[4000][1])) < 0.06


def test_particle_ensemble_thread_invariance(short_run):
    sc, t, means, varis, record = short_run
    _, a = cf.particle_ensemble(sc, record, 600, seed=4, out_every=500, threads=1,
                                batch_size=100)
    _, b = cf.particle_ensemble(sc, record, 600, seed=4, out_every=500, threads=3,
                                batch_size=100)
    assert np.array_equal(a[600][0], b[600][0])
    assert np.array_equal(a[600][1], b[600][1])


def test_particle_snapshots(short_run):
    sc, t, means, varis, record = short_run
    t_out, per_n, snaps = cf.particle_ensemble(sc, record, 500, seed=8, out_every=500,
                                               snapshot_positions=[0, 4])
    x0, w0 = snaps[0]
    assert len(x0) == 500 and np.all(w0 == 0.0)
    x4, w4 = snaps[4]
    mean, var = cf.estimate_classical_moments((x4, w4))
    assert mean == pytest.approx(per_n[500][0][4], abs=1e-12)
    assert effective_sample_size(w4) == pytest.approx(per_n[500][2][4], rel=1e-9)


def test_particle_ensemble_rejects_wrong_record(short_run):
    sc, *_, record = short_run
    bad = Record(dt=record.dt, values=record.values, channel="fictitious",
                 scenario_hash=record.scenario_hash)
    with pytest.raises(RecordFormatError):
        cf.particle_ensemble(sc, bad, 10, seed=0)


def test_scenario_warnings():
    assert cf.ClassicalScenario().warnings() == []
    assert cf.ClassicalScenario(dt=5e-3).warnings()  # CFL
    assert cf.ClassicalScenario(beta=1e-4).warnings()  # weight spread
