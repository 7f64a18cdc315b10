import numpy as np
import pytest

from trajkit import bg_appendix as bg
from trajkit.statekit import h_superop, purity, SIGMA_MINUS
from trajkit.stochproc import NoiseStream, Record, RecordFormatError


@pytest.fixture(scope="module")
def scenario():
    return bg.BGScenario()  # eta = 0.4, gamma = 1, undriven


def abc_to_matrix(a, b, c):
    return np.array([[a, b], [np.conj(b), c]], dtype=complex)


def test_scenario_validation():
    with pytest.raises(ValueError):
        bg.BGScenario(eta=0.0)
    with pytest.raises(ValueError):
        bg.BGScenario(eta=1.5)


def test_efficient_monitoring_preserves_purity():
    sc = bg.BGScenario(eta=1.0, dt=1e-3, t_final=2.0)
    stream = NoiseStream(0, 0)
    a, b, c = sc.initial_abc()
    rho = abc_to_matrix(a, b, c)
    for _ in range(sc.n_steps):
        rho, _ = bg.sme_eta_step(rho, sc.dt, sc, stream)
    assert purity(rho) == pytest.approx(1.0, abs=1e-6)


def test_vanishing_efficiency_is_deterministic_decay():
    # eta -> 0: the conditioned state follows plain exponential decay
    sc = bg.BGScenario(eta=1e-12, dt=1e-4, t_final=1.0)
    stream = NoiseStream(1, 0)
    rho = abc_to_matrix(*sc.initial_abc())
    for _ in range(sc.n_steps):
        rho, _ = bg.sme_eta_step(rho, sc.dt, sc, stream)
    assert rho[0, 0].real == pytest.approx(0.5 * np.exp(-1.0), rel=2e-3)
    assert rho[0, 1].real == pytest.approx(0.5 * np.exp(-0.5), rel=2e-3)


def test_ensemble_mean_of_records_matches_decay(scenario):
    # unconditional average over many independently generated records
    sc = bg.BGScenario(dt=1e-3, t_final=1.0)
    n = 300
    finals = []
    for i in range(n):
        _, bloch, _ = bg.sme_eta_reference(sc, seed=1000, out_every=sc.n_steps,
                                           stream_id=i)
        finals.append(bloch[-1])
    finals = np.asarray(finals)
    x_expected = np.exp(-0.5 * 1.0)  # <sigma_x> decays at gamma/2
    se = finals[:, 0].std() / np.sqrt(n)
    assert abs(finals[:, 0].mean() - x_expected) < 3 * se + 2e-3


def test_bg_step_eta_one_matches_exact(scenario):
    # at full efficiency there is no fictitious channel: identical paths
    sc = bg.BGScenario(eta=1.0, dt=1e-3, t_final=1.0)
    t, ref, record = bg.sme_eta_reference(sc, seed=5, out_every=100)
    rho = abc_to_matrix(*sc.initial_abc())
    stream = NoiseStream(99, 77)
    worst = 0.0
    for k, r in enumerate(record.values, start=1):
        rho = bg.bg_step(rho, r, sc.dt, sc, stream)
        if k % 100 == 0:
            blo = np.array([2 * rho[0, 1].real, 2 * rho[0, 1].imag,
                            rho[0, 0].real - rho[1, 1].real])
            worst = max(worst, np.max(np.abs(blo - ref[k // 100])))
    assert worst < 1e-12


def test_h_nonlinearity_two_step_enumeration(scenario):
    # E_f[H[sigma] rho_f] != H[sigma] E_f[rho_f] once the ensemble disperses:
    # evolve two steps with two-point fictitious noise, then compare.
    dt = 1e-2
    sc = scenario
    stream_record = NoiseStream(3, 0)
    rho0 = abc_to_matrix(*sc.initial_abc())
    rs = []
    rho = rho0
    for _ in range(2):
        rho, r = bg.sme_eta_step(rho, dt, sc, stream_record)
        rs.append(r)
    seff = np.sqrt(sc.eta * sc.gamma)
    sf = np.sqrt((1.0 - sc.eta) * sc.gamma)

    def bg_branch(signs):
        state = rho0
        for r, s in zip(rs, signs):
            x = np.trace(state @ (SIGMA_MINUS + SIGMA_MINUS.conj().T)).real
            fdt = s * np.sqrt(dt) + dt * sf * x
            a, b, c = state[0, 0].real, state[0, 1], state[1, 1].real
            na, nb, nc = bg._step_triple(sc, a, b, c, seff * r * dt + sf * fdt,
                                         0.0, dt=dt)
            tr = na + nc
            state = abc_to_matrix(na / tr, nb / tr, nc / tr)
        return state

    branches = [bg_branch(s) for s in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
    mean_h = sum(h_superop(SIGMA_MINUS, rho) for rho in branches) / 4
    h_mean = h_superop(SIGMA_MINUS, sum(branches) / 4)
    assert np.max(np.abs(mean_h - h_mean)) > 1e-5


def test_ours_two_step_enumeration_exact(scenario):
    # lam = mu = 0, two-point fictitious outcomes: the weighted average of
    # the linear trajectories reproduces the exact two-step update to
    # roundoff, for any record values.
    dt = 5e-3
    sc = scenario
    rho0 = abc_to_matrix(*sc.initial_abc())
    rs = [0.9 / np.sqrt(dt), -0.4 / np.sqrt(dt)]

    # direct route
    rho_exact = rho0
    for r in rs:
        a, b, c = rho_exact[0, 0].real, rho_exact[0, 1], rho_exact[1, 1].real
        na, nb, nc = bg._step_triple(sc, a, b, c,
                                     np.sqrt(sc.eta * sc.gamma) * r * dt,
                                     1.0 - sc.eta, dt=dt)
        tr = na + nc
        rho_exact = abc_to_matrix(na / tr, nb / tr, nc / tr)

    # linear route over all four fictitious paths, flat reference law
    sf = np.sqrt((1.0 - sc.eta) * sc.gamma)
    seff = np.sqrt(sc.eta * sc.gamma)
    total = np.zeros((2, 2), dtype=complex)
    norm = 0.0
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            state = rho0
            for r, s in zip(rs, (s1, s2)):
                a, b, c = state[0, 0], state[0, 1], state[1, 1]
                fdt = s * np.sqrt(dt)
                na, nb, nc = bg._step_triple(sc, a, b, c, seff * r * dt + sf * fdt,
                                             0.0, dt=dt)
                state = np.array([[na, nb], [np.conj(nb), nc]])
            total += 0.25 * state
            norm += 0.25 * np.trace(state).real
    assert np.max(np.abs(total / norm - rho_exact)) < 1e-14


def test_ours_linear_step_reference_ratio(scenario):
    # lam = mu = 0 applies no scalar reweighting at all
    rho = abc_to_matrix(*scenario.initial_abc())
    out0 = bg.ours_linear_step(rho, r=1.2, dt=1e-3, sc=scenario, lam=0.0, mu=0.0,
                               stream=NoiseStream(4, 1))
    out1 = bg.ours_linear_step(rho, r=1.2, dt=1e-3, sc=scenario, lam=0.4, mu=0.0,
                               stream=NoiseStream(4, 1))
    ratio = np.exp(-1.2 * 1e-3 * 0.4 + 0.5 * 0.16 * 1e-3)
    assert np.allclose(out1, out0 * ratio, atol=1e-15)


def test_error_vs_ensemble_small(scenario):
    sc = bg.BGScenario(dt=1e-3, t_final=1.0)
    rep = bg.error_vs_ensemble(sc, seed=2, n_list=[50, 400], out_every=100)
    assert set(rep["rms"]) == {"ours", "bg"}
    assert rep["rms"]["ours"][50] > rep["rms"]["ours"][400]  # MC convergence
    assert rep["series"]["ours"][400].shape == rep["reference"].shape


def test_reference_law_invariance(scenario):
    sc = bg.BGScenario(dt=1e-3, t_final=1.0)
    t, ref, record = bg.sme_eta_reference(sc, seed=31, out_every=250)
    _, a = bg.ours_ensemble(sc, record, 4000, seed=31, out_every=250)
    _, b = bg.ours_ensemble(sc, record, 4000, seed=31, lam=0.3, mu=0.2, out_every=250)
    _, c = bg.ours_ensemble(sc, record, 4000, seed=31, lam="adaptive", mu="adaptive",
                            out_every=250)
    assert np.max(np.abs(a[4000] - b[4000])) < 0.05
    assert np.max(np.abs(a[4000] - c[4000])) < 0.05


def test_ensemble_rejects_mismatched_record(scenario):
    rec = Record(dt=scenario.dt * 3, values=np.zeros(10), channel="real",
                 scenario_hash=scenario.hash())
    with pytest.raises(RecordFormatError):
        bg.ours_ensemble(scenario, rec, 5, seed=0)
