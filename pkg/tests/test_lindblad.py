import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exciton_transfer.errors import (ContractViolation, ConvergenceError, CutoffWarning,
                                     DegenerateSteadyStateWarning, IntegrationFailure, InvalidModelError)
from exciton_transfer.hilbert import JointOperator, displaced_fock_state
from exciton_transfer.lindblad import (ChannelSet, DensityMatrix, cutoff_convergence, default_horizon,
                                       donor_state, evolve, initial_state, liouvillian,
                                       nbar_to_temperature, simulate, steady_state,
                                       temperature_to_nbar, thermal_initial_state)
from exciton_transfer.model import ModelParams, build_hamiltonian
from oracles import dense_generator, ladder, oracle_jumps, propagate


def _oscillator(cutoff, n_sites=2, omega=1.0):
    k = cutoff + 1
    a, ad = ladder(k)
    H = omega * np.kron(np.eye(n_sites), (ad @ a).real)
    return JointOperator(H, True, n_sites, k)


def _fock_state(n, cutoff, n_sites=2):
    k = cutoff + 1
    psi = np.zeros(n_sites * k)
    psi[n] = 1.0
    return DensityMatrix.from_ket(psi, n_sites, k)


def test_density_matrix_contract():
    DensityMatrix(np.eye(4) / 4, 2, 2).validate()
    with pytest.raises(ContractViolation):
        DensityMatrix(np.eye(4) / 2, 2, 2).validate()
    with pytest.raises(ContractViolation):
        DensityMatrix(np.diag([1.5, -0.5, 0, 0]), 2, 2).validate()
    with pytest.raises(ContractViolation):
        DensityMatrix(np.array([[0.5, 0.1], [0.3, 0.5]]), 2, 1).validate()
    with pytest.raises(ContractViolation):
        DensityMatrix(np.eye(3) / 3, 2, 2)


def test_channel_rates_non_negative():
    with pytest.raises(InvalidModelError):
        ChannelSet(-0.1)
    with pytest.raises(InvalidModelError):
        ChannelSet(0.1, nbar=-1)
    c = ChannelSet.from_params(ModelParams(gamma=0.2, nbar=0.3, gamma_d=0.01))
    assert (c.gamma, c.nbar, c.gamma_d) == (0.2, 0.3, 0.01)


def test_default_horizon():
    assert default_horizon(1.0) * 1.0 / (2 * np.pi) == pytest.approx(100.0)
    assert default_horizon(2.0) == pytest.approx(100 * np.pi)


def test_temperature_relation():
    assert nbar_to_temperature(0.7) == pytest.approx(1.0 / np.log(1.0 + 1.0 / 0.7), rel=1e-14)
    assert nbar_to_temperature(0.7) == pytest.approx(1.1270, abs=1e-4)
    assert temperature_to_nbar(nbar_to_temperature(0.3)) == pytest.approx(0.3, rel=1e-12)
    assert nbar_to_temperature(0.0) == 0.0


def test_zero_temperature_thermal_state_is_pure():
    p = ModelParams(phonon_cutoff=15)
    rho = thermal_initial_state(donor_state("triplet", p), 0.0, p)
    assert rho.purity() == pytest.approx(1.0, abs=1e-12)
    vac = displaced_fock_state(-0.5, 0, 16)
    psi = np.kron(donor_state("triplet", p), vac / np.linalg.norm(vac))
    np.testing.assert_allclose(rho.matrix, np.outer(psi, psi.conj()), atol=1e-14)


def test_thermal_weights_geometric():
    p = ModelParams(phonon_cutoff=40, g=1.0)
    rho = thermal_initial_state(donor_state("triplet", p), 1.0, p)
    alpha = -0.5
    # populations of the displaced Fock states
    k = 41
    el = donor_state("triplet", p)
    weights = []
    for n in range(5):
        v = np.kron(el, displaced_fock_state(alpha, n, k))
        weights.append((v.conj() @ rho.matrix @ v).real)
    np.testing.assert_allclose(weights, [1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32], atol=1e-8)


def test_thermal_state_needs_room():
    p = ModelParams(phonon_cutoff=10)
    with pytest.raises(ConvergenceError):
        thermal_initial_state(donor_state("triplet", p), 0.7, p)


def test_thermal_state_rejects_bad_input():
    p = ModelParams(phonon_cutoff=10)
    with pytest.raises(ContractViolation):
        thermal_initial_state(np.array([1, 1, 0, 0]), 0.0, p)
    with pytest.raises(InvalidModelError):
        thermal_initial_state(np.array([1, 0, 0]), 0.0, p)


def test_named_initial_states():
    p = ModelParams(phonon_cutoff=6)
    np.testing.assert_allclose(donor_state("singlet", p), np.array([1, -1, 0, 0]) / np.sqrt(2))
    np.testing.assert_allclose(donor_state("product-2", p), [0, 1, 0, 0])
    p3 = ModelParams(sites_per_monomer=3, phonon_cutoff=6)
    np.testing.assert_allclose(np.linalg.norm(donor_state("W", p3)), 1.0)
    with pytest.raises(InvalidModelError):
        donor_state("triplet", p3)
    with pytest.raises(InvalidModelError):
        donor_state("bogus", p)
    with pytest.raises(IndexError):
        donor_state("product-9", p)
    initial_state("thermal", p.replace(phonon_cutoff=10)).validate()


@pytest.mark.parametrize("force_generic", [False, True])
def test_damped_oscillator_law(force_generic):
    gamma = 0.2
    H = _oscillator(8)
    t = np.linspace(0, 30, 301)
    traj = evolve(H, ChannelSet(gamma), _fock_state(3, 8), 30.0, t, force_generic=force_generic,
                  warn_cutoff=False)
    np.testing.assert_allclose(traj.phonon_number, 3 * np.exp(-gamma * t), rtol=1e-6)


def test_damped_oscillator_with_heating():
    gamma, nbar = 0.3, 0.2
    H = _oscillator(30)
    t = np.linspace(0, 20, 201)
    traj = evolve(H, ChannelSet(gamma, nbar), _fock_state(2, 30), 20.0, t)
    expect = nbar + (2 - nbar) * np.exp(-gamma * t)
    np.testing.assert_allclose(traj.phonon_number, expect, rtol=1e-6)


def test_no_inter_monomer_coupling_means_no_transfer():
    p = ModelParams(coupling_truncation=1.0, phonon_cutoff=8, epsilon=1.0)
    traj = simulate(p, "triplet", t_final=100.0, record_grid=np.linspace(0, 100, 101))
    np.testing.assert_allclose(traj.P_D, 1.0, atol=1e-9)


def test_reference_transfer_tracks_triplet_acceptor():
    p = ModelParams(phonon_cutoff=12)
    traj = simulate(p, "triplet")
    p_ta = traj.state_population([1, 1])
    assert traj.P_D[-1] < 0.01
    assert np.max(np.abs(traj.P_D - (1 - p_ta))) < 0.05
    np.testing.assert_allclose(traj.P_D + traj.P_A, 1.0, atol=1e-8)


def _random_model(draw):
    m = draw(st.integers(2, 3))
    cutoff = draw(st.integers(1, 3))
    return ModelParams(
        n_monomers=m, sites_per_monomer=2, phonon_cutoff=cutoff,
        J=draw(st.floats(0.05, 1.0)), p=draw(st.floats(0.5, 2.0)), epsilon=draw(st.floats(-2, 2)),
        g=draw(st.floats(0.0, 1.5)), gamma=draw(st.floats(0.0, 0.5)), nbar=draw(st.floats(0.0, 0.5)),
        gamma_d=draw(st.floats(0.0, 0.1)), omega=draw(st.floats(0.5, 2.0)))


random_models = st.composite(_random_model)


@settings(max_examples=100)
@given(random_models(), st.sampled_from(["triplet", "singlet", "product-1", "product-3"]))
def test_physical_invariants_on_random_models(params, init):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        traj = simulate(params, init, t_final=15.0, record_grid=np.linspace(0, 15, 31), rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(traj.trace, 1.0, atol=1e-8)
    pops = traj.monomer_populations()
    assert np.all(pops > -1e-8) and np.all(pops < 1 + 1e-8)
    np.testing.assert_allclose(pops.sum(axis=1), 1.0, atol=1e-8)
    for r in traj.rho_el:
        assert np.max(np.abs(r - r.conj().T)) < 1e-10
    final = traj.final_state
    assert np.max(np.abs(final.matrix - final.matrix.conj().T)) < 1e-10
    assert final.min_eigenvalue() > -1e-8


@settings(max_examples=25)
@given(random_models())
def test_default_tolerance_stays_inside_failure_bound(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        traj = simulate(params, "triplet", t_final=15.0, record_grid=np.linspace(0, 15, 16))
    assert traj.final_state.min_eigenvalue() > -1e-6
    np.testing.assert_allclose(traj.trace, 1.0, atol=1e-8)


@settings(max_examples=20)
@given(random_models(), st.sampled_from(["triplet", "product-2"]))
def test_matches_dense_exponential_oracle(params, init):
    if params.n_sites * (params.phonon_cutoff + 1) > 24:
        params = params.replace(phonon_cutoff=24 // params.n_sites - 1)
    k = params.phonon_cutoff + 1
    H = build_hamiltonian(params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        rho0 = initial_state(init, params)
        grid = np.linspace(0, 8.0, 5)
        sizes = (2,) * params.n_monomers
        fast = evolve(H, ChannelSet.from_params(params), rho0, 8.0, grid, monomer_sizes=sizes,
                      rtol=1e-10, atol=1e-12, warn_cutoff=False)
        generic = evolve(H, ChannelSet.from_params(params), rho0, 8.0, grid, monomer_sizes=sizes,
                         rtol=1e-10, atol=1e-12, warn_cutoff=False, force_generic=True)
    jumps = oracle_jumps(params.n_sites, k, params.gamma, params.nbar, params.gamma_d)
    ref = propagate(H.matrix, jumps, rho0.matrix, [8.0])[0]
    assert np.max(np.abs(fast.final_state.matrix - ref)) < 1e-8
    assert np.max(np.abs(generic.final_state.matrix - ref)) < 1e-8


def test_sparse_generator_matches_dense_oracle():
    params = ModelParams(phonon_cutoff=2, gamma=0.1, nbar=0.2, gamma_d=0.03, g=0.7)
    H = build_hamiltonian(params)
    L = liouvillian(H, ChannelSet.from_params(params)).toarray()
    ref = dense_generator(H.matrix, oracle_jumps(4, 3, 0.1, 0.2, 0.03))
    d = H.dim
    # package generator acts on row-major vec, oracle on column-major
    perm = np.arange(d * d).reshape(d, d).T.ravel()
    np.testing.assert_allclose(L, ref[np.ix_(perm, perm)], atol=1e-14)


def test_unitary_limit_conserves_purity():
    p = ModelParams(gamma=0.0, gamma_d=0.0, phonon_cutoff=5, epsilon=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        traj = simulate(p, "triplet", t_final=50.0, record_grid=np.linspace(0, 50, 101))
    np.testing.assert_allclose(traj.purity, 1.0, atol=1e-8)


def test_dephasing_kills_inter_site_coherence_at_four_times_rate():
    gd = 0.05
    H = JointOperator(np.zeros((2, 2)), True, 2, 1)
    rho0 = DensityMatrix(np.full((2, 2), 0.5), 2, 1)
    t = np.linspace(0, 10, 11)
    traj = evolve(H, ChannelSet(0.0, 0.0, gd), rho0, 10.0, t, monomer_sizes=(1, 1), warn_cutoff=False)
    np.testing.assert_allclose(traj.rho_el[:, 0, 1].real, 0.5 * np.exp(-4 * gd * t), rtol=1e-7)


def test_long_time_matches_steady_state():
    # dephasing keeps the slowest decay rate near 0.2, so gamma*t=200 is far past it
    p = ModelParams(phonon_cutoff=4, gamma=0.5, nbar=0.1, J=0.8, epsilon=0.5, g=0.5, gamma_d=0.3)
    H = build_hamiltonian(p)
    ch = ChannelSet.from_params(p)
    ss = steady_state(H, ch)
    traj = evolve(H, ch, initial_state("triplet", p), 400.0, np.linspace(0, 400, 201), warn_cutoff=False)
    diff = traj.final_state.matrix - ss.matrix
    assert 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum() < 1e-6
    assert np.max(np.abs(liouvillian(H, ch) @ ss.matrix.ravel())) < 1e-10
    assert np.trace(ss.matrix) == pytest.approx(1.0, abs=1e-12)


def test_reference_run_parks_in_triplet_acceptor():
    traj = simulate(ModelParams(), "triplet")
    t_a = np.array([0, 0, 1, 1]) / np.sqrt(2)
    assert (t_a @ traj.rho_el[-1] @ t_a).real > 0.95


def test_reference_plateau_is_metastable():
    # the acceptor singlet/triplet split only relaxes through the donor, so the
    # generator has a decay rate far below gamma and the true fixed point differs
    p = ModelParams(phonon_cutoff=6)
    H = build_hamiltonian(p)
    ch = ChannelSet.from_params(p)
    rates = np.sort(-np.linalg.eigvals(liouvillian(H, ch).toarray()).real)
    assert rates[1] < 1e-5 * p.gamma
    ss = steady_state(H, ch)
    assert np.max(np.abs(liouvillian(H, ch) @ ss.matrix.ravel())) < 1e-10
    assert np.linalg.eigvalsh(ss.matrix)[0] > -1e-8


def _bare_model(cutoff, n_sites=2, eps=(0.5, -0.5)):
    k = cutoff + 1
    a, ad = ladder(k)
    H = np.kron(np.diag(np.asarray(eps) / 2), np.eye(k)) + np.kron(np.eye(n_sites), (ad @ a).real)
    return JointOperator(H, True, n_sites, k)


def test_degenerate_steady_state_is_flagged():
    nbar = 0.1
    H = _bare_model(20)
    with pytest.warns(DegenerateSteadyStateWarning):
        ss = steady_state(H, ChannelSet(0.5, nbar))
    w = nbar / (1 + nbar)
    thermal = w ** np.arange(21) / (1 + nbar)
    thermal /= thermal.sum()
    np.testing.assert_allclose(np.real(np.diag(ss.matrix)), np.tile(thermal, 2) / 2, atol=1e-8)


def test_zero_temperature_steady_state_is_vacuum():
    with pytest.warns(DegenerateSteadyStateWarning):
        ss = steady_state(_bare_model(5), ChannelSet(1.0, 0.0))
    ph = ss.matrix.reshape(2, 6, 2, 6).trace(axis1=0, axis2=2)
    assert ph[0, 0].real == pytest.approx(1.0, abs=1e-9)


def test_steady_state_requires_damping():
    with pytest.raises(InvalidModelError):
        steady_state(_bare_model(3), ChannelSet(0.0))


def test_cutoff_convergence_trivial_case():
    p = ModelParams(gamma=0.0, g=0.0, phonon_cutoff=5)
    assert cutoff_convergence(p, "triplet", 1e-6, t_final=50.0, n_records=101) == 1


def test_cutoff_convergence_reference():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        c = cutoff_convergence(ModelParams(), "triplet", 1e-3, n_records=201)
    assert 6 <= c <= 15


def test_cutoff_convergence_gives_up():
    with pytest.raises(ConvergenceError):
        cutoff_convergence(ModelParams(), "triplet", 1e-3, cutoffs=(1, 2), n_records=101)
    with pytest.raises(ValueError):
        cutoff_convergence(ModelParams(), "triplet", 0.0)


def test_cutoff_saturation_warns():
    with pytest.warns(CutoffWarning):
        simulate(ModelParams(phonon_cutoff=2), "triplet", t_final=20.0, record_grid=np.linspace(0, 20, 11))


def test_step_budget_failure_reports_diagnostics():
    p = ModelParams(phonon_cutoff=4)
    with pytest.raises(IntegrationFailure) as err:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CutoffWarning)
            simulate(p, "triplet", t_final=10.0, record_grid=np.linspace(0, 10, 3), max_steps=2)
    assert "nfev" in err.value.diagnostics


def test_record_grid_validation():
    p = ModelParams(phonon_cutoff=4)
    H, rho0 = build_hamiltonian(p), initial_state("triplet", p.replace(phonon_cutoff=4))
    with pytest.raises(ValueError):
        evolve(H, ChannelSet(0.1), rho0, 10.0, [0.0, 5.0, 4.0, 10.0])
    with pytest.raises(ValueError):
        evolve(H, ChannelSet(0.1), rho0, 10.0, [1.0, 10.0])
    with pytest.raises(ValueError):
        evolve(H, ChannelSet(0.1), rho0, -1.0)


def test_trajectory_table_columns():
    p = ModelParams(n_monomers=3, phonon_cutoff=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        traj = simulate(p, "triplet", t_final=10.0, record_grid=np.linspace(0, 10, 11))
    df = traj.to_frame()
    assert list(df.columns) == ["t", "P_D", "P_A", "P_I_1", "P_TA", "P_SA", "n_phonon", "purity", "C12", "C56"]
    assert df["C12"].iloc[0] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(IndexError):
        traj.P_I(2)
    assert traj.stats["kernel"] in ("structured", "generic")
