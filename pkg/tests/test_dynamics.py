import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cphase_error, exp_decay, grid_virtual_z
from squidcoupler.circuit import CircuitParams
from squidcoupler.dynamics import (
    CZ_DIAG,
    Propagator,
    average_gate_fidelity,
    coherent_error,
    entangling_phase,
    evolve_density_matrices,
    kraus_from_choi,
    kraus_infidelity,
    linear_t1_fit,
    local_z,
    offset_error_map,
    process_choi,
    propagate,
    propagate_lindblad,
    propagate_unitary,
    simulate_gate,
    t1_sweep_fit,
    virtual_z_optimize,
)
from squidcoupler.noise import rms_drift
from squidcoupler.pulse import Waveform

DECOUPLED = CircuitParams(EJC1=0.0, EJC2=0.0, CC1=0.0, CC2=0.0)


def _wrap_pi(x):
    """Distance of x from the nearest multiple of pi."""
    return abs((x + math.pi / 2) % math.pi - math.pi / 2)


# -- fidelity metric ---------------------------------------------------------


def test_cz_has_zero_error():
    r = coherent_error(np.diag(CZ_DIAG), range(4))
    assert r.coherent_error < 1e-14
    assert r.leakage == pytest.approx(0.0, abs=1e-15)


def test_identity_fidelity():
    eye = np.eye(4, dtype=complex)
    # without local correction F = (4 + 4) / 20
    assert average_gate_fidelity(eye) == pytest.approx(0.4, abs=1e-15)
    assert coherent_error(eye, range(4), phases=(0.0, 0.0)).coherent_error == pytest.approx(0.6, abs=1e-15)
    # local Z can spread the missing pi of conditional phase over the four levels
    assert virtual_z_optimize(eye)[2] == pytest.approx(cphase_error(math.pi), abs=1e-12)


@pytest.mark.parametrize("delta", [0.01, -0.003, 0.2])
def test_cphase_error_matches_closed_form(delta):
    U = np.diag([1, 1, 1, np.exp(1j * (math.pi + delta))])
    assert coherent_error(U, range(4)).coherent_error == pytest.approx(cphase_error(delta), abs=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_virtual_z_recovers_local_phases(a, b):
    U = np.diag(CZ_DIAG * np.conj(local_z(a, b)))
    p1, p2, err = virtual_z_optimize(U)
    assert err < 1e-13
    assert _wrap_pi(p1 - a) < 1e-7 and _wrap_pi(p2 - b) < 1e-7


@settings(max_examples=8, deadline=None)
@given(st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4))
def test_virtual_z_matches_grid_search(angles):
    diag = np.exp(1j * np.array(angles))
    _, _, err = virtual_z_optimize(np.diag(diag))
    _, _, grid_err = grid_virtual_z(diag)
    assert err <= grid_err + 1e-12
    assert err == pytest.approx(grid_err, abs=1e-7)
    # only the entangling-phase mismatch survives
    delta = entangling_phase(np.diag(diag)) - math.pi
    assert err == pytest.approx(cphase_error(delta), abs=1e-12)


def test_leakage_from_norm_loss():
    U = np.diag([1, 1, 1, -1]) * math.sqrt(0.9)
    r = coherent_error(U.astype(complex), range(4))
    assert r.leakage == pytest.approx(0.1, abs=1e-14)
    assert 0 <= r.coherent_error <= 1


# -- unitary propagation -----------------------------------------------------


def test_zero_duration_is_identity(table_one, phi_off):
    U, _ = propagate_unitary(table_one, Waveform(0.01, [phi_off]), n_levels=12)
    assert np.array_equal(U, np.eye(12))


def test_constant_waveform_phases(table_one, phi_off):
    prop = Propagator(table_one, phi_off, n_levels=16)
    t = 3.0
    U = propagate(prop, Waveform.constant(phi_off, t))
    w = prop.spectrum.eigenvalues
    assert np.max(np.abs(U - np.diag(np.exp(-2j * math.pi * w * t)))) < 1e-9


def test_decoupled_flat_gate_is_identity_up_to_phases():
    r = simulate_gate(DECOUPLED, Waveform.constant(0.3, 5.0), n_levels=12)
    assert r.leakage < 1e-12
    assert np.max(np.abs(r.projected_propagator - np.diag(np.diag(r.projected_propagator)))) < 1e-12
    # no conditional phase, so only the CZ floor remains
    assert r.coherent_error == pytest.approx(cphase_error(math.pi), abs=1e-9)


def test_unitarity_on_gate_slice(table_one, cz22):
    wf = cz22.waveform
    piece = Waveform(wf.dt, wf.samples[:600])
    U, _ = propagate_unitary(table_one, piece)
    assert np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) < 1e-9


@pytest.mark.slow
def test_calibrated_gate_error(cz22_result):
    assert cz22_result.coherent_error < 1e-6
    assert 0 <= cz22_result.leakage < 1e-6
    U = cz22_result.projected_propagator
    assert abs(((entangling_phase(U) - math.pi + math.pi) % (2 * math.pi)) - math.pi) < 1e-6


@pytest.mark.slow
def test_step_size_convergence(table_one, cz22, cz22_result):
    fine = simulate_gate(table_one, cz22.waveform, dt_prop=0.001)
    assert abs(fine.coherent_error - cz22_result.coherent_error) < 5e-8


@pytest.mark.slow
def test_truncation_convergence(table_one, cz22, cz22_result):
    more = simulate_gate(table_one, cz22.waveform, n_levels=48)
    assert abs(more.coherent_error - cz22_result.coherent_error) < 5e-8


# -- open-system propagation -------------------------------------------------


def test_single_excitation_decay():
    prop = Propagator(DECOUPLED, 0.3, n_levels=12)
    i10, i00 = prop.spectrum.index((1, 0)), prop.spectrum.index((0, 0))
    rho0 = np.zeros((1, 12, 12), dtype=complex)
    rho0[0, i10, i10] = 1.0
    t, T1 = 20.0, 100.0
    rho = evolve_density_matrices(prop, Waveform.constant(0.3, t), rho0, (T1, math.inf))[0]
    assert rho[i10, i10].real == pytest.approx(exp_decay(t, T1), abs=1e-6)
    assert rho[i00, i00].real == pytest.approx(1 - exp_decay(t, T1), abs=1e-6)
    assert abs(np.trace(rho) - 1) < 1e-8


def test_trace_preserved_on_gate_slice(table_one, cz22):
    wf = cz22.waveform
    piece = Waveform(wf.dt, wf.samples[:400])
    prop = Propagator(table_one, float(wf.samples[0]), n_levels=28)
    idx = prop.computational_indices
    rho0 = np.zeros((4, 28, 28), dtype=complex)
    for k, i in enumerate(idx):
        rho0[k, i, i] = 1.0
    out = evolve_density_matrices(prop, piece, rho0, (50.0, 80.0))
    for rho in out:
        assert abs(np.trace(rho) - 1) < 1e-8
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-12


def test_kraus_from_unitary_choi():
    U = np.diag(CZ_DIAG)
    choi = np.zeros((16, 16), dtype=complex)
    for i in range(4):
        for j in range(4):
            choi[4 * i : 4 * i + 4, 4 * j : 4 * j + 4] = np.outer(U[:, i], U[:, j].conj())
    kraus, wmin = kraus_from_choi(choi)
    assert sum(np.linalg.norm(K) > 1e-6 for K in kraus) == 1
    infid, _ = kraus_infidelity(kraus)
    assert infid == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(Exception):
        kraus_from_choi(choi - 1e-6 * np.eye(16))


def test_lindblad_rejects_bad_t1(table_one, cz22):
    with pytest.raises(ValueError):
        propagate_lindblad(table_one, cz22.waveform, (0.0, 1e6))


@pytest.mark.slow
def test_lindblad_unitary_limit(table_one, cz22):
    prop = Propagator(table_one, float(cz22.waveform.samples[0]), n_levels=28)
    choi = process_choi(prop, cz22.waveform, (math.inf, math.inf))
    kraus, _ = kraus_from_choi(choi)
    infid, _ = kraus_infidelity(kraus)
    ref = coherent_error(propagate(prop, cz22.waveform), prop.computational_indices)
    assert infid == pytest.approx(ref.coherent_error, abs=1e-8)


@pytest.mark.slow
def test_lindblad_one_millisecond(lindblad_1ms):
    assert lindblad_1ms.infidelity == pytest.approx(1.8e-5, rel=0.2)


@pytest.mark.slow
def test_kraus_completeness_bound(lindblad_1ms):
    S = sum(K.conj().T @ K for K in lindblad_1ms.kraus_set)
    assert np.linalg.eigvalsh(np.eye(4) - S).min() > -1e-8
    assert lindblad_1ms.choi_min_eigenvalue > -1e-10


# -- T1 fit ------------------------------------------------------------------


def test_linear_fit_exact_recovery():
    T1 = [1e4, 3e4, 1e5, 1e6]
    y = [0.8 * 22 / t + 4.5e-7 for t in T1]
    f = linear_t1_fit(22.0, T1, y)
    assert f.a == pytest.approx(0.8, rel=1e-12)
    assert f.b == pytest.approx(4.5e-7, rel=1e-9)
    assert max(abs(r) for r in f.residuals) < 1e-18


def test_fit_validation(table_one, cz22):
    with pytest.raises(ValueError):
        linear_t1_fit(22.0, [1e5], [1e-4])
    with pytest.raises(ValueError):
        t1_sweep_fit(table_one, cz22.waveform, [1e5, 5e5])


@pytest.mark.slow
def test_t1_sweep_slope(t1_fit):
    assert t1_fit.a == pytest.approx(0.80, abs=0.02)


@pytest.mark.slow
def test_t1_sweep_residuals(t1_fit):
    for y, r in zip(t1_fit.infidelity, t1_fit.residuals):
        assert abs(r) < 0.05 * y


# -- flux offsets ------------------------------------------------------------


@pytest.fixture(scope="module")
def drift_sigma():
    return rms_drift(5e-6, 3600.0, 22e-9)


@pytest.mark.slow
def test_offset_map(table_one, cz22, cz22_result, drift_sigma):
    s = drift_sigma
    steps = np.array([-2, -1, 0, 1, 2]) * s
    inner = offset_error_map(table_one, cz22.waveform, steps, [0.0])[:, 0]
    outer = offset_error_map(table_one, cz22.waveform, [0.0], 2 * steps)[0]
    assert inner[2] == pytest.approx(cz22_result.coherent_error, abs=1e-15)
    for axis in (inner, outer):
        assert axis[0] > axis[1] > axis[2] and axis[4] > axis[3] > axis[2]
    corners = offset_error_map(table_one, cz22.waveform, [-s, s], [-2 * s, 2 * s])
    assert np.max(corners) < 1e-6 and np.max(inner) < 1e-6
