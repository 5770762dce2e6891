import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_hamiltonian, mathieu_transmon_levels
from squidcoupler.circuit import (
    Branch,
    CircuitParams,
    FluxBias,
    HamiltonianSpec,
    compile_chain,
    ChainParams,
    compile_two_qubit,
    single_transmon_spec,
)
from squidcoupler.operators import (
    DimensionError,
    assemble_hamiltonian,
    bare_mode_basis,
    charge_ops,
    hamiltonian_terms,
)
from squidcoupler.spectrum import transmon_levels


def test_ncut_one():
    ops = charge_ops(1)
    assert np.array_equal(ops.n, np.diag([-1.0, 0.0, 1.0]))
    assert ops.dim == 3
    with pytest.raises(ValueError):
        charge_ops(0)


@pytest.mark.parametrize("ncut", [1, 3, 10])
def test_single_mode_operators(ncut):
    ops = charge_ops(ncut)
    for m in (ops.n, ops.cos_phi, ops.sin_phi):
        assert np.allclose(m, m.conj().T, atol=0)
    comm = ops.n @ ops.exp_i_phi - ops.exp_i_phi @ ops.n
    assert np.allclose(comm, -ops.exp_i_phi, atol=1e-15)
    prod = ops.exp_i_phi @ ops.exp_i_phi.conj().T
    d = ops.dim
    # identity except the truncation boundary
    assert np.allclose(prod[: d - 1, : d - 1], np.eye(d - 1))
    assert prod[d - 1, d - 1] == 0
    # e^{i phi} lowers the charge: <n-1| e^{i phi} |n> = 1
    assert ops.exp_i_phi[0, 1] == 1 and ops.exp_i_phi[1, 0] == 0
    assert not ops.n.flags.writeable


def test_transmon_gap_converged_at_ncut_10():
    EC = 0.25
    EJ = 46 * EC
    g10 = transmon_levels(EJ, EC, 2, ncut=10)[1]
    g30 = transmon_levels(EJ, EC, 2, ncut=30)[1]
    assert abs(g10 - g30) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.15, 0.4), st.floats(20, 120))
def test_transmon_levels_match_mathieu(EC, ratio):
    levels = transmon_levels(ratio * EC, EC, 5, ncut=15)
    assert levels == pytest.approx(mathieu_transmon_levels(ratio * EC, EC, 5), abs=1e-8)


def test_all_ej_zero_is_diagonal():
    ncut = 3
    EC = np.array([0.3, 0.2])
    g = 0.05
    spec = HamiltonianSpec(
        EC, np.array([[0, g], [g, 0]]), (Branch(0.0, (1, 0), 0.0), Branch(0.0, (-1, 1), 0.0))
    )
    H = assemble_hamiltonian(spec, ncut)
    expected = sorted(
        4 * EC[0] * m1**2 + 4 * EC[1] * m2**2 + g * m1 * m2
        for m1 in range(-ncut, ncut + 1)
        for m2 in range(-ncut, ncut + 1)
    )
    assert np.linalg.eigvalsh(H) == pytest.approx(expected, abs=1e-12)


def test_table_one_gaps_at_zero_bias():
    spec = compile_two_qubit(CircuitParams(), FluxBias())
    w = np.linalg.eigvalsh(assemble_hamiltonian(spec, 10))
    # same loaded charging energies, coupler junctions and charge coupling removed
    bare = HamiltonianSpec(
        spec.EC, np.zeros((2, 2)), tuple(Branch(b.EJ if i < 2 else 0.0, b.signs, 0.0)
                                        for i, b in enumerate(spec.branches))
    )
    wb = np.linalg.eigvalsh(assemble_hamiltonian(bare, 10))
    assert wb[1] - wb[0] == pytest.approx(4.49, abs=0.01)
    assert wb[2] - wb[0] == pytest.approx(6.33, abs=0.01)
    # the coupler potential at zero flux stiffens both transmons
    assert w[1] - w[0] > wb[1] - wb[0] + 0.1
    assert w[2] - w[0] > wb[2] - wb[0] + 0.1


@st.composite
def random_specs(draw):
    EC = [draw(st.floats(0.1, 1.0)) for _ in range(2)]
    g = draw(st.floats(-0.1, 0.1))
    branches = []
    for signs in [(1, 0), (0, 1), (-1, 1), (1, 1), (0, -1)]:
        if draw(st.booleans()) or signs in ((1, 0), (0, 1)):
            branches.append(Branch(draw(st.floats(0.0, 15.0)), signs, draw(st.floats(-4, 4))))
    return HamiltonianSpec(np.array(EC), np.array([[0, g], [g, 0]]), tuple(branches))


@settings(max_examples=25, deadline=None)
@given(random_specs(), st.integers(1, 4))
def test_matches_element_wise_oracle(spec, ncut):
    H = assemble_hamiltonian(spec, ncut)
    ref = brute_force_hamiltonian(
        spec.EC, spec.g, [(b.EJ, b.signs, b.flux_offset) for b in spec.branches], ncut
    )
    assert np.allclose(H, ref, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(random_specs())
def test_hermitian(spec):
    H = assemble_hamiltonian(spec, 4)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * np.max(np.abs(H))


@settings(max_examples=15, deadline=None)
@given(random_specs(), st.integers(0, 4), st.sampled_from([-2, -1, 1, 3]))
def test_two_pi_offset_shift_invariance(spec, which, k):
    which = which % len(spec.branches)
    shifted = list(spec.branches)
    b = shifted[which]
    shifted[which] = Branch(b.EJ, b.signs, b.flux_offset + 2 * math.pi * k)
    other = HamiltonianSpec(spec.EC, spec.g, tuple(shifted))
    w0 = np.linalg.eigvalsh(assemble_hamiltonian(spec, 4))
    w1 = np.linalg.eigvalsh(assemble_hamiltonian(other, 4))
    assert w1 == pytest.approx(w0, abs=1e-10)


def test_terms_reassemble_to_hamiltonian():
    p = CircuitParams().with_asymmetry(0.3)
    spec = compile_two_qubit(p, FluxBias(0.21, -0.4))
    static, ops = hamiltonian_terms(spec, 6)
    H = static.copy()
    for b, op in zip(spec.branches, ops):
        ph = np.exp(1j * b.flux_offset) * op
        H -= 0.5 * b.EJ * (ph + ph.conj().T)
    assert np.allclose(H, assemble_hamiltonian(spec, 6), atol=1e-12)


def test_convergence_in_ncut():
    spec = compile_two_qubit(CircuitParams(), FluxBias(0.3, -0.15))
    w10 = np.linalg.eigvalsh(assemble_hamiltonian(spec, 10))[:10]
    w15 = np.linalg.eigvalsh(assemble_hamiltonian(spec, 15))[:10]
    assert np.max(np.abs(w10 - w15)) < 1e-6
    # variational: a larger basis can only lower the eigenvalues
    assert np.all(w15 <= w10 + 1e-10)


def test_hierarchical_basis_matches_full_low_levels():
    spec = compile_two_qubit(CircuitParams(), FluxBias(0.2, -0.1))
    full = np.linalg.eigvalsh(assemble_hamiltonian(spec, 10))[:6]
    hier = np.linalg.eigvalsh(assemble_hamiltonian(spec, 10, bare_levels=12))[:6]
    assert hier == pytest.approx(full, abs=1e-6)


def test_bare_basis_phase_convention():
    spec = single_transmon_spec(11.5, 0.25)
    _, vecs = bare_mode_basis(spec, 0, 10)
    n = charge_ops(10).n
    for m in range(5):
        elem = vecs[:, m].conj() @ n @ vecs[:, m + 1]
        assert abs(elem.imag) < 1e-12 and elem.real > 0


def test_dimension_cap():
    spec = compile_chain(ChainParams())
    with pytest.raises(DimensionError):
        assemble_hamiltonian(spec, 30)
    with pytest.raises(DimensionError):
        hamiltonian_terms(compile_two_qubit(CircuitParams(), FluxBias()), 10, max_dim=100)
