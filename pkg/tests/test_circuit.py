import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import E2H, adjugate_inverse_3x3, two_by_two_charging
from squidcoupler.circuit import (
    E2_OVER_H_GHZ_FF,
    ChainParams,
    CircuitParams,
    FluxBias,
    GradiometricBias,
    HamiltonianSpec,
    Branch,
    ParameterError,
    SpectatorParams,
    branch_offsets,
    compile_chain,
    compile_spectator,
    compile_two_qubit,
    derive_energies,
    energies_from_capacitance,
    flux_drops,
    gradiometric_to_bias,
    spectator_capacitance_matrix,
)

caps = st.floats(10.0, 200.0)
small_caps = st.floats(0.0, 5.0)
fluxes = st.floats(-3.0, 3.0)


@st.composite
def circuits(draw):
    asym = draw(st.floats(-0.9, 0.9))
    return CircuitParams(
        EJ1=draw(st.floats(5, 40)),
        EJ2=draw(st.floats(5, 40)),
        C1=draw(caps),
        C2=draw(caps),
        EJC1=draw(st.floats(0, 2)),
        EJC2=draw(st.floats(0, 2)),
        CC1=draw(small_caps),
        CC2=draw(small_caps),
    ).with_asymmetry(asym) if draw(st.booleans()) else CircuitParams(
        C1=draw(caps), C2=draw(caps), CC1=draw(small_caps), CC2=draw(small_caps)
    )


def test_conversion_constant_twelve_digits():
    assert f"{E2_OVER_H_GHZ_FF:.10f}" == "38.7404586493"
    assert E2_OVER_H_GHZ_FF == pytest.approx(E2H, rel=1e-15)


def test_decoupled_limit_exact():
    p = CircuitParams(CC1=0.0, CC2=0.0)
    e = derive_energies(p)
    assert e.g == 0.0
    # equal up to rounding of the intermediate C1 C2 product
    assert e.EC1 == pytest.approx(E2_OVER_H_GHZ_FF / (2 * p.C1), rel=1e-15)
    assert e.EC2 == pytest.approx(E2_OVER_H_GHZ_FF / (2 * p.C2), rel=1e-15)
    assert e.d_C == 0.0


def test_charging_matches_matrix_inversion_example():
    p = CircuitParams(C1=70.0, C2=70.0, CC1=0.75, CC2=0.75)
    e = derive_energies(p)
    ec1, ec2, g = two_by_two_charging(70.0, 70.0, 1.5)
    assert e.g == pytest.approx(g, rel=1e-12)
    assert e.EC1 == pytest.approx(ec1, rel=1e-12)
    assert e.EC2 == pytest.approx(ec2, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(caps, caps, small_caps)
def test_charging_matches_matrix_inversion_random(c1, c2, cc):
    e = derive_energies(CircuitParams(C1=c1, C2=c2, CC1=cc / 2, CC2=cc / 2))
    ec1, ec2, g = two_by_two_charging(c1, c2, cc)
    assert e.EC1 == pytest.approx(ec1, rel=1e-10)
    assert e.EC2 == pytest.approx(ec2, rel=1e-10)
    assert e.g == pytest.approx(g, rel=1e-10, abs=1e-15)


@pytest.mark.parametrize(
    "field,value",
    [("C1", 0.0), ("C2", -1.0), ("EJ1", 0.0), ("EJ2", float("nan")), ("CC1", -0.1), ("EJC2", -0.2)],
)
def test_invalid_parameters_rejected(field, value):
    with pytest.raises(ParameterError):
        CircuitParams(**{field: value})


def test_coupler_may_vanish():
    p = CircuitParams(EJC1=0.0, EJC2=0.0, CC1=0.0, CC2=0.0)
    assert p.sum_EJC == 0 and p.CC == 0 and p.d_C == 0


def test_with_asymmetry_keeps_sums():
    p = CircuitParams().with_asymmetry(0.2)
    assert p.sum_EJC == pytest.approx(0.8)
    assert p.delta_EJC == pytest.approx(0.16)
    assert p.CC == pytest.approx(1.56)
    assert p.d_C == pytest.approx(0.2)
    with pytest.raises(ParameterError):
        CircuitParams().with_asymmetry(1.5)


def test_flux_drops_zero_bias():
    assert flux_drops(CircuitParams(), FluxBias()) == (0.0, 0.0, 0.0, 0.0)


def test_flux_drops_identities_example():
    d = flux_drops(CircuitParams(), FluxBias(0.3, -0.15))
    assert d.phi_top - d.phi_bot == pytest.approx(2 * math.pi * 0.3, abs=1e-12)
    assert d.phi_J1 + d.phi_J2 + d.phi_bot == pytest.approx(2 * math.pi * -0.15, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(circuits(), fluxes, fluxes)
def test_flux_drops_identities_random(p, e1, e2):
    d = flux_drops(p, FluxBias(e1, e2))
    assert abs(d.phi_top - d.phi_bot - 2 * math.pi * e1) < 1e-12 * max(1, abs(e1)) * 10
    assert abs(d.phi_J1 + d.phi_J2 + d.phi_bot - 2 * math.pi * e2) < 1e-12 * max(1, abs(e1), abs(e2)) * 10


def test_shorted_junction_limit():
    # CC2 >> CC1 drives d_C to -1: the bottom branch carries no inner flux
    p = CircuitParams(CC1=1e-9, CC2=0.78)
    d = flux_drops(p, FluxBias(0.37, 0.0))
    assert p.d_C == pytest.approx(-1, abs=1e-8)
    assert d.phi_bot == pytest.approx(0.0, abs=1e-8)
    assert d.phi_top == pytest.approx(2 * math.pi * 0.37, abs=1e-8)


def test_gradiometric_operating_line_example():
    b = gradiometric_to_bias(GradiometricBias(phi_ei=0.4))
    assert b.phi_e1 == 0.4
    assert b.phi_e2 == pytest.approx(-0.2, abs=1e-15)
    assert b.phi_e1 + 2 * b.phi_e2 == pytest.approx(0.0, abs=1e-15)


def test_gradiometric_single_sided_limit():
    b = gradiometric_to_bias(GradiometricBias(0.3, 0.12, -0.05, EL=1.0, EL_prime=1e-12))
    assert b.phi_e2 == pytest.approx(0.12, abs=1e-10)


def test_gradiometric_zero():
    assert gradiometric_to_bias(GradiometricBias()) == FluxBias(0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(fluxes, fluxes, fluxes, st.floats(-2, 2))
def test_gradiometric_common_mode_invariance(ei, eo, eo2, c):
    a = gradiometric_to_bias(GradiometricBias(ei, eo, eo2))
    b = gradiometric_to_bias(GradiometricBias(ei, eo + c, eo2 + c))
    assert a.phi_e1 == b.phi_e1
    assert a.phi_e2 == pytest.approx(b.phi_e2, abs=1e-12)
    assert a.phi_e2 == pytest.approx(0.5 * ((eo - eo2) - ei), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(fluxes, fluxes, fluxes)
def test_operating_condition_iff_balanced(ei, eo, eo2):
    b = gradiometric_to_bias(GradiometricBias(ei, eo, eo2))
    assert b.phi_e1 + 2 * b.phi_e2 == pytest.approx(eo - eo2, abs=1e-12)


def test_compile_two_qubit_table_one_at_zero():
    spec = compile_two_qubit(CircuitParams(), FluxBias())
    assert [b.EJ for b in spec.branches] == [11.5, 20.0, 0.40, 0.40]
    assert all(b.flux_offset == 0 for b in spec.branches)
    assert [b.signs for b in spec.branches] == [(1, 0), (0, 1), (-1, 1), (-1, 1)]
    e = derive_energies(CircuitParams())
    assert spec.EC.tolist() == [e.EC1, e.EC2]
    assert spec.g[0, 1] == e.g and spec.g[1, 0] == e.g


def test_compile_two_qubit_offsets_compose_with_flux_drops():
    p = CircuitParams()
    bias = FluxBias(0.516, -0.258)
    d = flux_drops(p, bias)
    spec = compile_two_qubit(p, bias)
    offs = [b.flux_offset for b in spec.branches]
    assert offs == pytest.approx([d.phi_J1, -d.phi_J2, d.phi_top, d.phi_bot], abs=1e-14)
    assert branch_offsets(p, 0.516, -0.258) == pytest.approx(np.array(offs), abs=1e-14)


def test_spec_invariants():
    with pytest.raises(ParameterError):
        HamiltonianSpec(np.array([1.0, 1.0]), np.array([[0, 1], [2, 0]]), (Branch(1, (1, 1), 0),))
    with pytest.raises(ParameterError):
        HamiltonianSpec(np.array([1.0, 1.0]), np.eye(2), (Branch(1, (1, 1), 0),))
    with pytest.raises(ParameterError):
        HamiltonianSpec(np.array([1.0, 1.0]), np.zeros((2, 2)), (Branch(1, (1, 0), 0),))
    s = HamiltonianSpec(np.array([1.0]), np.zeros((1, 1)), (Branch(1, (1,), 3 * math.pi),))
    assert s.branches[0].flux_offset == pytest.approx(math.pi)
    s = HamiltonianSpec(np.array([1.0]), np.zeros((1, 1)), (Branch(1, (1,), -math.pi),))
    assert s.branches[0].flux_offset == pytest.approx(math.pi)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50))
def test_offsets_reduced(theta):
    s = HamiltonianSpec(np.array([1.0]), np.zeros((1, 1)), (Branch(1, (1,), theta),))
    r = s.branches[0].flux_offset
    assert -math.pi < r <= math.pi
    assert math.cos(r) == pytest.approx(math.cos(theta), abs=1e-12)
    assert math.sin(r) == pytest.approx(math.sin(theta), abs=1e-12)


def test_spectator_matches_hand_inversion():
    sp = SpectatorParams(CircuitParams(), CS=69.2, C_para=30.0)
    p = sp.circuit
    m = np.array(
        [[p.C1 + 1.56, -1.56, 0], [-1.56, p.C2 + 1.56 + 0.03, -0.03], [0, -0.03, 69.2 + 0.03]]
    )
    inv = adjugate_inverse_3x3(m)
    spec = compile_spectator(sp, FluxBias())
    assert spec.EC == pytest.approx(0.5 * E2H * np.diag(inv), rel=1e-12)
    for i, j in ((0, 1), (1, 2), (0, 2)):
        assert spec.g[i, j] == pytest.approx(4 * E2H * inv[i, j], rel=1e-10)
    assert spec.g[0, 2] > 0  # small but retained
    assert spectator_capacitance_matrix(sp) == pytest.approx(m)


def test_spectator_zero_para_is_decoupled():
    spec = compile_spectator(SpectatorParams(C_para=0.0), FluxBias())
    assert spec.g[1, 2] == 0 and spec.g[0, 2] == 0
    two = compile_two_qubit(CircuitParams(), FluxBias())
    assert spec.EC[:2] == pytest.approx(two.EC, rel=1e-12)
    assert spec.g[0, 1] == pytest.approx(two.g[0, 1], rel=1e-12)


def test_singular_capacitance_rejected():
    with pytest.raises(ParameterError):
        energies_from_capacitance(np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_chain_capacitance_and_branches():
    chain = ChainParams()
    spec = compile_chain(chain)
    c1, c2, c3 = chain.C
    m = np.array([[c1 + 1.56, -1.56, 0], [-1.56, c2 + 3.12, -1.56], [0, -1.56, c3 + 1.56]])
    inv = adjugate_inverse_3x3(m)
    assert spec.EC == pytest.approx(0.5 * E2H * np.diag(inv), rel=1e-12)
    assert spec.g[0, 2] == pytest.approx(4 * E2H * inv[0, 2], rel=1e-10)
    assert spec.g[0, 2] > 0
    assert len(spec.branches) == 7


def test_chain_without_second_coupler_reduces_to_pair():
    chain = ChainParams(EJC23=(0.0, 0.0), CC23=(0.0, 0.0))
    spec = compile_chain(chain)
    pair = compile_two_qubit(chain.pair("12"), FluxBias())
    assert spec.g[1, 2] == 0 and spec.g[0, 2] == 0
    assert spec.EC[:2] == pytest.approx(pair.EC, rel=1e-12)
    assert spec.EC[2] == pytest.approx(E2H / (2 * chain.C[2]), rel=1e-12)
    assert spec.g[0, 1] == pytest.approx(pair.g[0, 1], rel=1e-12)


def test_chain_pair_and_asymmetry():
    chain = ChainParams().with_asymmetry(0.2)
    assert chain.EJC12 == pytest.approx((0.48, 0.32))
    assert chain.CC23 == pytest.approx((0.936, 0.624))
    p = chain.pair("23")
    assert (p.EJ1, p.EJ2, p.C1, p.C2) == (chain.EJ[1], chain.EJ[2], chain.C[1], chain.C[2])
    with pytest.raises(ValueError):
        chain.pair("13")


def test_spectator_validation():
    with pytest.raises(ParameterError):
        SpectatorParams(C_para=-1.0)
    with pytest.raises(ParameterError):
        SpectatorParams(EJS=0.0)
