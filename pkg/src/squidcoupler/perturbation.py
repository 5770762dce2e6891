"""Closed-form perturbative estimates of couplings and ZZ rates.

All transmon inputs (frequency, anharmonicity, level energies) come from exact
diagonalization of the bare transmon; only the zero-point fluctuations come
from the self-consistent normal-ordering condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .circuit import (
    ChainParams,
    CircuitParams,
    SpectatorParams,
    compile_chain,
    derive_energies,
    energies_from_capacitance,
    spectator_capacitance_matrix,
)
from .operators import DEFAULT_NCUT
from .spectrum import PhysicsError, find_root, transmon_levels

RESONANCE_GUARD = 10.0
ZPF_MAX = 2.0  # the defining function peaks at phi = 2
N_LEVELS_PERT = 5


class RegimeError(PhysicsError):
    """The transmon is outside the range where the zero-point equation has a root."""


class ResonanceError(PhysicsError):
    """A perturbative denominator is too small for the formula to be meaningful."""


@dataclass(frozen=True)
class TransmonPert:
    """Zero-point fluctuations and exact bare-transmon level data.

    ``levels`` holds the lowest bare energies relative to the ground state, in GHz.
    """

    phi_zpf: float
    n_zpf: float
    omega: float
    eta: float
    levels: tuple[float, ...] = ()
    EJ: float = float("nan")
    EC: float = float("nan")

    def harmonic_coefficients(self) -> tuple[float, float]:
        """Coefficients of a^dag a and of (a^2 + a^dag^2) in the quadratic expansion.

        The second vanishes at the self-consistent zero-point fluctuation.
        """
        damp = self.EJ * math.exp(-self.phi_zpf**2 / 2) * self.phi_zpf**2
        n2 = self.n_zpf**2
        return 8 * self.EC * n2 + damp, -4 * self.EC * n2 + 0.5 * damp


@dataclass(frozen=True)
class TwoPhotonDrive:
    eps_d: float
    omega_d: float = 0.0

    def __post_init__(self) -> None:
        if not self.eps_d >= 0:
            raise ValueError(f"eps_d must be non-negative, got {self.eps_d}")


def zpf_residual(phi: float, EJ: float, EC: float) -> float:
    return phi**4 * math.exp(-(phi**2) / 2) - 2 * EC / EJ


def solve_zpf(EJ: float, EC: float, ncut: int = DEFAULT_NCUT) -> TransmonPert:
    """Solve phi^4 exp(-phi^2 / 2) = 2 EC / EJ on (0, 2] and attach bare level data.

    Raises :class:`RegimeError` when EJ/EC is too small for a root to exist
    (the left side never exceeds 16 e^-2).
    """
    if EJ <= 0 or EC <= 0:
        raise RegimeError("EJ and EC must be positive")
    if zpf_residual(ZPF_MAX, EJ, EC) < 0:
        raise RegimeError(f"no zero-point solution for EJ/EC = {EJ / EC:.4g}")
    phi = brentq(zpf_residual, 1e-300, ZPF_MAX, args=(EJ, EC), xtol=1e-15, rtol=1e-15)
    levels = transmon_levels(EJ, EC, N_LEVELS_PERT, ncut)
    return TransmonPert(
        phi_zpf=phi,
        n_zpf=0.5 / phi,
        omega=float(levels[1]),
        eta=float(levels[2] - 2 * levels[1]),
        levels=tuple(float(x) for x in levels),
        EJ=EJ,
        EC=EC,
    )


def pair_perts(params: CircuitParams, ncut: int = DEFAULT_NCUT) -> tuple[TransmonPert, TransmonPert]:
    e = derive_energies(params)
    return solve_zpf(params.EJ1, e.EC1, ncut), solve_zpf(params.EJ2, e.EC2, ncut)


def normal_order_factor(*perts: TransmonPert) -> float:
    """exp(-sum phi_zpf^2 / 2), the renormalization picked up by normal ordering."""
    return math.exp(-sum(p.phi_zpf**2 for p in perts) / 2)


def _half_angle(phi_e1: float) -> float:
    # phi_e1 is in flux quanta; the reduced half-angle is pi * phi_e1.
    return math.pi * phi_e1


def g_eff(params: CircuitParams, p1: TransmonPert, p2: TransmonPert, phi_e1: float) -> float:
    """Effective exchange coupling <10|H_int|01> on the operating line (GHz)."""
    e = derive_energies(params)
    sigma = params.sum_EJC * normal_order_factor(p1, p2)
    return (
        -sigma * math.cos(_half_angle(phi_e1)) * p1.phi_zpf * p2.phi_zpf
        + e.g * p1.n_zpf * p2.n_zpf
    )


def zeta1(params: CircuitParams, p1: TransmonPert, p2: TransmonPert, phi_e1: float) -> float:
    """First-order (diagonal) ZZ rate. Independent of the qubit detuning."""
    sigma = params.sum_EJC * normal_order_factor(p1, p2)
    return -sigma * math.cos(_half_angle(phi_e1)) * (p1.phi_zpf * p2.phi_zpf) ** 2


def _guard(numerator: float, denominator: float, what: str) -> None:
    if denominator == 0 or abs(denominator) < RESONANCE_GUARD * abs(numerator):
        raise ResonanceError(
            f"{what}: denominator {denominator:.3g} GHz within {RESONANCE_GUARD}x of coupling {numerator:.3g} GHz"
        )


def zeta2_conserving(geff: float, p1: TransmonPert, p2: TransmonPert) -> float:
    """Second-order ZZ from excitation-conserving hopping, 4 g^2 eta / (Delta^2 - eta^2).

    The mean of the two anharmonicities is used for eta.
    """
    if geff == 0:
        return 0.0
    eta = 0.5 * (p1.eta + p2.eta)
    delta = p1.omega - p2.omega
    _guard(geff, delta - eta, "|11>-|02>/|20> resonance")
    _guard(geff, delta + eta, "|11>-|02>/|20> resonance")
    return 4 * geff**2 * eta / (delta**2 - eta**2)


def sine_energy(params: CircuitParams, p1: TransmonPert, p2: TransmonPert, phi_e1: float) -> float:
    return params.delta_EJC * normal_order_factor(p1, p2) * math.sin(_half_angle(phi_e1))


def odd_matrix_elements(
    params: CircuitParams, p1: TransmonPert, p2: TransmonPert, phi_e1: float
) -> dict[str, float]:
    """Odd-parity matrix elements g_ijkl = <ij|H_int|kl> to the retained order."""
    es = sine_energy(params, p1, p2, phi_e1)
    a, b = p1.phi_zpf, p2.phi_zpf
    r2, r6 = math.sqrt(2), math.sqrt(6)
    return {
        "0100": es * b,
        "1000": -es * a,
        "0201": r2 * es * (b - 0.5 * b**3),
        "2010": -r2 * es * (a - 0.5 * a**3),
        "1110": es * b * (1 - a**2),
        "1101": -es * a * (1 - b**2),
        "1211": r2 * es * (1 - a**2) * (b - 0.5 * b**3),
        "2111": -r2 * es * (1 - b**2) * (a - 0.5 * a**3),
        "2001": es * b * (-r2 / 2 * a**2),
        "0210": -es * a * (-r2 / 2 * b**2),
        "3011": es * b * (-r6 / 2 * a**2 + r6 / 6 * a**4),
        "0311": -es * a * (-r6 / 2 * b**2 + r6 / 6 * b**4),
    }


# (element, weight, upper state, lower state): term = weight * g^2 / (w_upper - w_lower)
_ODD_TERMS = (
    ("3011", 1, (1, 1), (3, 0)),
    ("0311", 1, (1, 1), (0, 3)),
    ("0210", -1, (1, 0), (0, 2)),
    ("2001", -1, (0, 1), (2, 0)),
    ("2111", 1, (1, 1), (2, 1)),
    ("1211", 1, (1, 1), (1, 2)),
    ("1110", 2, (1, 1), (1, 0)),
    ("1101", 2, (1, 1), (0, 1)),
    ("2010", -1, (1, 0), (2, 0)),
    ("0201", -1, (0, 1), (0, 2)),
    ("1000", -2, (1, 0), (0, 0)),
    ("0100", -2, (0, 1), (0, 0)),
)


def _bare_energy(p1: TransmonPert, p2: TransmonPert, state: tuple[int, int]) -> float:
    return p1.levels[state[0]] + p2.levels[state[1]]


def zeta2_odd(params: CircuitParams, p1: TransmonPert, p2: TransmonPert, phi_e1: float) -> float:
    """Second-order ZZ from odd-parity (asymmetry) terms, full twelve-term sum.

    Exactly zero when the coupler is symmetric or the inner flux is zero.
    """
    if sine_energy(params, p1, p2, phi_e1) == 0:
        return 0.0
    g = odd_matrix_elements(params, p1, p2, phi_e1)
    total = 0.0
    for key, weight, hi, lo in _ODD_TERMS:
        den = _bare_energy(p1, p2, hi) - _bare_energy(p1, p2, lo)
        _guard(g[key], den, f"odd-parity term {key}")
        total += weight * g[key] ** 2 / den
    return total


def zeta2_odd_collapsed(
    params: CircuitParams, p1: TransmonPert, p2: TransmonPert, phi_e1: float
) -> float:
    """Leading-order collapsed form of :func:`zeta2_odd`, for comparison."""
    es = sine_energy(params, p1, p2, phi_e1)
    a2, b2 = p1.phi_zpf**2, p2.phi_zpf**2
    w1, w2 = p1.omega, p2.omega
    bracket = (
        a2 / (2 * w1 - w2)
        + b2 / (2 * w2 - w1)
        + 4 * a2 / w1
        + 4 * b2 / w2
        + 4 * p1.eta / w1**2
        + 4 * p2.eta / w2**2
    )
    return -((es * p1.phi_zpf * p2.phi_zpf) ** 2) * bracket


@dataclass(frozen=True)
class ZetaBreakdown:
    zeta1: float
    zeta2_c: float
    zeta2_odd: float

    @property
    def total(self) -> float:
        return self.zeta1 + self.zeta2_c + self.zeta2_odd


def zeta_pert_terms(
    params: CircuitParams,
    phi_e1: float,
    perts: tuple[TransmonPert, TransmonPert] | None = None,
) -> ZetaBreakdown:
    p1, p2 = pair_perts(params) if perts is None else perts
    z1 = zeta1(params, p1, p2, phi_e1)
    z2 = zeta2_conserving(g_eff(params, p1, p2, phi_e1), p1, p2)
    zo = zeta2_odd(params, p1, p2, phi_e1)
    return ZetaBreakdown(z1, z2, zo)


def zeta_pert(
    params: CircuitParams,
    phi_e1: float,
    perts: tuple[TransmonPert, TransmonPert] | None = None,
) -> float:
    """zeta_1 + zeta_2c + zeta_2odd on the operating line (GHz)."""
    return zeta_pert_terms(params, phi_e1, perts).total


def predict_phi_off_pert(
    params: CircuitParams, bracket: tuple[float, float] = (0.25, 0.75)
) -> float:
    """Root of :func:`zeta_pert` on the operating line.

    The default bracket stays near half a flux quantum, where the effective
    exchange coupling is small enough for the hopping term to be valid.
    """
    perts = pair_perts(params)
    return find_root(lambda x: zeta_pert(params, x, perts), bracket)


def chain_perts(chain: ChainParams, ncut: int = DEFAULT_NCUT) -> tuple[TransmonPert, ...]:
    spec = compile_chain(chain)
    return tuple(solve_zpf(ej, ec, ncut) for ej, ec in zip(chain.EJ, spec.EC))


def longitudinal_couplings(
    chain: ChainParams,
    perts: Sequence[TransmonPert],
    phi12: float,
    phi23: float,
) -> tuple[float, float]:
    """J12 and J23 of the longitudinal terms that drive transmon 2 conditioned on 1 and 3."""
    p1, p2, p3 = perts
    d12 = (chain.EJC12[0] - chain.EJC12[1]) * normal_order_factor(p1, p2)
    d23 = (chain.EJC23[0] - chain.EJC23[1]) * normal_order_factor(p2, p3)
    J12 = d12 * p1.phi_zpf**2 * p2.phi_zpf * math.sin(_half_angle(phi12))
    J23 = -d23 * p3.phi_zpf**2 * p2.phi_zpf * math.sin(_half_angle(phi23))
    return J12, J23


def zeta13_from_couplings(J12: float, J23: float, omega2: float) -> float:
    return -2 * J12 * J23 / omega2


def zeta13_pert(
    chain: ChainParams,
    perts: Sequence[TransmonPert] | None = None,
    biases: tuple[float, float] | None = None,
) -> float:
    """Next-nearest-neighbour ZZ mediated by longitudinal driving of transmon 2.

    ``biases`` are the inner-loop fluxes of the two couplers; by default they
    are read from ``chain.bias12`` and ``chain.bias23``.
    """
    perts = chain_perts(chain) if perts is None else perts
    if biases is None:
        biases = (chain.bias12.phi_e1, chain.bias23.phi_e1)
    J12, J23 = longitudinal_couplings(chain, perts, *biases)
    return zeta13_from_couplings(J12, J23, perts[1].omega)


@dataclass(frozen=True)
class SpectatorEstimate:
    zeta_1S: float
    gamma: float
    g_para: float
    zeta1: float


def zeta_spectator(
    sp: SpectatorParams,
    phi_e1: float,
    ncut: int = DEFAULT_NCUT,
    omega2: float | None = None,
) -> SpectatorEstimate:
    """Indirect ZZ between transmon 1 and a spectator hybridized with transmon 2.

    ``g_para`` is the exchange element <1_2 0_S| g_2S n2 nS |0_2 1_S>.
    ``omega2`` overrides the bare transmon-2 frequency in the detuning, e.g.
    with its value dressed by the coupler at ``phi_e1``.
    """
    EC, g = energies_from_capacitance(spectator_capacitance_matrix(sp))
    p = sp.circuit
    p1 = solve_zpf(p.EJ1, EC[0], ncut)
    p2 = solve_zpf(p.EJ2, EC[1], ncut)
    ps = solve_zpf(sp.EJS, EC[2], ncut)
    g_para = g[1, 2] * p2.n_zpf * ps.n_zpf
    z1 = zeta1(p, p1, p2, phi_e1)
    if g_para == 0:
        return SpectatorEstimate(0.0, 0.0, 0.0, z1)
    det = (p2.omega if omega2 is None else omega2) - ps.omega
    _guard(g_para, det, "transmon 2 / spectator resonance")
    gamma = g_para / det
    return SpectatorEstimate(z1 * gamma**2, gamma, g_para, z1)


def two_photon_g2(
    params: CircuitParams, p1: TransmonPert, p2: TransmonPert, drive: TwoPhotonDrive
) -> float:
    """Two-photon exchange rate eps_d SigmaE' phi1^2 phi2 / 8 (GHz)."""
    sigma = params.sum_EJC * normal_order_factor(p1, p2)
    return drive.eps_d * sigma * p1.phi_zpf**2 * p2.phi_zpf / 8


def normal_ordered_coeffs(phi_zpf: float, max_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Normal-ordered expansion coefficients of cos(phi) and sin(phi).

    Returns ``(cos_table, sin_table)`` of shape (max_order + 1, max_order + 1);
    entry [m, k] multiplies (a^dag)^k a^(m - k). Even m populate the cosine
    table, odd m the sine table.
    """
    if not 0 <= max_order <= 8:
        raise ValueError("max_order must lie in [0, 8]")
    pref = math.exp(-(phi_zpf**2) / 2)
    cos_t = np.zeros((max_order + 1, max_order + 1))
    sin_t = np.zeros_like(cos_t)
    for m in range(max_order + 1):
        sign = -1.0 if (m // 2) % 2 else 1.0
        for k in range(m + 1):
            c = pref * sign * phi_zpf**m / (math.factorial(k) * math.factorial(m - k))
            (cos_t if m % 2 == 0 else sin_t)[m, k] = c
    return cos_t, sin_t
