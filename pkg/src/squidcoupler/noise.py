"""Flux-noise sensitivity, echo dephasing times and drift estimates.

Derivatives are of transition frequencies omega_s = E_s - E_00 in cyclic GHz
per flux quantum. Dephasing times follow the 1/f echo estimate with a
spectral density S(f) = A^2 / f (f in Hz, A in flux quanta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .circuit import CircuitParams, GradiometricBias, gradiometric_to_bias
from .operators import DEFAULT_NCUT, charge_ops
from .pulse import min_gate_time
from .spectrum import Spectrum, find_phi_off, two_qubit_spectrum, write_table, zeta_at

FD_STEP = 1e-5  # flux quanta
HF_TOLERANCE = 0.02
N_LEVELS_NOISE = 12
SINGLE_EXCITATIONS = ((1, 0), (0, 1))
TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class FluxNoiseModel:
    """1/f amplitudes of the inner and the two outer loop fluxes.

    ``correlation`` is the correlation coefficient of the two outer-loop
    noises; -1 is the anti-correlated worst case.
    """

    A_inner: float = 1e-6
    A_outer: float = 5e-6
    A_outer_prime: float = 5e-6
    correlation: float = -1.0

    def __post_init__(self) -> None:
        for name in ("A_inner", "A_outer", "A_outer_prime"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not -1.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")

    def scaled(self, factor: float) -> "FluxNoiseModel":
        return replace(
            self,
            A_inner=factor * self.A_inner,
            A_outer=factor * self.A_outer,
            A_outer_prime=factor * self.A_outer_prime,
        )


@dataclass(frozen=True)
class FluxDerivatives:
    """d omega / d Phi for the inner and two outer loop fluxes, GHz per flux quantum."""

    inner: float
    outer: float
    outer_prime: float


@dataclass(frozen=True)
class DerivativeReport:
    """Closed-form and finite-difference derivatives of one transition."""

    label: tuple[int, int]
    closed_form: FluxDerivatives
    finite_difference: FluxDerivatives | None
    inner_disagreement: float

    @property
    def flagged(self) -> bool:
        return self.inner_disagreement > HF_TOLERANCE


def coupler_cos_operator(ncut: int = DEFAULT_NCUT) -> np.ndarray:
    """cos(phi_2 - phi_1) on the two-mode charge product space."""
    e = charge_ops(ncut).exp_i_phi
    b = np.kron(e.conj().T, e)
    return 0.5 * (b + b.conj().T)


def _expectation(sp: Spectrum, label: tuple[int, int], op: np.ndarray) -> float:
    v = sp.eigenvectors[:, sp.index(label)]
    return float(np.real(v.conj() @ op @ v))


def closed_form_derivatives(
    params: CircuitParams,
    phi_e1: float,
    label: tuple[int, int],
    ncut: int = DEFAULT_NCUT,
    spectrum: Spectrum | None = None,
) -> FluxDerivatives:
    """Hellmann-Feynman estimates that neglect <sin(phi_2 - phi_1)>.

    Per radian of loop flux the inner derivative is
    1/2 sum_EJC sin(phi_e1 / 2) <cos(phi_2 - phi_1)> and the outer ones are
    +-1/2 delta_EJC sin(phi_e1 / 2) <cos(phi_2 - phi_1)>, with the
    expectation taken as a difference between ``label`` and the ground state.
    """
    sp = spectrum or two_qubit_spectrum(params, phi_e1, ncut, N_LEVELS_NOISE)
    cos = coupler_cos_operator(ncut)
    dcos = _expectation(sp, label, cos) - _expectation(sp, (0, 0), cos)
    s = math.sin(math.pi * phi_e1)
    inner = 0.5 * params.sum_EJC * s * dcos * TWO_PI
    outer = 0.5 * params.delta_EJC * s * dcos * TWO_PI
    return FluxDerivatives(inner, outer, -outer)


def _transition(params: CircuitParams, grad: GradiometricBias, label, ncut: int) -> float:
    bias = gradiometric_to_bias(grad)
    sp = two_qubit_spectrum(params, bias.phi_e1, ncut, N_LEVELS_NOISE, phi_e2=bias.phi_e2)
    return sp.frequency(label)


def finite_difference_derivatives(
    params: CircuitParams,
    grad: GradiometricBias,
    label: tuple[int, int],
    step: float = FD_STEP,
    ncut: int = DEFAULT_NCUT,
) -> FluxDerivatives:
    """Central differences of the transition frequency in each loop flux."""
    out = []
    for name in ("phi_ei", "phi_eo", "phi_eo_prime"):
        x = getattr(grad, name)
        hi = _transition(params, replace(grad, **{name: x + step}), label, ncut)
        lo = _transition(params, replace(grad, **{name: x - step}), label, ncut)
        out.append((hi - lo) / (2 * step))
    return FluxDerivatives(*out)


def operating_gradiometric(phi_e1: float) -> GradiometricBias:
    """Gradiometric bias on the operating line with balanced outer loops."""
    return GradiometricBias(phi_ei=phi_e1)


def flux_derivatives(
    params: CircuitParams,
    grad: GradiometricBias,
    label: tuple[int, int],
    ncut: int = DEFAULT_NCUT,
    validate: bool = True,
    step: float = FD_STEP,
) -> DerivativeReport:
    """Closed-form derivatives, optionally cross-checked by finite differences.

    Raises
    ------
    ValueError
        If the outer loops are unbalanced, which leaves the operating line.
    """
    if grad.delta_phi_eo != 0:
        raise ValueError("derivatives are defined on the operating line (balanced outer loops)")
    bias = gradiometric_to_bias(grad)
    sp = two_qubit_spectrum(params, bias.phi_e1, ncut, N_LEVELS_NOISE, phi_e2=bias.phi_e2)
    cf = closed_form_derivatives(params, bias.phi_e1, label, ncut, sp)
    fd = None
    disagreement = 0.0
    if validate:
        fd = finite_difference_derivatives(params, grad, label, step, ncut)
        scale = max(abs(fd.inner), abs(cf.inner))
        disagreement = abs(fd.inner - cf.inner) / scale if scale > 0 else 0.0
    return DerivativeReport(tuple(label), cf, fd, disagreement)


def echo_dephasing(derivs: FluxDerivatives, noise: FluxNoiseModel) -> float:
    """Echo dephasing time in microseconds; ``inf`` when the state is insensitive."""
    var_outer = (
        (noise.A_outer * derivs.outer) ** 2
        + (noise.A_outer_prime * derivs.outer_prime) ** 2
        + 2 * noise.correlation * noise.A_outer * noise.A_outer_prime * derivs.outer * derivs.outer_prime
    )
    var = (noise.A_inner * derivs.inner) ** 2 + max(var_outer, 0.0)
    rate = math.sqrt(math.log(2)) * TWO_PI * math.sqrt(var)  # 1/ns
    if rate == 0:
        return math.inf
    return 1e-3 / rate


def rms_drift(A: float, t_total: float, t_min: float) -> float:
    """RMS flux excursion of band-limited 1/f noise between 1/t_total and 1/t_min.

    The spectral density S(f) = A^2 / |f| is taken as two-sided, so
    integrating over both signs of f gives sigma^2 = 2 A^2 ln(t_total / t_min).
    Times are in seconds and A in flux quanta.
    """
    if not t_total >= t_min > 0:
        raise ValueError("need t_total >= t_min > 0")
    return A * math.sqrt(2 * math.log(t_total / t_min))


@dataclass(frozen=True, eq=False)
class DephasingTable:
    """Rows of a dephasing sweep; column names in ``header``."""

    header: tuple[str, ...]
    rows: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.header.index(name)]

    def to_csv(self, path) -> None:
        write_table(path, self.header, self.rows)


def _state_columns(params, phi_off, noise, ncut, labels):
    grad = operating_gradiometric(phi_off)
    out = []
    for label in labels:
        d = flux_derivatives(params, grad, label, ncut, validate=False).closed_form
        inner_only = echo_dephasing(d, replace(noise, A_outer=0.0, A_outer_prime=0.0))
        outer_only = echo_dephasing(d, replace(noise, A_inner=0.0))
        out += [d.inner, d.outer, echo_dephasing(d, noise), inner_only, outer_only]
    return out


def _state_header(labels) -> list[str]:
    cols = []
    for a, b in labels:
        s = f"{a}{b}"
        cols += [f"dw{s}_inner", f"dw{s}_outer", f"T{s}_us", f"T{s}_inner_us", f"T{s}_outer_us"]
    return cols


def asymmetry_dephasing_sweep(
    params: CircuitParams,
    asymmetries: Sequence[float],
    noise: FluxNoiseModel = FluxNoiseModel(),
    sum_EJC: float | None = None,
    ncut: int = DEFAULT_NCUT,
    labels: Sequence[tuple[int, int]] = SINGLE_EXCITATIONS,
) -> DephasingTable:
    """Echo dephasing at the idle point versus junction asymmetry at fixed sum_EJC."""
    rows = []
    for asym in asymmetries:
        p = params.with_asymmetry(asym, sum_EJC)
        phi_off = find_phi_off(p, ncut=ncut)
        rows.append([asym, p.delta_EJC, phi_off, *_state_columns(p, phi_off, noise, ncut, labels)])
    header = ("asymmetry", "delta_EJC_GHz", "phi_off", *_state_header(labels))
    return DephasingTable(header, np.array(rows, dtype=float))


def coupler_energy_tradeoff(
    params: CircuitParams,
    sum_grid: Sequence[float],
    noise: FluxNoiseModel = FluxNoiseModel(),
    ncut: int = DEFAULT_NCUT,
    labels: Sequence[tuple[int, int]] = SINGLE_EXCITATIONS,
) -> DephasingTable:
    """Dephasing time and minimum gate time of symmetric couplers versus sum_EJC.

    A coupler without Josephson energy has no idle point; its row carries
    ``phi_off = nan`` and unbounded dephasing times.
    """
    rows = []
    for s in sum_grid:
        p = params.with_asymmetry(0.0, s)
        zeta_on = zeta_at(p, 0.0, ncut)
        t_min = min_gate_time(zeta_on) if zeta_on != 0 else math.inf
        if s == 0:
            cols = []
            for _ in labels:
                cols += [0.0, 0.0, math.inf, math.inf, math.inf]
            rows.append([s, zeta_on, t_min, math.nan, *cols])
            continue
        phi_off = find_phi_off(p, ncut=ncut)
        rows.append([s, zeta_on, t_min, phi_off, *_state_columns(p, phi_off, noise, ncut, labels)])
    header = ("sum_EJC_GHz", "zeta_on_GHz", "min_T_G_ns", "phi_off", *_state_header(labels))
    return DephasingTable(header, np.array(rows, dtype=float))

