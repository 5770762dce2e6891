"""Circuit parameters, flux allocation and compilation to mode-level Hamiltonians.

Energies are cyclic frequencies E/h in GHz, capacitances in fF, external fluxes
in units of the flux quantum. Branch flux offsets are the only quantities kept
in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

# Exact SI values (2019 redefinition).
ELEMENTARY_CHARGE = 1.602176634e-19  # C
PLANCK = 6.62607015e-34  # J s

#: e^2/h expressed in GHz * fF, i.e. 38.7404586493 (12 significant digits).
E2_OVER_H_GHZ_FF = ELEMENTARY_CHARGE**2 / PLANCK * 1e15 / 1e9

CAPACITANCE_COND_LIMIT = 1e12


class ParameterError(ValueError):
    """Raised for physically invalid circuit parameters."""


def _reduce_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    r = math.remainder(theta, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


def _require_positive(**values: float) -> None:
    for name, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise ParameterError(f"{name} must be strictly positive, got {v!r}")


def _require_nonnegative(**values: float) -> None:
    for name, v in values.items():
        if not (np.isfinite(v) and v >= 0):
            raise ParameterError(f"{name} must be non-negative, got {v!r}")


@dataclass(frozen=True)
class CircuitParams:
    """Two transmons joined by a SQUID coupler.

    Transmon energies and capacitances must be strictly positive. Coupler
    junction energies and capacitances may be zero so that single-junction
    couplers and fully decoupled limits can be expressed.
    """

    EJ1: float = 11.5
    EJ2: float = 20.0
    C1: float = 77.5
    C2: float = 69.2
    EJC1: float = 0.40
    EJC2: float = 0.40
    CC1: float = 0.78
    CC2: float = 0.78

    def __post_init__(self) -> None:
        _require_positive(EJ1=self.EJ1, EJ2=self.EJ2, C1=self.C1, C2=self.C2)
        _require_nonnegative(
            EJC1=self.EJC1, EJC2=self.EJC2, CC1=self.CC1, CC2=self.CC2
        )

    @property
    def CC(self) -> float:
        return self.CC1 + self.CC2

    @property
    def C_sq(self) -> float:
        """C^2 = C1 C2 + CC (C1 + C2)."""
        return self.C1 * self.C2 + self.CC * (self.C1 + self.C2)

    @property
    def d_C(self) -> float:
        """Junction capacitance asymmetry (CC1 - CC2) / CC, zero when CC = 0."""
        if self.CC == 0:
            return 0.0
        return (self.CC1 - self.CC2) / self.CC

    @property
    def sum_EJC(self) -> float:
        return self.EJC1 + self.EJC2

    @property
    def delta_EJC(self) -> float:
        return self.EJC1 - self.EJC2

    @classmethod
    def table_one(cls) -> "CircuitParams":
        return cls()

    def with_asymmetry(
        self, asymmetry: float, sum_EJC: float | None = None, CC: float | None = None
    ) -> "CircuitParams":
        """Return a copy whose coupler junctions carry a fractional asymmetry.

        The Josephson-energy asymmetry and the capacitance asymmetry are tied
        equal, as for junctions whose energy and capacitance both scale with
        area. ``asymmetry`` = 1 removes the second junction entirely.
        """
        if not -1.0 <= asymmetry <= 1.0:
            raise ParameterError(f"asymmetry must lie in [-1, 1], got {asymmetry}")
        s = self.sum_EJC if sum_EJC is None else sum_EJC
        c = self.CC if CC is None else CC
        return replace(
            self,
            EJC1=0.5 * s * (1 + asymmetry),
            EJC2=0.5 * s * (1 - asymmetry),
            CC1=0.5 * c * (1 + asymmetry),
            CC2=0.5 * c * (1 - asymmetry),
        )


@dataclass(frozen=True)
class FluxBias:
    """External fluxes through the inner (phi_e1) and outer (phi_e2) loops, in flux quanta."""

    phi_e1: float = 0.0
    phi_e2: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.phi_e1) and np.isfinite(self.phi_e2)):
            raise ParameterError("flux biases must be finite")

    @classmethod
    def operating(cls, phi_e1: float) -> "FluxBias":
        """Bias on the operating line phi_e1 + 2 phi_e2 = 0."""
        return cls(phi_e1, -0.5 * phi_e1)


@dataclass(frozen=True)
class GradiometricBias:
    """Inner and outer loop fluxes of the coupler with inductive ground connections."""

    phi_ei: float = 0.0
    phi_eo: float = 0.0
    phi_eo_prime: float = 0.0
    EL: float = 1000.0
    EL_prime: float = 1000.0

    def __post_init__(self) -> None:
        _require_positive(EL=self.EL, EL_prime=self.EL_prime)

    @property
    def delta_phi_eo(self) -> float:
        return self.phi_eo - self.phi_eo_prime


@dataclass(frozen=True)
class Branch:
    """A Josephson branch contributing -EJ cos(sum_i signs_i phi_i + flux_offset)."""

    EJ: float
    signs: tuple[int, ...]
    flux_offset: float


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Mode-level description consumed by :mod:`squidcoupler.operators`."""

    EC: np.ndarray
    g: np.ndarray
    branches: tuple[Branch, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        EC = np.asarray(self.EC, dtype=float)
        g = np.asarray(self.g, dtype=float)
        n = EC.size
        if g.shape != (n, n):
            raise ParameterError(f"g must be {n}x{n}, got {g.shape}")
        if not np.allclose(g, g.T, rtol=0, atol=1e-14):
            raise ParameterError("charge-coupling matrix must be symmetric")
        if np.any(np.diag(g) != 0):
            raise ParameterError("charge-coupling matrix must have zero diagonal")
        covered = np.zeros(n, dtype=bool)
        branches = []
        for b in self.branches:
            if len(b.signs) != n or any(s not in (-1, 0, 1) for s in b.signs):
                raise ParameterError(f"invalid branch signs {b.signs}")
            covered |= np.array(b.signs) != 0
            branches.append(replace(b, flux_offset=_reduce_angle(b.flux_offset)))
        if not covered.all():
            raise ParameterError("every mode must appear in at least one branch")
        object.__setattr__(self, "EC", EC)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "branches", tuple(branches))

    @property
    def n_modes(self) -> int:
        return self.EC.size


class ChargingEnergies(NamedTuple):
    EC1: float
    EC2: float
    g: float
    d_C: float


class FluxDrops(NamedTuple):
    phi_top: float
    phi_bot: float
    phi_J1: float
    phi_J2: float


def derive_energies(params: CircuitParams) -> ChargingEnergies:
    """Charging energies and charge coupling of the two-transmon circuit, in GHz."""
    c2 = params.C_sq
    if c2 <= 0:
        raise ParameterError("C^2 must be positive")
    EC1 = E2_OVER_H_GHZ_FF * (params.C2 + params.CC) / (2 * c2)
    EC2 = E2_OVER_H_GHZ_FF * (params.C1 + params.CC) / (2 * c2)
    g = 4 * E2_OVER_H_GHZ_FF * params.CC / c2
    return ChargingEnergies(EC1, EC2, g, params.d_C)


def flux_drops(params: CircuitParams, bias: FluxBias) -> FluxDrops:
    """Irrotational allocation of the external fluxes over the four junctions.

    Returns branch flux drops in radians. ``phi_top - phi_bot`` equals
    2 pi phi_e1 and ``phi_J1 + phi_J2 + phi_bot`` equals 2 pi phi_e2.
    """
    return FluxDrops(*(float(x) for x in flux_drops_array(params, bias.phi_e1, bias.phi_e2)))


def flux_drops_array(params: CircuitParams, phi_e1, phi_e2) -> FluxDrops:
    """Vectorized :func:`flux_drops` for arrays of inner and outer fluxes."""
    phi_e1 = np.asarray(phi_e1, dtype=float)
    phi_e2 = np.asarray(phi_e2, dtype=float)
    c2 = params.C_sq
    dc = params.d_C
    x = (dc + 1) * phi_e1 + 2 * phi_e2
    ratio = params.C1 * params.C2 / c2
    J1 = params.C2 * params.CC / (2 * c2) * x
    J2 = params.C1 * params.CC / (2 * c2) * x
    bot = (ratio - 1) * (dc + 1) / 2 * phi_e1 + ratio * phi_e2
    top = bot + phi_e1
    two_pi = 2 * math.pi
    return FluxDrops(two_pi * top, two_pi * bot, two_pi * J1, two_pi * J2)


def branch_offsets(params: CircuitParams, phi_e1, phi_e2) -> np.ndarray:
    """Offsets of the four two-qubit branches, in the order used by :func:`compile_two_qubit`.

    Shape (4, *broadcast shape of the inputs), radians, not reduced.
    """
    d = flux_drops_array(params, phi_e1, phi_e2)
    return np.stack([d.phi_J1, -d.phi_J2, d.phi_top, d.phi_bot])


def gradiometric_to_bias(grad: GradiometricBias) -> FluxBias:
    """Map gradiometric loop fluxes onto the single-sided (phi_e1, phi_e2) pair."""
    total = grad.phi_ei + grad.phi_eo + grad.phi_eo_prime
    frac = grad.EL_prime / (grad.EL + grad.EL_prime)
    return FluxBias(grad.phi_ei, grad.phi_eo - frac * total)


TWO_QUBIT_SIGNS = ((1, 0), (0, 1), (-1, 1), (-1, 1))


def compile_two_qubit(params: CircuitParams, bias: FluxBias) -> HamiltonianSpec:
    energies = derive_energies(params)
    offsets = branch_offsets(params, bias.phi_e1, bias.phi_e2)
    g = np.array([[0.0, energies.g], [energies.g, 0.0]])
    branches = tuple(
        Branch(ej, signs, float(th))
        for ej, signs, th in zip(
            (params.EJ1, params.EJ2, params.EJC1, params.EJC2), TWO_QUBIT_SIGNS, offsets
        )
    )
    return HamiltonianSpec(
        np.array([energies.EC1, energies.EC2]), g, branches, labels=("q1", "q2")
    )


def energies_from_capacitance(cmat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Charging energies and pairwise charge couplings from a Maxwell capacitance matrix (fF).

    Uses H = 2 e^2 n^T C^{-1} n, so EC_i = e^2 (C^-1)_ii / 2 and
    g_ij = 4 e^2 (C^-1)_ij.
    """
    cmat = np.asarray(cmat, dtype=float)
    cond = np.linalg.cond(cmat)
    if not np.isfinite(cond) or cond > CAPACITANCE_COND_LIMIT:
        raise ParameterError(f"capacitance matrix is singular (cond={cond:.3g})")
    inv = np.linalg.inv(cmat)
    inv = 0.5 * (inv + inv.T)
    EC = 0.5 * E2_OVER_H_GHZ_FF * np.diag(inv)
    g = 4 * E2_OVER_H_GHZ_FF * inv
    np.fill_diagonal(g, 0.0)
    return EC, g


@dataclass(frozen=True)
class ChainParams:
    """Three transmons in a line, neighbours joined by SQUID couplers.

    ``EJC12``/``CC12`` hold the (top, bottom) junction pair of the 1-2 coupler,
    likewise for 2-3.
    """

    EJ: tuple[float, float, float] = (11.5, 20.0, 10.0)
    C: tuple[float, float, float] = (77.5, 69.2, 100.0)
    EJC12: tuple[float, float] = (0.40, 0.40)
    CC12: tuple[float, float] = (0.78, 0.78)
    EJC23: tuple[float, float] = (0.40, 0.40)
    CC23: tuple[float, float] = (0.78, 0.78)
    bias12: FluxBias = FluxBias()
    bias23: FluxBias = FluxBias()

    def __post_init__(self) -> None:
        for i, (ej, c) in enumerate(zip(self.EJ, self.C), start=1):
            _require_positive(**{f"EJ{i}": ej, f"C{i}": c})
        for name in ("EJC12", "CC12", "EJC23", "CC23"):
            a, b = getattr(self, name)
            _require_nonnegative(**{f"{name}[0]": a, f"{name}[1]": b})

    def with_asymmetry(self, asymmetry: float, sum_EJC: float = 0.8, CC: float = 1.56) -> "ChainParams":
        """Both couplers with the same fractional asymmetry, capacitances tracking energies."""
        ej = (0.5 * sum_EJC * (1 + asymmetry), 0.5 * sum_EJC * (1 - asymmetry))
        cc = (0.5 * CC * (1 + asymmetry), 0.5 * CC * (1 - asymmetry))
        return replace(self, EJC12=ej, CC12=cc, EJC23=ej, CC23=cc)

    def pair(self, which: str) -> CircuitParams:
        """The isolated two-transmon circuit formed by one coupler."""
        if which == "12":
            i, j, ej, cc = 0, 1, self.EJC12, self.CC12
        elif which == "23":
            i, j, ej, cc = 1, 2, self.EJC23, self.CC23
        else:
            raise ValueError(f"unknown coupler {which!r}")
        return CircuitParams(
            self.EJ[i], self.EJ[j], self.C[i], self.C[j], ej[0], ej[1], cc[0], cc[1]
        )


def _coupler_offsets(bias: FluxBias) -> tuple[float, float]:
    # Small-CC limit: top carries phi_e1 + phi_e2, bottom carries phi_e2.
    two_pi = 2 * math.pi
    return two_pi * (bias.phi_e1 + bias.phi_e2), two_pi * bias.phi_e2


def compile_chain(chain: ChainParams) -> HamiltonianSpec:
    c1, c2, c3 = chain.C
    k12 = sum(chain.CC12)
    k23 = sum(chain.CC23)
    cmat = np.array(
        [
            [c1 + k12, -k12, 0.0],
            [-k12, c2 + k12 + k23, -k23],
            [0.0, -k23, c3 + k23],
        ]
    )
    EC, g = energies_from_capacitance(cmat)
    top12, bot12 = _coupler_offsets(chain.bias12)
    top23, bot23 = _coupler_offsets(chain.bias23)
    branches = (
        Branch(chain.EJ[0], (1, 0, 0), 0.0),
        Branch(chain.EJ[1], (0, 1, 0), 0.0),
        Branch(chain.EJ[2], (0, 0, 1), 0.0),
        Branch(chain.EJC12[0], (-1, 1, 0), top12),
        Branch(chain.EJC12[1], (-1, 1, 0), bot12),
        Branch(chain.EJC23[0], (0, -1, 1), top23),
        Branch(chain.EJC23[1], (0, -1, 1), bot23),
    )
    return HamiltonianSpec(EC, g, branches, labels=("q1", "q2", "q3"))


@dataclass(frozen=True)
class SpectatorParams:
    """A coupled pair plus a spectator transmon hanging off transmon 2 via C_para (aF)."""

    circuit: CircuitParams = CircuitParams()
    EJS: float = 20.0
    CS: float = 69.2
    C_para: float = 30.0

    def __post_init__(self) -> None:
        _require_positive(EJS=self.EJS, CS=self.CS)
        _require_nonnegative(C_para=self.C_para)


def spectator_capacitance_matrix(sp: SpectatorParams) -> np.ndarray:
    p = sp.circuit
    cp = sp.C_para * 1e-3  # aF -> fF
    cc = p.CC
    return np.array(
        [
            [p.C1 + cc, -cc, 0.0],
            [-cc, p.C2 + cc + cp, -cp],
            [0.0, -cp, sp.CS + cp],
        ]
    )


def compile_spectator(sp: SpectatorParams, bias: FluxBias) -> HamiltonianSpec:
    EC, g = energies_from_capacitance(spectator_capacitance_matrix(sp))
    p = sp.circuit
    drops = flux_drops(p, bias)
    branches = (
        Branch(p.EJ1, (1, 0, 0), drops.phi_J1),
        Branch(p.EJ2, (0, 1, 0), -drops.phi_J2),
        Branch(sp.EJS, (0, 0, 1), 0.0),
        Branch(p.EJC1, (-1, 1, 0), drops.phi_top),
        Branch(p.EJC2, (-1, 1, 0), drops.phi_bot),
    )
    return HamiltonianSpec(EC, g, branches, labels=("q1", "q2", "S"))


def single_transmon_spec(EJ: float, EC: float, offset: float = 0.0) -> HamiltonianSpec:
    return HamiltonianSpec(np.array([EC]), np.zeros((1, 1)), (Branch(EJ, (1,), offset),))


def bias_sequence(values: Sequence[float]) -> list[FluxBias]:
    """Operating-line biases for a sequence of inner-loop fluxes."""
    return [FluxBias.operating(v) for v in values]
