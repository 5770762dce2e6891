"""Diagonalization, dressed-state labeling, ZZ rates, idle points and flux sweeps."""

from __future__ import annotations

import csv
import itertools
import math
from functools import reduce
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import brentq, linear_sum_assignment, minimize_scalar

from .circuit import (
    ChainParams,
    CircuitParams,
    FluxBias,
    HamiltonianSpec,
    SpectatorParams,
    compile_chain,
    compile_spectator,
    compile_two_qubit,
    derive_energies,
    energies_from_capacitance,
    single_transmon_spec,
    spectator_capacitance_matrix,
)
from .operators import (
    DEFAULT_NCUT,
    assemble_hamiltonian,
    bare_mode_basis,
    local_charge_hamiltonian,
)

N_LEVELS_TWO_MODE = 40
N_LEVELS_THREE_MODE = 60
CHAIN_BARE_LEVELS = 7
FLUX_XTOL = 1e-9
ZETA_TOL = 1e-7
MIN_LABEL_OVERLAP = 0.5
DEGENERACY_TOL = 1e-6


class PhysicsError(RuntimeError):
    """Base class for failures with a physical meaning (no idle point, bad labels)."""


class LabelingError(PhysicsError):
    pass


class NoIdlePoint(PhysicsError):
    pass


class EigenSolverError(RuntimeError):
    pass


@dataclass(eq=False)
class Spectrum:
    """Eigenpairs of a Hamiltonian, optionally labeled by bare product states.

    ``labels`` maps a bare occupation tuple to the index of the dressed
    eigenstate it was assigned to; ``overlaps`` stores |<bare|dressed>|^2 for
    each labeled pair.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: dict[tuple[int, ...], int] = field(default_factory=dict)
    overlaps: dict[tuple[int, ...], float] = field(default_factory=dict)

    def index(self, label: Sequence[int]) -> int:
        try:
            return self.labels[tuple(label)]
        except KeyError:
            raise LabelingError(f"state {tuple(label)} is not labeled") from None

    def energy(self, label: Sequence[int]) -> float:
        return float(self.eigenvalues[self.index(label)])

    def frequency(self, label: Sequence[int]) -> float:
        """Transition frequency from the dressed ground state, in GHz."""
        ground = (0,) * len(tuple(label))
        return self.energy(label) - self.energy(ground)


@dataclass(frozen=True, eq=False)
class BareBasis:
    """Per-mode bare eigenbases expressed in the local basis of the Hamiltonian.

    ``vectors[i]`` has shape (local dim, n bare levels); ``energies[i]`` holds
    the matching bare eigenvalues.
    """

    energies: tuple[np.ndarray, ...]
    vectors: tuple[np.ndarray, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(v.shape[0] for v in self.vectors)


def transmon_levels(EJ: float, EC: float, n: int = 6, ncut: int = DEFAULT_NCUT) -> np.ndarray:
    """Lowest ``n`` energies of 4 EC n^2 - EJ cos(phi), measured from the ground state (GHz)."""
    h = local_charge_hamiltonian(single_transmon_spec(EJ, EC), 0, ncut)
    vals = np.linalg.eigvalsh(h)[:n]
    return vals - vals[0]


class QubitFrequencies(NamedTuple):
    omega1: float
    omega2: float
    eta1: float
    eta2: float


def bare_qubit_spectrum(params: CircuitParams, ncut: int = DEFAULT_NCUT) -> QubitFrequencies:
    """0-1 frequencies and anharmonicities of the two uncoupled transmons (GHz)."""
    e = derive_energies(params)
    l1 = transmon_levels(params.EJ1, e.EC1, 3, ncut)
    l2 = transmon_levels(params.EJ2, e.EC2, 3, ncut)
    return QubitFrequencies(
        float(l1[1]), float(l2[1]), float(l1[2] - 2 * l1[1]), float(l2[2] - 2 * l2[1])
    )


def bare_basis(
    spec: HamiltonianSpec,
    ncut: int = DEFAULT_NCUT,
    bare_levels: int | Sequence[int] | None = None,
) -> BareBasis:
    """Bare eigenbases compatible with ``assemble_hamiltonian(spec, ncut, bare_levels)``."""
    energies, vectors = [], []
    for i in range(spec.n_modes):
        vals, vecs = bare_mode_basis(spec, i, ncut)
        if bare_levels is None:
            energies.append(vals)
            vectors.append(vecs)
        else:
            k = bare_levels if np.isscalar(bare_levels) else bare_levels[i]
            energies.append(vals[:k])
            vectors.append(np.eye(k, dtype=complex))
    return BareBasis(tuple(energies), tuple(vectors))


def diagonalize(H: np.ndarray, n_levels: int | None = None) -> Spectrum:
    """Lowest ``n_levels`` eigenpairs of a Hermitian matrix, ascending."""
    dim = H.shape[0]
    n = dim if n_levels is None else int(n_levels)
    if not 1 <= n <= dim:
        raise ValueError(f"n_levels must be in [1, {dim}], got {n}")
    try:
        vals, vecs = scipy.linalg.eigh(H, subset_by_index=(0, n - 1), driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(str(exc)) from exc
    return Spectrum(vals, vecs)


def bare_overlaps(vectors: np.ndarray, bare: BareBasis) -> np.ndarray:
    """Amplitudes <bare tuple|dressed k>, shaped (n_dressed, *bare_levels)."""
    dims = bare.dims
    n = vectors.shape[1]
    t = vectors.T.reshape((n, *dims))
    for i, v in enumerate(bare.vectors):
        t = np.tensordot(t, v.conj(), axes=([1], [0]))
    return t


def computational_states(n_modes: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=n_modes))


def label_dressed(spec: Spectrum, bare: BareBasis) -> Spectrum:
    """Assign each dressed state the bare product state with the largest overlap.

    Assignment is greedy by descending overlap; dressed states whose best
    match is already taken are resolved jointly with a linear assignment over
    the remaining candidates. Computational states must be labeled with
    overlap >= 0.5 and must not be degenerate with another bare state.
    """
    amps = bare_overlaps(spec.eigenvectors, bare)
    n_dressed = amps.shape[0]
    shape = amps.shape[1:]
    probs = (np.abs(amps) ** 2).reshape(n_dressed, -1)

    labels: dict[int, int] = {}
    taken: set[int] = set()
    order = np.argsort(-probs, axis=None, kind="stable")
    best = probs.argmax(axis=1)
    for flat in order:
        d, b = divmod(int(flat), probs.shape[1])
        if probs[d, b] < 1e-3:
            break
        if d in labels or b in taken:
            continue
        if b != best[d]:
            continue
        labels[d] = b
        taken.add(b)
    rest = [d for d in range(n_dressed) if d not in labels]
    if rest:
        free = np.array([b for b in range(probs.shape[1]) if b not in taken])
        rows, cols = linear_sum_assignment(-probs[np.ix_(rest, free)])
        for r, c in zip(rows, cols):
            labels[rest[r]] = int(free[c])

    out_labels: dict[tuple[int, ...], int] = {}
    out_overlaps: dict[tuple[int, ...], float] = {}
    for d, b in labels.items():
        t = tuple(int(x) for x in np.unravel_index(b, shape))
        out_labels[t] = d
        out_overlaps[t] = float(probs[d, b])

    n_modes = len(shape)
    bare_e = reduce(np.add, np.ix_(*bare.energies))
    for t in computational_states(n_modes):
        if t not in out_labels:
            raise LabelingError(f"computational state {t} not found among retained levels")
        if out_overlaps[t] < MIN_LABEL_OVERLAP:
            raise LabelingError(
                f"ambiguous label for {t}: overlap {out_overlaps[t]:.3f} < {MIN_LABEL_OVERLAP}"
            )
        close = np.abs(bare_e - bare_e[t]) < DEGENERACY_TOL
        if close.sum() > 1:
            raise LabelingError(f"bare state {t} is degenerate with another bare state")
    return replace(spec, labels=out_labels, overlaps=out_overlaps)


def solve(
    spec: HamiltonianSpec,
    ncut: int = DEFAULT_NCUT,
    n_levels: int | None = None,
    bare_levels: int | Sequence[int] | None = None,
) -> Spectrum:
    """Assemble, diagonalize and label in one call."""
    if n_levels is None:
        n_levels = N_LEVELS_TWO_MODE if spec.n_modes <= 2 else N_LEVELS_THREE_MODE
    H = assemble_hamiltonian(spec, ncut, bare_levels)
    sp = diagonalize(H, min(n_levels, H.shape[0]))
    return label_dressed(sp, bare_basis(spec, ncut, bare_levels))


def _pair_label(n_modes: int, pair: tuple[int, int], a: int, b: int) -> tuple[int, ...]:
    if len(pair) != 2 or pair[0] == pair[1] or not all(0 <= k < n_modes for k in pair):
        raise ValueError(f"invalid mode pair {pair} for {n_modes} modes")
    t = [0] * n_modes
    t[pair[0]] = a
    t[pair[1]] = b
    return tuple(t)


def zz_rate(spec: Spectrum, pair: tuple[int, int] = (0, 1)) -> float:
    """zeta = E00 - E01 - E10 + E11 for the chosen pair, others in the ground state (GHz)."""
    n = len(next(iter(spec.labels))) if spec.labels else 2
    e = {(a, b): spec.energy(_pair_label(n, pair, a, b)) for a in (0, 1) for b in (0, 1)}
    return e[0, 0] - e[0, 1] - e[1, 0] + e[1, 1]


def avg_hybridization(spec: Spectrum, pair: tuple[int, int] = (0, 1)) -> float:
    """Mean of 1 - P over the four computational states of ``pair``."""
    n = len(next(iter(spec.labels))) if spec.labels else 2
    total = 0.0
    for a in (0, 1):
        for b in (0, 1):
            t = _pair_label(n, pair, a, b)
            if t not in spec.overlaps:
                raise LabelingError(f"state {t} is not labeled")
            total += 1.0 - spec.overlaps[t]
    return total / 4.0


def two_qubit_spectrum(
    params: CircuitParams,
    phi_e1: float,
    ncut: int = DEFAULT_NCUT,
    n_levels: int = N_LEVELS_TWO_MODE,
    phi_e2: float | None = None,
) -> Spectrum:
    """Labeled spectrum on the operating line unless ``phi_e2`` is given."""
    bias = FluxBias.operating(phi_e1) if phi_e2 is None else FluxBias(phi_e1, phi_e2)
    return solve(compile_two_qubit(params, bias), ncut, n_levels)


def zeta_at(params: CircuitParams, phi_e1: float, ncut: int = DEFAULT_NCUT) -> float:
    return zz_rate(two_qubit_spectrum(params, phi_e1, ncut, n_levels=12))


def find_root(
    func: Callable[[float], float],
    bracket: tuple[float, float],
    n_scan: int = 21,
) -> float:
    """Brent root on ``bracket``; if the ends share a sign, scan for the first sign change."""
    a, b = bracket
    fa, fb = func(a), func(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if np.sign(fa) == np.sign(fb):
        grid = np.linspace(a, b, n_scan)
        vals = [fa] + [func(x) for x in grid[1:-1]] + [fb]
        for x0, x1, f0, f1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if np.sign(f0) != np.sign(f1):
                a, b = x0, x1
                break
        else:
            raise NoIdlePoint(f"no sign change of zeta on [{bracket[0]}, {bracket[1]}]")
    return brentq(func, a, b, xtol=FLUX_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_phi_off(
    params: CircuitParams,
    bracket: tuple[float, float] = (0.0, 1.0),
    ncut: int = DEFAULT_NCUT,
) -> float:
    """Inner-loop flux (operating line) at which zeta vanishes.

    The bracket is used as given when zeta changes sign across it; otherwise
    it is scanned on 21 equally spaced points and the first sign change is
    refined. No sign change raises :class:`NoIdlePoint`.
    """
    return find_root(lambda x: zeta_at(params, x, ncut), bracket)


@dataclass
class SweepTable:
    """Per-flux observables of a two-qubit sweep."""

    flux: np.ndarray
    zeta: np.ndarray
    hybridization: np.ndarray
    eigenfrequencies: np.ndarray
    errors: dict[int, str] = field(default_factory=dict)

    def excursion(self, lo: float, hi: float, labels: Sequence[int] = (1, 2)) -> np.ndarray:
        """Range (max - min) of selected eigenfrequency columns over flux in [lo, hi]."""
        mask = (self.flux >= lo - 1e-12) & (self.flux <= hi + 1e-12)
        cols = self.eigenfrequencies[mask][:, list(labels)]
        return np.nanmax(cols, axis=0) - np.nanmin(cols, axis=0)

    def to_csv(self, path) -> None:
        k = self.eigenfrequencies.shape[1]
        header = ["flux", "zeta_GHz", "hybridization"] + [f"eig_{i}" for i in range(k)]
        rows = np.column_stack([self.flux, self.zeta, self.hybridization, self.eigenfrequencies])
        write_table(path, header, rows)


def format_float(x: float) -> str:
    """Locale-free round-trip representation: 17 significant digits, nan and inf literal."""
    return format(float(x), ".17g")


def write_table(path, header: Sequence[str], rows) -> None:
    """Write a numeric table as CSV with :func:`format_float` cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_float(x) for x in row])


def sweep_flux(
    params: CircuitParams,
    grid: Iterable[float],
    n_eigs: int = 6,
    ncut: int = DEFAULT_NCUT,
    n_levels: int = N_LEVELS_TWO_MODE,
) -> SweepTable:
    """Evaluate zeta, average hybridization and the lowest eigenfrequencies on a flux grid.

    Eigenfrequencies are measured from the ground state. Points whose labeling
    fails are recorded in ``errors`` and filled with NaN.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise ValueError("flux grid must be strictly monotone")
    zeta = np.full(grid.size, np.nan)
    hyb = np.full(grid.size, np.nan)
    eig = np.full((grid.size, n_eigs), np.nan)
    errors: dict[int, str] = {}
    for i, phi in enumerate(grid):
        spec = compile_two_qubit(params, FluxBias.operating(phi))
        H = assemble_hamiltonian(spec, ncut)
        sp = diagonalize(H, n_levels)
        eig[i] = sp.eigenvalues[:n_eigs] - sp.eigenvalues[0]
        try:
            sp = label_dressed(sp, bare_basis(spec, ncut))
            zeta[i] = zz_rate(sp)
            hyb[i] = avg_hybridization(sp)
        except PhysicsError as exc:
            errors[i] = str(exc)
    return SweepTable(grid, zeta, hyb, eig, errors)


def chain_spectrum(
    chain: ChainParams,
    ncut: int = DEFAULT_NCUT,
    bare_levels: int = CHAIN_BARE_LEVELS,
    n_levels: int = N_LEVELS_THREE_MODE,
) -> Spectrum:
    return solve(compile_chain(chain), ncut, n_levels, bare_levels)


@dataclass(frozen=True)
class ChainIdle:
    phi12: float
    phi23: float
    zeta12: float
    zeta23: float
    zeta13: float
    iterations: int


def idle_chain_biases(
    chain: ChainParams,
    bracket: tuple[float, float] = (0.0, 1.0),
    max_iter: int = 20,
    ncut: int = DEFAULT_NCUT,
    bare_levels: int = CHAIN_BARE_LEVELS,
) -> ChainIdle:
    """Joint idle point of both chain couplers by alternating one-dimensional solves.

    A coupler with no junction energy is left at its bracket midpoint. The
    next-nearest-neighbour rate zeta_13 is evaluated at the joint bias.
    """

    def spectrum(p12: float, p23: float) -> Spectrum:
        c = replace(chain, bias12=FluxBias.operating(p12), bias23=FluxBias.operating(p23))
        return chain_spectrum(c, ncut, bare_levels)

    mid = 0.5 * (bracket[0] + bracket[1])
    active12 = sum(chain.EJC12) > 0
    active23 = sum(chain.EJC23) > 0
    p12 = p23 = mid
    for it in range(1, max_iter + 1):
        if active12:
            p12 = find_root(lambda x: zz_rate(spectrum(x, p23), (0, 1)), bracket)
        if active23:
            p23 = find_root(lambda x: zz_rate(spectrum(p12, x), (1, 2)), bracket)
        sp = spectrum(p12, p23)
        z12, z23 = zz_rate(sp, (0, 1)), zz_rate(sp, (1, 2))
        ok12 = not active12 or abs(z12) < ZETA_TOL
        ok23 = not active23 or abs(z23) < ZETA_TOL
        if ok12 and ok23:
            return ChainIdle(p12, p23, z12, z23, zz_rate(sp, (0, 2)), it)
    raise PhysicsError(f"chain idle search did not converge in {max_iter} iterations")


def spectator_spectrum(
    sp: SpectatorParams,
    phi_e1: float,
    ncut: int = DEFAULT_NCUT,
    bare_levels: int = CHAIN_BARE_LEVELS,
    n_levels: int = N_LEVELS_THREE_MODE,
) -> Spectrum:
    return solve(compile_spectator(sp, FluxBias.operating(phi_e1)), ncut, n_levels, bare_levels)


class SpectatorZZ(NamedTuple):
    zeta_1S: float
    zeta_2S: float
    omega_S: float


def spectator_zz(sp: SpectatorParams, phi_e1: float = 0.0, ncut: int = DEFAULT_NCUT) -> SpectatorZZ:
    """Indirect (1-S) and direct (2-S) ZZ rates from the three-mode spectrum."""
    s = spectator_spectrum(sp, phi_e1, ncut)
    return SpectatorZZ(zz_rate(s, (0, 2)), zz_rate(s, (1, 2)), s.frequency((0, 0, 1)))


def ej_for_frequency(
    omega: float,
    EC: float,
    bracket: tuple[float, float] = (1.0, 200.0),
    ncut: int = DEFAULT_NCUT,
) -> float:
    """Josephson energy giving a bare 0-1 frequency ``omega`` at charging energy ``EC``."""
    return find_root(lambda ej: transmon_levels(ej, EC, 2, ncut)[1] - omega, bracket)


def detuned_spectator(
    circuit: CircuitParams,
    detuning: float,
    C_para: float = 30.0,
    CS: float = 69.2,
    phi_e1: float = 0.0,
    ncut: int = DEFAULT_NCUT,
) -> tuple[SpectatorParams, float]:
    """Spectator whose bare frequency sits ``detuning`` GHz from dressed transmon 2.

    Returns the spectator parameters and the dressed transmon-2 frequency at
    ``phi_e1`` that the detuning is measured from.
    """
    w2 = two_qubit_spectrum(circuit, phi_e1, ncut, n_levels=12).frequency((0, 1))
    sp = SpectatorParams(circuit, C_para=C_para, CS=CS)
    EC, _ = energies_from_capacitance(spectator_capacitance_matrix(sp))
    return replace(sp, EJS=ej_for_frequency(w2 + detuning, EC[2], ncut=ncut)), w2


def min_hybridization_coupling(
    params: CircuitParams,
    cc_grid: Sequence[float],
    phi_e1: float = 0.0,
    ncut: int = DEFAULT_NCUT,
) -> float:
    """Total coupler capacitance minimizing the average hybridization at ``phi_e1``.

    The grid locates the basin; Brent's method refines it. Junction
    asymmetry of ``params`` is preserved.
    """
    asym = params.delta_EJC / params.sum_EJC if params.sum_EJC > 0 else 0.0

    def hyb(cc: float) -> float:
        p = params.with_asymmetry(asym, CC=cc)
        return avg_hybridization(two_qubit_spectrum(p, phi_e1, ncut, n_levels=12))

    grid = np.asarray(cc_grid, dtype=float)
    vals = [hyb(c) for c in grid]
    k = int(np.argmin(vals))
    if k in (0, len(grid) - 1):
        return float(grid[k])
    res = minimize_scalar(hyb, bracket=(grid[k - 1], grid[k], grid[k + 1]), tol=1e-8)
    return float(res.x)


def phi_periodicity_check(params: CircuitParams, phi: float) -> tuple[float, float]:
    """zeta at phi and at phi + 2 (one operating-line period), for diagnostics."""
    return zeta_at(params, phi), zeta_at(params, phi + 2.0)


def wrap_phase(x: float) -> float:
    """Map an angle to [0, 2 pi)."""
    return x % (2 * math.pi)
