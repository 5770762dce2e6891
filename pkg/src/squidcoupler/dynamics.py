"""Time-domain propagation of the coupled circuit under a flux waveform.

Propagation happens in the basis of the lowest eigenstates of H at the idle
bias. Each step uses the exact exponential of the projected Hamiltonian at the
step midpoint. Relaxation is added through a Strang splitting of the master
equation around the same unitary steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import minimize

from .circuit import CircuitParams, FluxBias, branch_offsets, compile_two_qubit
from .operators import DEFAULT_NCUT, bare_mode_basis, embed, hamiltonian_terms
from .pulse import Waveform
from .spectrum import Spectrum, bare_basis, diagonalize, label_dressed

DEFAULT_DT_PROP = 0.002  # ns
N_LEVELS_UNITARY = 40
N_LEVELS_LINDBLAD = 28
CHUNK = 1024
CHOI_CLIP = -1e-10
VZ_GRID = 16
COMPUTATIONAL = ((0, 0), (0, 1), (1, 0), (1, 1))
CZ_DIAG = np.array([1, 1, 1, -1], dtype=complex)
# Pauli-Z eigenvalues of qubits 1 and 2 on |00>, |01>, |10>, |11>.
Z_SIGNS = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)


class IntegrationError(RuntimeError):
    """Numerical integration produced an unphysical result."""


@dataclass(frozen=True, eq=False)
class GateResult:
    projected_propagator: np.ndarray
    phases: tuple[float, float]
    coherent_error: float
    leakage: float
    T_G: float | None = None
    beta: float | None = None

    def to_dict(self) -> dict:
        return {
            "T_G": self.T_G,
            "beta": self.beta,
            "coherent_error": self.coherent_error,
            "leakage": self.leakage,
            "phases": list(self.phases),
        }


@dataclass(frozen=True, eq=False)
class NoisyGateResult:
    kraus_set: list[np.ndarray]
    infidelity: float
    phases: tuple[float, float]
    choi_min_eigenvalue: float
    T1: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "infidelity": self.infidelity,
            "phases": list(self.phases),
            "n_kraus": len(self.kraus_set),
            "T1_ns": list(self.T1),
        }


class Propagator:
    """Projected Hamiltonian pieces of the two-qubit circuit in the idle eigenbasis.

    H(phi_e1, phi_e2) = S - sum_b EJ_b / 2 (e^{i theta_b} B_b + h.c.), with
    the branch offsets theta_b linear in the two fluxes.
    """

    def __init__(
        self,
        params: CircuitParams,
        phi_idle: float,
        n_levels: int = N_LEVELS_UNITARY,
        ncut: int = DEFAULT_NCUT,
    ):
        self.params = params
        self.n_levels = n_levels
        spec = compile_two_qubit(params, FluxBias.operating(phi_idle))
        static, ops = hamiltonian_terms(spec, ncut)
        H0 = _assemble(static, ops, spec)
        sp = diagonalize(H0, n_levels)
        self.spectrum: Spectrum = label_dressed(sp, bare_basis(spec, ncut))
        V = sp.eigenvectors
        self.V = V
        self.static = V.conj().T @ static @ V
        self.ops = np.stack([V.conj().T @ op @ V for op in ops])
        self.EJ = np.array([params.EJ1, params.EJ2, params.EJC1, params.EJC2])
        self.ncut = ncut
        self._spec = spec

    @property
    def computational_indices(self) -> list[int]:
        return [self.spectrum.index(s) for s in COMPUTATIONAL]

    def hamiltonians(self, phi_e1: np.ndarray, phi_e2: np.ndarray) -> np.ndarray:
        """Projected H for arrays of biases, shape (len, n, n)."""
        theta = branch_offsets(self.params, phi_e1, phi_e2)  # (4, K)
        ph = np.exp(1j * theta) * (-0.5 * self.EJ)[:, None]
        n = self.n_levels
        A = (ph.T @ self.ops.reshape(len(self.ops), n * n)).reshape(-1, n, n)
        return self.static[None] + A + A.conj().transpose(0, 2, 1)

    def step_unitaries(self, phi_e1: np.ndarray, phi_e2: np.ndarray, dt: float) -> np.ndarray:
        H = self.hamiltonians(phi_e1, phi_e2)
        w, v = np.linalg.eigh(H)
        return (v * np.exp(-2j * math.pi * dt * w)[:, None, :]) @ v.conj().transpose(0, 2, 1)

    def jump_operators(self) -> list[np.ndarray]:
        """Bare annihilation operators of each transmon projected on the retained basis."""
        spec = self._spec
        dims = [2 * self.ncut + 1] * 2
        out = []
        for mode in range(2):
            _, vecs = bare_mode_basis(spec, mode, self.ncut)
            k = vecs.shape[1]
            lad = np.diag(np.sqrt(np.arange(1, k)), 1)
            a = vecs @ lad @ vecs.conj().T
            out.append(self.V.conj().T @ embed(a, mode, dims) @ self.V)
        return out


def _assemble(static: np.ndarray, ops: Sequence[np.ndarray], spec) -> np.ndarray:
    H = static.copy()
    for b, op in zip(spec.branches, ops):
        p = np.exp(1j * b.flux_offset) * op
        H -= 0.5 * b.EJ * (p + p.conj().T)
    return 0.5 * (H + H.conj().T)


@dataclass(frozen=True)
class FluxOffsets:
    """Static offsets added to the inner flux and the differential outer flux (Phi_0)."""

    inner: float = 0.0
    outer: float = 0.0


def bias_channels(wf: Waveform, t: np.ndarray, offsets: FluxOffsets = FluxOffsets()):
    """Inner and outer fluxes at times ``t`` for a gradiometric coupler with equal inductors."""
    phi_i = wf.at(t) + offsets.inner
    phi_e2 = 0.5 * (offsets.outer - phi_i)
    return phi_i, phi_e2


def _step_grid(duration: float, dt_prop: float) -> tuple[int, float]:
    n = int(math.ceil(duration / dt_prop - 1e-9))
    return n, (duration / n if n else 0.0)


def iter_step_unitaries(
    prop: Propagator,
    wf: Waveform,
    dt_prop: float = DEFAULT_DT_PROP,
    offsets: FluxOffsets = FluxOffsets(),
    chunk: int = CHUNK,
) -> Iterator[np.ndarray]:
    """Yield chunks of midpoint step unitaries in time order."""
    n, dt = _step_grid(wf.duration, dt_prop)
    for start in range(0, n, chunk):
        k = np.arange(start, min(start + chunk, n))
        phi1, phi2 = bias_channels(wf, (k + 0.5) * dt, offsets)
        yield prop.step_unitaries(phi1, phi2, dt)


def propagate(
    prop: Propagator,
    wf: Waveform,
    dt_prop: float = DEFAULT_DT_PROP,
    offsets: FluxOffsets = FluxOffsets(),
) -> np.ndarray:
    """Time-ordered product of step unitaries in the retained idle eigenbasis."""
    U = np.eye(prop.n_levels, dtype=complex)
    for block in iter_step_unitaries(prop, wf, dt_prop, offsets):
        for u in block:
            U = u @ U
    return U


def propagate_unitary(
    params: CircuitParams,
    wf: Waveform,
    n_levels: int = N_LEVELS_UNITARY,
    dt_prop: float = DEFAULT_DT_PROP,
    ncut: int = DEFAULT_NCUT,
    offsets: FluxOffsets = FluxOffsets(),
) -> tuple[np.ndarray, Propagator]:
    """Full truncated propagator, with the basis taken at the waveform's first sample."""
    prop = Propagator(params, float(wf.samples[0]), n_levels, ncut)
    return propagate(prop, wf, dt_prop, offsets), prop


def project(U: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    idx = list(indices)
    return U[np.ix_(idx, idx)]


def entangling_phase(U_proj: np.ndarray) -> float:
    """arg U11 - arg U10 - arg U01 + arg U00 of a projected propagator."""
    d = np.diag(U_proj)
    return float(np.angle(d[3]) - np.angle(d[2]) - np.angle(d[1]) + np.angle(d[0]))


def entangling_phase_of(params: CircuitParams, wf: Waveform, **kwargs) -> float:
    U, prop = propagate_unitary(params, wf, **kwargs)
    return entangling_phase(project(U, prop.computational_indices))


def local_z(phi1: float, phi2: float) -> np.ndarray:
    """Diagonal of exp(-i phi1 Z1) exp(-i phi2 Z2) on the computational basis."""
    return np.exp(-1j * (Z_SIGNS @ np.array([phi1, phi2])))


class _PhaseObjective:
    """|sum_d u_d e^{-i s_d . phi}|^2 summed over a set of vectors u (rows of ``u``)."""

    def __init__(self, u: np.ndarray):
        u = np.atleast_2d(u)
        self.Q = np.einsum("kd,ke->de", u, u.conj())
        self.D = Z_SIGNS[:, None, :] - Z_SIGNS[None, :, :]  # (4, 4, 2)

    def _terms(self, phi):
        return self.Q * np.exp(-1j * (self.D @ phi))

    def value(self, phi) -> float:
        return float(np.real(self._terms(phi).sum()))

    def grad(self, phi) -> np.ndarray:
        t = self._terms(phi)
        return np.real(np.einsum("de,dea->a", -1j * t, self.D))

    def hess(self, phi) -> np.ndarray:
        t = self._terms(phi)
        return np.real(-np.einsum("de,dea,deb->ab", t, self.D, self.D))


def _start_phases(u: np.ndarray) -> np.ndarray:
    th = np.angle(np.atleast_2d(u)[0])
    return np.array([0.5 * (th[0] - th[2]), 0.5 * (th[0] - th[1])])


def _grid_start(obj: _PhaseObjective, n: int = VZ_GRID) -> np.ndarray:
    # the objective has period pi in each phase
    g = np.arange(n) * math.pi / n
    P1, P2 = np.meshgrid(g, g, indexing="ij")
    phi = np.stack([P1.ravel(), P2.ravel()], axis=1)  # (m, 2)
    arg = np.einsum("dea,ma->mde", obj.D, phi)
    vals = np.real(np.einsum("de,mde->m", obj.Q, np.exp(-1j * arg)))
    return phi[int(np.argmax(vals))]


def _maximize(u: np.ndarray, phi0: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Local phases maximizing the objective.

    Starts from the diagonal phase extraction and from the best point of a
    coarse grid, since the extraction can land on a stationary point that is
    not the maximum (e.g. for the identity).
    """
    obj = _PhaseObjective(u)
    starts = [_start_phases(u) if phi0 is None else phi0, _grid_start(obj)]
    best = None
    for s in starts:
        res = minimize(
            lambda p: -obj.value(p),
            s,
            jac=lambda p: -obj.grad(p),
            hess=lambda p: -obj.hess(p),
            method="trust-exact",
            options={"gtol": 1e-12},
        )
        val = obj.value(res.x)
        if best is None or val > best[1] + 1e-15:
            best = (res.x, val)
    return best


def average_gate_fidelity(U_proj: np.ndarray, phases: tuple[float, float] = (0.0, 0.0)) -> float:
    """(Tr U^dag U + |Tr(CZ^dag U R)|^2) / 20 with local Z phases R."""
    r = local_z(*phases)
    tr = np.sum(CZ_DIAG.conj() * np.diag(U_proj) * r)
    return float((np.real(np.trace(U_proj.conj().T @ U_proj)) + abs(tr) ** 2) / 20)


def virtual_z_optimize(U_proj: np.ndarray) -> tuple[float, float, float]:
    """Local Z phases maximizing the CZ fidelity; returns (phi1, phi2, error)."""
    u = CZ_DIAG.conj() * np.diag(U_proj)
    phi, _ = _maximize(u)
    err = 1.0 - average_gate_fidelity(U_proj, tuple(phi))
    return float(phi[0]), float(phi[1]), float(min(max(err, 0.0), 1.0))


def coherent_error(
    U_full: np.ndarray,
    indices: Sequence[int],
    phases: tuple[float, float] | None = None,
    T_G: float | None = None,
    beta: float | None = None,
) -> GateResult:
    """CZ coherent error of the projected propagator after virtual-Z correction.

    With ``phases`` given the local Z correction is frozen instead of optimized.
    """
    Up = project(U_full, indices)
    if phases is None:
        p1, p2, err = virtual_z_optimize(Up)
        phases = (p1, p2)
    else:
        err = min(max(1.0 - average_gate_fidelity(Up, phases), 0.0), 1.0)
    leak = 1.0 - float(np.real(np.trace(Up.conj().T @ Up))) / 4
    return GateResult(Up, tuple(phases), err, min(max(leak, 0.0), 1.0), T_G, beta)


def simulate_gate(
    params: CircuitParams,
    wf: Waveform,
    n_levels: int = N_LEVELS_UNITARY,
    dt_prop: float = DEFAULT_DT_PROP,
    ncut: int = DEFAULT_NCUT,
    beta: float | None = None,
) -> GateResult:
    U, prop = propagate_unitary(params, wf, n_levels, dt_prop, ncut)
    return coherent_error(U, prop.computational_indices, T_G=wf.duration, beta=beta)


# -- open-system propagation -------------------------------------------------


def _dissipator(rho: np.ndarray, jumps: Sequence[np.ndarray], rates: Sequence[float]) -> np.ndarray:
    out = np.zeros_like(rho)
    for L, g in zip(jumps, rates):
        LdL = L.conj().T @ L
        out += g * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def _dissipate(rho, jumps, rates, h):
    # second-order Taylor step of exp(h D)
    d1 = _dissipator(rho, jumps, rates)
    d2 = _dissipator(d1, jumps, rates)
    return rho + h * d1 + 0.5 * h * h * d2


def evolve_density_matrices(
    prop: Propagator,
    wf: Waveform,
    rho0: np.ndarray,
    T1: Sequence[float],
    dt_prop: float = DEFAULT_DT_PROP,
    offsets: FluxOffsets = FluxOffsets(),
) -> np.ndarray:
    """Evolve a stack of operators (k, n, n) under the master equation with T1 decay.

    Strang splitting: half a dissipative step, the exact unitary step, half a
    dissipative step. T1 values are in ns, one per transmon.
    """
    jumps = prop.jump_operators()
    rates = [0.0 if math.isinf(t) else 1.0 / t for t in T1]
    rho = np.array(rho0, dtype=complex)
    _, dt = _step_grid(wf.duration, dt_prop)
    dissipative = any(r > 0 for r in rates)
    for block in iter_step_unitaries(prop, wf, dt_prop, offsets):
        for u in block:
            if dissipative:
                rho = _dissipate(rho, jumps, rates, 0.5 * dt)
            rho = u @ rho @ u.conj().T
            if dissipative:
                rho = _dissipate(rho, jumps, rates, 0.5 * dt)
    return rho


def process_choi(
    prop: Propagator,
    wf: Waveform,
    T1: Sequence[float],
    dt_prop: float = DEFAULT_DT_PROP,
) -> np.ndarray:
    """Choi matrix C[(i,a),(j,b)] = Lambda(|i><j|)[a,b] restricted to the computational block."""
    idx = prop.computational_indices
    n = prop.n_levels
    rho0 = np.zeros((16, n, n), dtype=complex)
    for i in range(4):
        for j in range(4):
            rho0[4 * i + j, idx[i], idx[j]] = 1.0
    out = evolve_density_matrices(prop, wf, rho0, T1, dt_prop)
    choi = np.zeros((16, 16), dtype=complex)
    for i in range(4):
        for j in range(4):
            block = out[4 * i + j][np.ix_(idx, idx)]
            choi[4 * i : 4 * i + 4, 4 * j : 4 * j + 4] = block
    # rows/cols ordered (i, a); reorder so that index = 4 * i + a
    return 0.5 * (choi + choi.conj().T)


def kraus_from_choi(choi: np.ndarray, clip: float = CHOI_CLIP) -> tuple[list[np.ndarray], float]:
    """Kraus operators K with Lambda(rho) = sum K rho K^dag, from a 16x16 Choi matrix."""
    w, v = np.linalg.eigh(choi)
    wmin = float(w.min())
    if wmin < clip:
        raise IntegrationError(f"Choi matrix has eigenvalue {wmin:.3g} below {clip}")
    kraus = []
    for lam, vec in zip(w, v.T):
        if lam <= 0:
            continue
        kraus.append(math.sqrt(lam) * vec.reshape(4, 4).T)
    return kraus, wmin


def kraus_infidelity(kraus: Sequence[np.ndarray], phases: tuple[float, float] | None = None):
    """1 - F for a Kraus set against CZ, optimizing local Z phases unless given."""
    u = np.array([CZ_DIAG.conj() * np.diag(K) for K in kraus])
    if phases is None:
        phi, best = _maximize(u)
    else:
        phi = np.array(phases)
        best = _PhaseObjective(u).value(phi)
    tr = sum(float(np.real(np.trace(K.conj().T @ K))) for K in kraus)
    return 1.0 - (tr + best) / 20, (float(phi[0]), float(phi[1]))


def propagate_lindblad(
    params: CircuitParams,
    wf: Waveform,
    T1_list: Sequence[float],
    n_levels: int = N_LEVELS_LINDBLAD,
    dt_prop: float = DEFAULT_DT_PROP,
    ncut: int = DEFAULT_NCUT,
    prop: Propagator | None = None,
) -> NoisyGateResult:
    """CZ infidelity under T1 relaxation of both transmons (T1 in ns)."""
    if any(not t > 0 for t in T1_list):
        raise ValueError("T1 values must be positive")
    prop = prop or Propagator(params, float(wf.samples[0]), n_levels, ncut)
    choi = process_choi(prop, wf, T1_list, dt_prop)
    kraus, wmin = kraus_from_choi(choi)
    infid, phases = kraus_infidelity(kraus)
    return NoisyGateResult(kraus, float(infid), phases, wmin, tuple(T1_list))


@dataclass(frozen=True)
class T1Fit:
    a: float
    b: float
    T1: tuple[float, ...]
    infidelity: tuple[float, ...]
    residuals: tuple[float, ...] = field(default=())


def linear_t1_fit(T_G: float, T1_grid: Sequence[float], infidelity: Sequence[float]) -> T1Fit:
    """Least-squares fit 1 - F = a T_G / T1 + b."""
    T1 = np.asarray(T1_grid, dtype=float)
    y = np.asarray(infidelity, dtype=float)
    if T1.size < 2 or np.ptp(T1) == 0:
        raise ValueError("T1 grid must contain at least two distinct values")
    x = T_G / T1
    A = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (a * x + b)
    return T1Fit(float(a), float(b), tuple(T1), tuple(y), tuple(res))


def t1_sweep_fit(
    params: CircuitParams,
    wf: Waveform,
    T1_grid: Sequence[float],
    n_levels: int = N_LEVELS_LINDBLAD,
    dt_prop: float = DEFAULT_DT_PROP,
    map_fn=map,
) -> T1Fit:
    """Infidelity for equal T1 on both qubits across ``T1_grid`` (ns), with a linear fit."""
    T1_grid = list(T1_grid)
    if max(T1_grid) < 10 * min(T1_grid):
        raise ValueError("T1 grid must span at least one decade")
    prop = Propagator(params, float(wf.samples[0]), n_levels)
    vals = list(
        map_fn(lambda t: propagate_lindblad(params, wf, (t, t), dt_prop=dt_prop, prop=prop).infidelity, T1_grid)
    )
    return linear_t1_fit(wf.duration, T1_grid, vals)


def offset_error_map(
    params: CircuitParams,
    wf: Waveform,
    offsets_inner: Sequence[float],
    offsets_outer: Sequence[float],
    n_levels: int = N_LEVELS_UNITARY,
    dt_prop: float = DEFAULT_DT_PROP,
    map_fn=map,
) -> np.ndarray:
    """Coherent error with static flux offsets, local phases frozen at zero offset.

    Returns an array of shape (len(offsets_inner), len(offsets_outer)).
    """
    prop = Propagator(params, float(wf.samples[0]), n_levels)
    idx = prop.computational_indices
    nominal = coherent_error(propagate(prop, wf, dt_prop), idx)

    def cell(pair):
        di, do = pair
        if di == 0 and do == 0:
            return nominal.coherent_error
        U = propagate(prop, wf, dt_prop, FluxOffsets(di, do))
        return coherent_error(U, idx, phases=nominal.phases).coherent_error

    cells = [(di, do) for di in offsets_inner for do in offsets_outer]
    vals = list(map_fn(cell, cells))
    return np.array(vals).reshape(len(offsets_inner), len(offsets_outer))
