"""Charge-basis operators and dense Hamiltonian assembly."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

from .circuit import HamiltonianSpec

DEFAULT_NCUT = 10
DEFAULT_MAX_DIM = 100_000


class DimensionError(ValueError):
    """Raised when a product space exceeds the configured size cap."""


@dataclass(frozen=True, eq=False)
class ChargeBasisOps:
    """Single-mode operators on charge states n = -ncut..ncut.

    ``exp_i_phi`` lowers the charge index by one, so [n, e^{i phi}] = -e^{i phi}.
    """

    ncut: int
    n: np.ndarray
    exp_i_phi: np.ndarray
    cos_phi: np.ndarray
    sin_phi: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * self.ncut + 1


@lru_cache(maxsize=32)
def charge_ops(ncut: int) -> ChargeBasisOps:
    if ncut < 1:
        raise ValueError(f"ncut must be >= 1, got {ncut}")
    d = 2 * ncut + 1
    n = np.diag(np.arange(-ncut, ncut + 1, dtype=float))
    e = np.eye(d, k=1)
    cos = 0.5 * (e + e.T)
    sin = (e - e.T) / 2j
    for m in (n, e, cos, sin):
        m.setflags(write=False)
    return ChargeBasisOps(ncut, n, e, cos, sin)


@dataclass(frozen=True, eq=False)
class ModeOps:
    """Operators of one mode in whatever local basis the assembly uses.

    ``local`` holds the single-mode Hamiltonian (charging energy plus any
    single-mode Josephson branches), ``n`` the charge operator and ``shift``
    the representation of e^{i phi}.
    """

    local: np.ndarray
    n: np.ndarray
    shift: np.ndarray

    @property
    def dim(self) -> int:
        return self.local.shape[0]


def _ncuts(spec: HamiltonianSpec, ncut: int | Sequence[int]) -> list[int]:
    if np.isscalar(ncut):
        return [int(ncut)] * spec.n_modes
    ncut = [int(c) for c in ncut]
    if len(ncut) != spec.n_modes:
        raise ValueError("one ncut per mode required")
    return ncut


def _power(shift: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return shift
    if s == -1:
        return shift.conj().T
    return np.eye(shift.shape[0])


def local_charge_hamiltonian(spec: HamiltonianSpec, mode: int, ncut: int) -> np.ndarray:
    """4 EC n^2 minus every branch that acts on ``mode`` alone, in the charge basis."""
    ops = charge_ops(ncut)
    h = (4 * spec.EC[mode] * (ops.n @ ops.n)).astype(complex)
    for b in spec.branches:
        nz = [i for i, s in enumerate(b.signs) if s != 0]
        if nz == [mode]:
            p = np.exp(1j * b.flux_offset) * _power(ops.exp_i_phi, b.signs[mode])
            h -= 0.5 * b.EJ * (p + p.conj().T)
    return h


def bare_mode_basis(
    spec: HamiltonianSpec, mode: int, ncut: int
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and phase-fixed eigenvectors of one mode's local Hamiltonian.

    Eigenvector phases are chosen so that <m|n|m+1> is real and non-negative,
    which makes the ladder operator built from them match the harmonic
    convention up to a global phase.
    """
    h = local_charge_hamiltonian(spec, mode, ncut)
    vals, vecs = np.linalg.eigh(h)
    n = charge_ops(ncut).n
    # Fix the overall phase of the ground state on its largest component.
    k = np.argmax(np.abs(vecs[:, 0]))
    vecs[:, 0] *= np.exp(-1j * np.angle(vecs[k, 0]))
    for m in range(vecs.shape[1] - 1):
        elem = vecs[:, m].conj() @ n @ vecs[:, m + 1]
        if abs(elem) > 1e-12:
            vecs[:, m + 1] *= np.exp(-1j * np.angle(elem))
        else:
            k = np.argmax(np.abs(vecs[:, m + 1]))
            vecs[:, m + 1] *= np.exp(-1j * np.angle(vecs[k, m + 1]))
    return vals, vecs


def mode_operators(
    spec: HamiltonianSpec,
    ncut: int | Sequence[int] = DEFAULT_NCUT,
    bare_levels: int | Sequence[int] | None = None,
) -> list[ModeOps]:
    """Per-mode operators in the charge basis, or in a truncated bare eigenbasis.

    With ``bare_levels`` the product space is spanned by the lowest bare
    eigenstates of each mode (hierarchical diagonalization); otherwise it is
    the full truncated charge space.
    """
    cuts = _ncuts(spec, ncut)
    if bare_levels is not None and np.isscalar(bare_levels):
        bare_levels = [int(bare_levels)] * spec.n_modes
    out = []
    for i, c in enumerate(cuts):
        ops = charge_ops(c)
        if bare_levels is None:
            out.append(ModeOps(local_charge_hamiltonian(spec, i, c), ops.n, ops.exp_i_phi))
        else:
            k = bare_levels[i]
            vals, vecs = bare_mode_basis(spec, i, c)
            v = vecs[:, :k]
            out.append(
                ModeOps(
                    np.diag(vals[:k]).astype(complex),
                    v.conj().T @ ops.n @ v,
                    v.conj().T @ ops.exp_i_phi @ v,
                )
            )
    return out


def embed(op: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Kronecker-embed a single-mode operator into the product space."""
    factors = [op if i == mode else np.eye(d) for i, d in enumerate(dims)]
    return reduce(np.kron, factors)


def branch_operator(signs: Sequence[int], mops: Sequence[ModeOps]) -> np.ndarray:
    """Product of e^{i s_i phi_i} over modes."""
    return reduce(np.kron, [_power(m.shift, s) for m, s in zip(mops, signs)])


def _check_dim(mops: Sequence[ModeOps], max_dim: int) -> list[int]:
    dims = [m.dim for m in mops]
    total = int(np.prod(dims))
    if total > max_dim:
        raise DimensionError(f"product dimension {total} exceeds cap {max_dim}")
    return dims


def hamiltonian_terms(
    spec: HamiltonianSpec,
    ncut: int | Sequence[int] = DEFAULT_NCUT,
    max_dim: int = DEFAULT_MAX_DIM,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split H into a flux-independent part and one operator per branch.

    H = static - sum_b EJ_b / 2 (e^{i theta_b} B_b + h.c.), with ``static``
    holding the charging and charge-coupling terms. The branch operators are
    returned in the order of ``spec.branches``.
    """
    cuts = _ncuts(spec, ncut)
    mops = [ModeOps(4 * spec.EC[i] * (charge_ops(c).n @ charge_ops(c).n), charge_ops(c).n,
                    charge_ops(c).exp_i_phi) for i, c in enumerate(cuts)]
    dims = _check_dim(mops, max_dim)
    static = _static_part(spec, mops, dims)
    return static, [branch_operator(b.signs, mops) for b in spec.branches]


def _static_part(spec: HamiltonianSpec, mops: Sequence[ModeOps], dims: Sequence[int]) -> np.ndarray:
    total = int(np.prod(dims))
    h = np.zeros((total, total), dtype=complex)
    for i, m in enumerate(mops):
        h += embed(m.local, i, dims)
    ns = [embed(m.n, i, dims) for i, m in enumerate(mops)]
    for i in range(spec.n_modes):
        for j in range(i + 1, spec.n_modes):
            if spec.g[i, j] != 0:
                h += spec.g[i, j] * (ns[i] @ ns[j])
    return h


def assemble_hamiltonian(
    spec: HamiltonianSpec,
    ncut: int | Sequence[int] = DEFAULT_NCUT,
    bare_levels: int | Sequence[int] | None = None,
    max_dim: int = DEFAULT_MAX_DIM,
) -> np.ndarray:
    """Dense Hermitian Hamiltonian of ``spec`` in GHz.

    Single-mode branches are folded into each mode's local Hamiltonian;
    multi-mode branches are built from shift-operator products.
    """
    mops = mode_operators(spec, ncut, bare_levels)
    dims = _check_dim(mops, max_dim)
    h = _static_part(spec, mops, dims)
    for b in spec.branches:
        if sum(1 for s in b.signs if s != 0) < 2 or b.EJ == 0:
            continue
        p = np.exp(1j * b.flux_offset) * branch_operator(b.signs, mops)
        h -= 0.5 * b.EJ * (p + p.conj().T)
    return 0.5 * (h + h.conj().T)
