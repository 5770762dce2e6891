"""Fast-adiabatic flux waveforms for the controlled-phase gate.

The target is shaped in mixing-angle space: a square pulse of length
beta * T_G convolved with a Kaiser window of length (1 - beta) * T_G, scaled
between the idle and on mixing angles, then mapped back to flux and low-pass
filtered.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import brentq

from .circuit import CircuitParams, FluxBias, compile_two_qubit
from .operators import DEFAULT_NCUT, hamiltonian_terms
from .spectrum import PhysicsError, bare_basis, format_float

DEFAULT_SIGMA = 0.5  # ns
DEFAULT_DT = 0.01  # ns
DEFAULT_KAISER = 6.0
DEFAULT_GRID = 401
FILTER_TRUNCATE = 5.0
PHASE_TOL = 1e-6
BETA_XTOL = 1e-10


class PulseError(PhysicsError):
    pass


class InfeasibleGate(PulseError):
    """The requested gate time is shorter than the ZZ-limited minimum."""


@dataclass(frozen=True, eq=False)
class Waveform:
    """Inner-loop flux samples Phi_e1(t_k), t_k = k dt, in flux quanta."""

    dt: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("waveform needs a 1-d, non-empty sample array")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.dt * (self.samples.size - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.size)

    def at(self, t) -> np.ndarray:
        """Linear interpolation of the samples at times ``t`` (ns)."""
        return np.interp(t, self.times, self.samples)

    @classmethod
    def constant(cls, value: float, duration: float, dt: float = DEFAULT_DT) -> "Waveform":
        n = max(int(round(duration / dt)), 0)
        step = duration / n if n else dt
        return cls(step, np.full(n + 1, float(value)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_ns", "phi_e1"])
            for t, x in zip(self.times, self.samples):
                w.writerow([format_float(t), format_float(x)])

    @classmethod
    def from_csv(cls, path) -> "Waveform":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, x = data[:, 0], data[:, 1]
        dt = float(t[1] - t[0]) if t.size > 1 else 1.0
        if t.size > 2 and not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
            raise ValueError("waveform CSV must be uniformly sampled")
        return cls(dt, x)


@dataclass(frozen=True)
class PulseConfig:
    T_G: float = 22.0
    beta: float = 0.5
    sigma_filter: float = DEFAULT_SIGMA
    phi_on: float = 0.0
    phi_off: float | None = None
    dt: float = DEFAULT_DT
    window: str = "kaiser"
    kaiser_beta: float = DEFAULT_KAISER

    def __post_init__(self) -> None:
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.sigma_filter < 0:
            raise ValueError("sigma_filter must be non-negative")
        if self.phi_off is not None and self.phi_on == self.phi_off:
            raise ValueError("phi_on and phi_off must differ")
        if not self.T_G > 0 or not self.dt > 0:
            raise ValueError("T_G and dt must be positive")
        if self.window != "kaiser":
            raise ValueError(f"unknown window {self.window!r}")


@dataclass(frozen=True, eq=False)
class MixingTable:
    """Mixing angle of the bare |11>/|02> pair tabulated against flux."""

    flux: np.ndarray
    theta: np.ndarray
    _inverse: Callable = field(repr=False, default=None)

    def __post_init__(self) -> None:
        d = np.diff(self.theta)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise PulseError("mixing angle is not strictly monotone on the flux grid")
        order = np.argsort(self.theta)
        inv = PchipInterpolator(self.theta[order], self.flux[order], extrapolate=False)
        object.__setattr__(self, "_inverse", inv)

    def flux_of(self, theta) -> np.ndarray:
        lo, hi = self.theta.min(), self.theta.max()
        theta = np.asarray(theta, dtype=float)
        tol = 1e-12 * max(abs(lo), abs(hi), 1.0)
        if np.any(theta < lo - tol) or np.any(theta > hi + tol):
            raise PulseError("mixing angle outside the tabulated range")
        return self._inverse(np.clip(theta, lo, hi))

    def theta_of(self, flux) -> np.ndarray:
        return np.interp(flux, self.flux, self.theta) if self.flux[0] < self.flux[-1] else \
            np.interp(flux, self.flux[::-1], self.theta[::-1])


class _PairBlock:
    """Matrix elements of H between bare |11> and |02>, reusing the branch operators."""

    def __init__(self, params: CircuitParams, ncut: int = DEFAULT_NCUT):
        self.params = params
        self.ncut = ncut
        spec = compile_two_qubit(params, FluxBias())
        static, ops = hamiltonian_terms(spec, ncut)
        self.static = scipy.sparse.csr_matrix(static)
        self.ops = [scipy.sparse.csr_matrix(op) for op in ops]
        self.EJ = [b.EJ for b in spec.branches]

    def __call__(self, phi_e1: float) -> tuple[float, float, complex]:
        spec = compile_two_qubit(self.params, FluxBias.operating(phi_e1))
        b = bare_basis(spec, self.ncut)
        v11 = np.kron(b.vectors[0][:, 1], b.vectors[1][:, 1])
        v02 = np.kron(b.vectors[0][:, 0], b.vectors[1][:, 2])

        def elem(x, y):
            val = x.conj() @ (self.static @ y)
            for ej, br, op in zip(self.EJ, spec.branches, self.ops):
                fwd = x.conj() @ (op @ y)
                bwd = np.conj(y.conj() @ (op @ x))
                val -= 0.5 * ej * (
                    np.exp(1j * br.flux_offset) * fwd + np.exp(-1j * br.flux_offset) * bwd
                )
            return val

        return float(elem(v11, v11).real), float(elem(v02, v02).real), complex(elem(v02, v11))


def pair_block(
    params: CircuitParams, phi_e1: float, ncut: int = DEFAULT_NCUT
) -> tuple[float, float, complex]:
    """<11|H|11>, <02|H|02> and <02|H|11> in the bare product basis on the operating line."""
    return _PairBlock(params, ncut)(phi_e1)


def mixing_angle(e11: float, e02: float, coupling: complex) -> float:
    """Signed two-level mixing angle 0.5 * arctan(2 g / (E11 - E02)).

    The coupling keeps its sign (taken from its real part) so that the angle
    stays monotone where the exchange coupling crosses zero.
    """
    g = abs(coupling) * (1.0 if coupling.real >= 0 else -1.0)
    return 0.5 * math.atan(2 * g / (e11 - e02))


def mixing_angle_table(
    params: CircuitParams,
    flux_grid: Sequence[float] | None = None,
    phi_on: float = 0.0,
    phi_off: float = 0.516,
    ncut: int = DEFAULT_NCUT,
) -> MixingTable:
    """Tabulate the |11>/|02> mixing angle; raises if it is not monotone on the grid."""
    if flux_grid is None:
        flux_grid = np.linspace(phi_on, phi_off, DEFAULT_GRID)
    flux = np.asarray(flux_grid, dtype=float)
    theta = np.empty_like(flux)
    block = _PairBlock(params, ncut)
    for i, phi in enumerate(flux):
        e11, e02, c = block(phi)
        if abs(e11 - e02) < 1e-9:
            raise PulseError(f"|11> and |02> degenerate at flux {phi}")
        theta[i] = mixing_angle(e11, e02, c)
    return MixingTable(flux, theta)


@lru_cache(maxsize=8)
def _window_cdf(kaiser_beta: float, n: int = 20001) -> tuple[np.ndarray, np.ndarray]:
    x = np.linspace(-0.5, 0.5, n)
    w = np.i0(kaiser_beta * np.sqrt(np.clip(1 - (2 * x) ** 2, 0, None)))
    c = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(x))])
    c /= c[-1]
    return x, c


def kaiser_window(u, kaiser_beta: float = DEFAULT_KAISER) -> np.ndarray:
    """Kaiser window on [-1/2, 1/2] (unnormalized), zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 0.5
    arg = np.sqrt(np.clip(1 - (2 * u) ** 2, 0, None))
    return np.where(inside, np.i0(kaiser_beta * arg), 0.0)


def envelope(t, T_G: float, beta: float, kaiser_beta: float = DEFAULT_KAISER) -> np.ndarray:
    """Square(beta T_G) convolved with a unit-area window((1 - beta) T_G), peak scaled to 1.

    ``t`` is measured from the pulse start; the support is [0, T_G].
    """
    t = np.asarray(t, dtype=float)
    a = beta * T_G
    L = (1 - beta) * T_G
    u = t - 0.5 * T_G

    def cdf(x):
        if L == 0:
            return (x >= 0).astype(float)
        xs, cs = _window_cdf(kaiser_beta)
        return np.interp(x / L, xs, cs, left=0.0, right=1.0)

    s = cdf(u + 0.5 * a) - cdf(u - 0.5 * a)
    peak = cdf(np.array(0.5 * a)) - cdf(np.array(-0.5 * a))
    return s / peak


def synthesize(config: PulseConfig, table: MixingTable, filtered: bool = True) -> Waveform:
    """Build the flux waveform; with ``filtered`` the Gaussian filter is applied last."""
    if config.phi_off is None:
        raise ValueError("PulseConfig.phi_off must be resolved before synthesis")
    n = max(int(round(config.T_G / config.dt)), 1)
    dt = config.T_G / n
    t = dt * np.arange(n + 1)
    s = envelope(t, config.T_G, config.beta, config.kaiser_beta)
    # exact symmetry about the midpoint
    s = 0.5 * (s + s[::-1])
    th_on = float(table.theta_of(config.phi_on))
    th_off = float(table.theta_of(config.phi_off))
    theta = th_off + (th_on - th_off) * s
    flux = table.flux_of(theta)
    flux[0] = flux[-1] = config.phi_off
    wf = Waveform(dt, flux)
    return gaussian_filter(wf, config.sigma_filter) if filtered else wf


def gaussian_filter(wf: Waveform, sigma: float) -> Waveform:
    """Gaussian low-pass with kernel cut at +-5 sigma, unit sum, edge-hold padding.

    The output keeps the input length. Where the input is not flat within
    5 sigma of an end, the filtered endpoint moves toward the interior
    (about 5e-3 flux quanta for the default 22 ns pulse), so the filtered
    pulse starts slightly inside the idle point with zero slope.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return wf
    out = gaussian_filter1d(
        wf.samples, sigma / wf.dt, mode="nearest", truncate=FILTER_TRUNCATE
    )
    return Waveform(wf.dt, out)


def min_gate_time(zeta_on: float) -> float:
    """pi / |zeta_on| with zeta in cyclic GHz, in ns."""
    return 1.0 / (2.0 * abs(zeta_on))


@dataclass(frozen=True, eq=False)
class Calibration:
    beta: float
    waveform: Waveform
    phase: float
    iterations: int


def wrap_phase(x: float) -> float:
    """Map to [0, 2 pi)."""
    return float(np.mod(x, 2 * math.pi))


def calibrate_beta(
    params: CircuitParams,
    T_G: float,
    template: PulseConfig | None = None,
    table: MixingTable | None = None,
    bracket: tuple[float, float] = (0.05, 0.95),
    n_scan: int = 10,
    phase_fn: Callable[[Waveform], float] | None = None,
    zeta_on: float | None = None,
    **prop_kwargs,
) -> Calibration:
    """Choose beta so that the propagated conditional phase equals pi.

    The phase, wrapped to [0, 2 pi), is scanned across ``bracket`` and the
    first crossing of pi, in either direction, is refined with Brent's method.
    """
    from .dynamics import entangling_phase_of
    from .spectrum import find_phi_off, zeta_at

    template = template or PulseConfig()
    if template.phi_off is None:
        template = replace(template, phi_off=find_phi_off(params))
    template = replace(template, T_G=T_G)
    zeta_on = zeta_at(params, template.phi_on) if zeta_on is None else zeta_on
    t_min = min_gate_time(zeta_on)
    if T_G <= t_min:
        raise InfeasibleGate(f"T_G = {T_G} ns is below the minimum {t_min:.3f} ns")
    if table is None:
        table = mixing_angle_table(params, phi_on=template.phi_on, phi_off=template.phi_off)
    if phase_fn is None:
        def phase_fn(wf: Waveform) -> float:
            return entangling_phase_of(params, wf, **prop_kwargs)

    cache: dict[float, float] = {}

    def f(beta: float) -> float:
        if beta not in cache:
            wf = synthesize(replace(template, beta=beta), table)
            cache[beta] = wrap_phase(phase_fn(wf))
        return cache[beta] - math.pi

    grid = np.linspace(*bracket, n_scan)
    f_prev = f(grid[0])
    for b0, b1 in zip(grid[:-1], grid[1:]):
        f_next = f(b1)
        # A sign change with a small jump is a crossing of pi (mod 2 pi); a jump
        # of about 2 pi is the wrap at 0 and is skipped.
        if (f_prev < 0) != (f_next < 0) and abs(f_next - f_prev) < math.pi:
            beta = brentq(f, b0, b1, xtol=BETA_XTOL, rtol=1e-12, maxiter=100)
            break
        f_prev = f_next
    else:
        raise PulseError("conditional phase does not cross pi on the beta bracket")
    phase = f(beta) + math.pi
    if abs(phase - math.pi) > PHASE_TOL:
        raise PulseError(f"calibrated phase misses pi by {phase - math.pi:.3g} rad")
    wf = synthesize(replace(template, beta=beta), table)
    return Calibration(beta, wf, phase, len(cache))
