"""Truncated Fock-space backend for up to three modes.

States are dense complex amplitude tensors with one axis per mode, each
of length `cutoff`.  The backend covers pure states only; measurements
sample and project.  Quadrature conventions match the Gaussian backend:
x = (a + a^dag)/sqrt(2), p = -i (a - a^dag)/sqrt(2), vacuum variance 1/2.

Non-Gaussian gates (cubic phase, controlled phase) live here.  Gaussian
gates are also provided so that circuits can be cross-checked against
the symplectic backend via `covariance_of`.

Truncation policy: all unitaries are built as exact unitaries of the
truncated space (matrix exponentials of truncated anti-Hermitian
generators, or spectral functions of the truncated x operator), so
norms are preserved to machine precision and truncation error shows up
as state distortion, tracked by `leakage`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .gaussian import GaussianState, as_rng

DEFAULT_CUTOFF = 60
DEFAULT_LEAKAGE_BUDGET = 1e-4
NORM_TOL = 1e-6
MAX_MODES = 3

HOMODYNE_GRID_POINTS = 2048
HOMODYNE_GRID_SIGMAS = 8.0
HOMODYNE_MASS_TOL = 1e-6


class LeakageError(RuntimeError):
    """Raised when probability mass near the cutoff exceeds the budget."""


@dataclass(frozen=True)
class FockState:
    """Pure state of up to three modes as a complex amplitude tensor."""

    amps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex)
        if a.ndim > MAX_MODES:
            raise ValueError(f"at most {MAX_MODES} modes supported")
        if a.ndim > 0 and len(set(a.shape)) != 1:
            raise ValueError("all modes must share one cutoff")
        object.__setattr__(self, "amps", a)

    @property
    def n_modes(self) -> int:
        return self.amps.ndim

    @property
    def cutoff(self) -> int:
        return self.amps.shape[0] if self.amps.ndim else 0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def validate(self) -> None:
        if self.n_modes and abs(self.norm() - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {self.norm():.8f} deviates from 1")

    def leakage(self) -> float:
        """Largest per-mode probability mass in the top 10% of levels."""
        if self.n_modes == 0:
            return 0.0
        prob = np.abs(self.amps) ** 2
        edge = int(np.ceil(0.9 * self.cutoff))
        worst = 0.0
        for axis in range(self.n_modes):
            marg = np.sum(prob, axis=tuple(i for i in range(self.n_modes)
                                           if i != axis))
            worst = max(worst, float(marg[edge:].sum()))
        return worst


def _renormalized(amps: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(np.abs(amps) ** 2))
    if n <= 0:
        raise ValueError("state collapsed to zero norm")
    return amps / n


# ---------------------------------------------------------------------------
# Constructors


def fock_basis(ns, cutoff: int = DEFAULT_CUTOFF) -> FockState:
    """Product number state |n1, n2, ...>."""
    ns = tuple(int(n) for n in (ns if np.iterable(ns) else [ns]))
    if any(n < 0 or n >= cutoff for n in ns):
        raise ValueError("occupation out of range")
    amps = np.zeros((cutoff,) * len(ns), dtype=complex)
    amps[ns] = 1.0
    return FockState(amps)


def vacuum_fock(n_modes: int, cutoff: int = DEFAULT_CUTOFF) -> FockState:
    return fock_basis((0,) * n_modes, cutoff)


def coherent_fock(alpha: complex, cutoff: int = DEFAULT_CUTOFF) -> FockState:
    """Single-mode coherent state, built by displacing the vacuum.

    alpha = (dx + i dp)/sqrt(2) gives mean quadratures (dx, dp).
    """
    dx = np.sqrt(2.0) * np.real(alpha)
    dp = np.sqrt(2.0) * np.imag(alpha)
    return displace_fock(vacuum_fock(1, cutoff), 0, dx, dp)


def squeezed_vacuum_fock(r: float, cutoff: int = DEFAULT_CUTOFF) -> FockState:
    """Squeezed vacuum; r > 0 squeezes x (variance e^{-2r}/2), r < 0 squeezes p."""
    return squeeze_fock(vacuum_fock(1, cutoff), 0, r)


# ---------------------------------------------------------------------------
# Mode operators


@lru_cache(maxsize=32)
def annihilation(cutoff: int) -> np.ndarray:
    a = np.zeros((cutoff, cutoff))
    for n in range(1, cutoff):
        a[n - 1, n] = np.sqrt(n)
    return a


@lru_cache(maxsize=32)
def position_op(cutoff: int) -> np.ndarray:
    a = annihilation(cutoff)
    return (a + a.T) / np.sqrt(2.0)


@lru_cache(maxsize=32)
def momentum_op(cutoff: int) -> np.ndarray:
    a = annihilation(cutoff)
    return -1j * (a - a.T) / np.sqrt(2.0)


@lru_cache(maxsize=32)
def _position_eigh(cutoff: int):
    # Spectral decomposition of the truncated x operator; eigenvalues are
    # the Gauss-Hermite style grid the phase gates act on.
    lam, vec = np.linalg.eigh(position_op(cutoff))
    return lam, vec


def apply_single_mode(state: FockState, mode: int, u: np.ndarray) -> FockState:
    """Apply a cutoff x cutoff matrix to one mode of the state."""
    _check_mode(state, mode)
    amps = np.tensordot(u, state.amps, axes=([1], [mode]))
    amps = np.moveaxis(amps, 0, mode)
    return FockState(amps)


# ---------------------------------------------------------------------------
# Gaussian gates in Fock space


def displace_fock(state: FockState, mode: int, dx: float, dp: float) -> FockState:
    alpha = (dx + 1j * dp) / np.sqrt(2.0)
    a = annihilation(state.cutoff)
    u = expm(alpha * a.T - np.conj(alpha) * a)
    return apply_single_mode(state, mode, u)


def squeeze_fock(state: FockState, mode: int, r: float) -> FockState:
    """r > 0: x variance shrinks by e^{-2r}, matching the Gaussian backend."""
    a = annihilation(state.cutoff)
    u = expm((r / 2.0) * (a @ a - a.T @ a.T))
    return apply_single_mode(state, mode, u)


def phase_fock(state: FockState, mode: int, theta: float) -> FockState:
    """Rotation x -> cos(theta) x - sin(theta) p, i.e. exp(i theta n)."""
    n = np.arange(state.cutoff)
    return _apply_diag_single(state, mode, np.exp(1j * theta * n))


def _apply_diag_single(state: FockState, mode: int, diag: np.ndarray) -> FockState:
    _check_mode(state, mode)
    shape = [1] * state.n_modes
    shape[mode] = state.cutoff
    return FockState(state.amps * diag.reshape(shape))


@lru_cache(maxsize=256)
def _bs_blocks(cutoff: int, theta: float):
    """Beam-splitter unitaries per total-photon-number block.

    The generator theta (a1^dag a2 - a1 a2^dag) conserves n1 + n2, so the
    unitary factors into blocks over {|k, N-k>}.  Each restricted
    generator is antisymmetric, so every block is exactly orthogonal.
    """
    blocks = []
    for total in range(2 * cutoff - 1):
        lo = max(0, total - cutoff + 1)
        hi = min(total, cutoff - 1)
        size = hi - lo + 1
        gen = np.zeros((size, size))
        for m in range(size - 1):
            k1 = lo + m
            amp = theta * np.sqrt((k1 + 1) * (total - k1))
            gen[m + 1, m] = amp
            gen[m, m + 1] = -amp
        blocks.append(expm(gen))
    return blocks


def beam_splitter_fock(state: FockState, mode_i: int, mode_j: int,
                       transmissivity: float) -> FockState:
    """Beam splitter with the same sign convention as the Gaussian backend.

    On |1, 0> the transmitted amplitude is sqrt(T) and the reflected
    amplitude on the second mode is -sqrt(1-T).
    """
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beam splitter needs two distinct modes")
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    d = state.cutoff
    theta = float(np.arctan2(np.sqrt(1.0 - transmissivity), np.sqrt(transmissivity)))
    blocks = _bs_blocks(d, theta)

    work = np.moveaxis(state.amps, (mode_i, mode_j), (0, 1))
    rest = work.shape[2:]
    work = work.reshape(d, d, -1).copy()
    out = np.zeros_like(work)
    for total in range(2 * d - 1):
        lo = max(0, total - d + 1)
        hi = min(total, d - 1)
        ks = np.arange(lo, hi + 1)
        vec = work[ks, total - ks, :]
        out[ks, total - ks, :] = blocks[total] @ vec
    out = out.reshape((d, d) + rest)
    return FockState(np.moveaxis(out, (0, 1), (mode_i, mode_j)))


# ---------------------------------------------------------------------------
# Non-Gaussian gates


def apply_x_phase(state: FockState, mode: int, coeffs,
                  leakage_budget: float | None = DEFAULT_LEAKAGE_BUDGET) -> FockState:
    """Apply exp(i sum_k coeffs[k] x^k) to one mode.

    Realized as a spectral function of the truncated x operator, hence
    exactly unitary.  coeffs[0] is a global phase and is ignored.

    Raises:
        LeakageError: resulting top-level probability mass exceeds the
            budget (pass None to disable the check).
    """
    lam, vec = _position_eigh(state.cutoff)
    poly = np.zeros_like(lam)
    for k, ck in enumerate(coeffs):
        if k == 0 or ck == 0.0:
            continue
        poly = poly + ck * lam ** k
    u = (vec * np.exp(1j * poly)) @ vec.T
    out = apply_single_mode(state, mode, u)
    if leakage_budget is not None and out.leakage() > leakage_budget:
        raise LeakageError(
            f"leakage {out.leakage():.2e} exceeds budget {leakage_budget:.0e}; "
            "raise the cutoff")
    return out


def apply_cubic(state: FockState, mode: int, gamma: float,
                leakage_budget: float | None = DEFAULT_LEAKAGE_BUDGET) -> FockState:
    """Cubic phase gate exp(i gamma x^3)."""
    return apply_x_phase(state, mode, [0.0, 0.0, 0.0, gamma], leakage_budget)


def controlled_phase(state: FockState, mode_i: int, mode_j: int) -> FockState:
    """exp(i pi n_i n_j): phase (-1)^{n_i n_j} on each basis state, exact."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("controlled phase needs two distinct modes")
    d = state.cutoff
    n = np.arange(d)
    # (-1)^{n_i n_j} is symmetric in the two mode indices
    sign = np.where(np.outer(n, n) % 2 == 1, -1.0, 1.0)
    return FockState(state.amps * sign.reshape(
        [d if k in (mode_i, mode_j) else 1 for k in range(state.n_modes)]))


# ---------------------------------------------------------------------------
# Quadrature wavefunctions and homodyne


def hermite_functions(xs: np.ndarray, cutoff: int) -> np.ndarray:
    """Matrix psi[n, k] = <x_k | n> of normalized Hermite functions.

    Uses the stable normalized recurrence with the Gaussian envelope
    factored out and reapplied at the end, which keeps intermediate
    values representable at large |x|.
    """
    xs = np.asarray(xs, dtype=float)
    h = np.zeros((cutoff, xs.size))
    h[0] = np.pi ** -0.25
    if cutoff > 1:
        h[1] = np.sqrt(2.0) * xs * h[0]
    for n in range(2, cutoff):
        h[n] = xs * np.sqrt(2.0 / n) * h[n - 1] - np.sqrt((n - 1) / n) * h[n - 2]
    return h * np.exp(-xs ** 2 / 2.0)


def quadrature_wavefunction(state: FockState, xs: np.ndarray) -> np.ndarray:
    """Position wavefunction of a single-mode state on a grid."""
    if state.n_modes != 1:
        raise ValueError("wavefunction is defined for single-mode states")
    psi = hermite_functions(xs, state.cutoff)
    return state.amps @ psi


def homodyne_fock(state: FockState, mode: int, theta: float, rng_seed,
                  grid_points: int = HOMODYNE_GRID_POINTS,
                  grid_sigmas: float = HOMODYNE_GRID_SIGMAS
                  ) -> tuple[float, FockState]:
    """Sample the quadrature cos(theta) x + sin(theta) p of one mode.

    The mode is rotated so the measured quadrature becomes x, the exact
    probability density is evaluated on a uniform grid spanning
    +- grid_sigmas standard deviations around the mean, the outcome is
    drawn by inverse CDF over that grid, and the state is projected onto
    the sampled quadrature eigenvector (mode removed, renormalized).

    Raises:
        ValueError: grid does not capture the state (mass deficit).
    """
    _check_mode(state, mode)
    rng = as_rng(rng_seed)
    work = phase_fock(state, mode, -theta) if theta != 0.0 else state

    mean, cov = covariance_of(work)
    mu = mean[2 * mode]
    sigma = np.sqrt(cov[2 * mode, 2 * mode])
    xs = np.linspace(mu - grid_sigmas * sigma, mu + grid_sigmas * sigma, grid_points)
    dx = xs[1] - xs[0]

    psi = hermite_functions(xs, work.cutoff)  # (cutoff, grid)
    moved = np.moveaxis(work.amps, mode, 0).reshape(work.cutoff, -1)
    values = psi.T @ moved  # (grid, rest)
    pdf = np.sum(np.abs(values) ** 2, axis=1)
    mass = float(np.sum(pdf) * dx)
    if mass < 1.0 - HOMODYNE_MASS_TOL:
        raise ValueError(
            f"homodyne grid captures only {mass:.8f} of the probability mass; "
            "widen the grid or raise the cutoff")

    cdf = np.cumsum(pdf)
    cdf /= cdf[-1]
    outcome = float(np.interp(rng.uniform(), cdf, xs))

    idx = int(np.argmin(np.abs(xs - outcome)))
    outcome = float(xs[idx])
    projected = np.tensordot(psi[:, idx], np.moveaxis(work.amps, mode, 0),
                             axes=([0], [0]))
    return outcome, FockState(_renormalized(projected))


def photon_count(state: FockState, mode: int, rng_seed) -> tuple[int, FockState]:
    """Photon-number measurement of one mode (destructive: mode removed)."""
    _check_mode(state, mode)
    rng = as_rng(rng_seed)
    prob = np.abs(state.amps) ** 2
    marg = np.sum(prob, axis=tuple(i for i in range(state.n_modes) if i != mode))
    marg = marg / marg.sum()
    n = int(rng.choice(state.cutoff, p=marg))
    projected = np.take(state.amps, n, axis=mode)
    return n, FockState(_renormalized(projected))


# ---------------------------------------------------------------------------
# Observables


def overlap(a: FockState, b: FockState) -> complex:
    """<a|b> for states of equal shape."""
    if a.amps.shape != b.amps.shape:
        raise ValueError("states must share mode count and cutoff")
    return complex(np.sum(np.conj(a.amps) * b.amps))


def fidelity_fock(a: FockState, b: FockState) -> float:
    return float(np.abs(overlap(a, b)) ** 2)


def mean_photon(state: FockState, mode: int) -> float:
    prob = np.abs(state.amps) ** 2
    marg = np.sum(prob, axis=tuple(i for i in range(state.n_modes) if i != mode))
    return float(np.sum(np.arange(state.cutoff) * marg))


def covariance_of(state: FockState) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature mean vector and covariance matrix of a Fock state.

    Output uses the interleaved (x0, p0, x1, p1, ...) ordering of the
    Gaussian backend, enabling cross-backend comparisons.
    """
    n = state.n_modes
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    d = state.cutoff
    x_op = position_op(d)
    p_op = momentum_op(d)
    branches = []  # quadrature-applied copies of |psi>
    for m in range(n):
        for op in (x_op, p_op):
            branches.append(apply_single_mode(state, m, op).amps.ravel())
    flat = state.amps.ravel()
    mean = np.array([np.real(np.vdot(flat, br)) for br in branches])
    k = 2 * n
    cov = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            sym = np.real(np.vdot(branches[i], branches[j]))
            cov[i, j] = cov[j, i] = sym - mean[i] * mean[j]
    return mean, cov


def to_gaussian_moments(state: FockState) -> GaussianState:
    """Package covariance_of into a GaussianState (moments only)."""
    mean, cov = covariance_of(state)
    return GaussianState(mean, cov)


def wigner_grid(state: FockState, xs, ps) -> np.ndarray:
    """Wigner function of a single-mode pure state on a grid.

    W(x, p) = (1/pi) * integral dy e^{2ipy} psi(x - y) psi*(x + y),
    normalized so that the full integral of W is 1 and the vacuum peaks
    at 1/pi.

    Returns a matrix W[i, j] = W(xs[i], ps[j]).
    """
    if state.n_modes != 1:
        raise ValueError("wigner_grid expects a single-mode state")
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    half = np.sqrt(2.0 * state.cutoff) + 5.0
    ys = np.linspace(-half, half, 2049)
    dy = ys[1] - ys[0]
    w = np.empty((xs.size, ps.size))
    phase = np.exp(2j * np.outer(ys, ps))  # (y, p)
    for i, x in enumerate(xs):
        minus = quadrature_wavefunction(state, x - ys)
        plus = np.conj(quadrature_wavefunction(state, x + ys))
        w[i] = np.real((minus * plus) @ phase) * dy / np.pi
    return w


def _check_mode(state: FockState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"mode {mode} out of range for {state.n_modes}-mode state")
