"""Gaussian states and symplectic operations.

Conventions used throughout the package:

* hbar = 1, so the vacuum variance of each quadrature is 1/2.
* Quadratures are ordered (x0, p0, x1, p1, ...), i.e. interleaved.
* The symplectic form is block diagonal with per-mode blocks
  [[0, 1], [-1, 0]].
* squeeze(r) with r > 0 reduces Var(x) to exp(-2r)/2 and raises
  Var(p) to exp(+2r)/2.  Negative r squeezes p.
* The beam splitter of transmissivity T maps
      x_i -> sqrt(T) x_i + sqrt(1-T) x_j
      x_j -> sqrt(T) x_j - sqrt(1-T) x_i
  and identically for p.
* A phase shift by theta maps x -> cos(theta) x - sin(theta) p,
  p -> sin(theta) x + cos(theta) p.

All operations are pure functions: they return a new GaussianState and
never mutate their argument.  Covariance matrices are re-symmetrized
after every update so round-off cannot accumulate asymmetry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Numerical tolerances for state validation.
SYMMETRY_TOL = 1e-10
UNCERTAINTY_TOL = 1e-9
SYMPLECTIC_TOL = 1e-10

VACUUM_VAR = 0.5


def symplectic_form(n_modes: int) -> np.ndarray:
    """Return the 2n x 2n symplectic form Omega in interleaved ordering."""
    omega = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        omega[2 * k, 2 * k + 1] = 1.0
        omega[2 * k + 1, 2 * k] = -1.0
    return omega


@dataclass(frozen=True)
class GaussianState:
    """A Gaussian state of n modes: mean vector and covariance matrix.

    Attributes:
        mean: length-2n array of quadrature means, interleaved ordering.
        cov: 2n x 2n covariance matrix (symmetrized second moments).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean/cov shape mismatch")
        if mean.size % 2 != 0:
            raise ValueError("quadrature count must be even")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def validate(self) -> None:
        """Check symmetry and the uncertainty relation; raise ValueError if violated.

        The covariance must be symmetric and V + (i/2) Omega must be
        positive semidefinite up to a small numerical tolerance.
        """
        if self.n_modes == 0:
            return
        asym = np.max(np.abs(self.cov - self.cov.T))
        if asym > SYMMETRY_TOL:
            raise ValueError(f"covariance not symmetric (max deviation {asym:.2e})")
        omega = symplectic_form(self.n_modes)
        herm = self.cov + 0.5j * omega
        eigs = np.linalg.eigvalsh(herm)
        if eigs.min() < -UNCERTAINTY_TOL:
            raise ValueError(
                f"uncertainty relation violated (min eigenvalue {eigs.min():.2e})"
            )

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "GaussianState":
        return GaussianState(np.array(d["mean"], dtype=float),
                             np.array(d["cov"], dtype=float))


@dataclass(frozen=True)
class SymplecticOp:
    """A symplectic matrix acting on all modes of a state."""

    matrix: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.matrix, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] % 2 != 0:
            raise ValueError("symplectic matrix must be even-dimensional square")
        omega = symplectic_form(s.shape[0] // 2)
        err = np.max(np.abs(s @ omega @ s.T - omega))
        if err > SYMPLECTIC_TOL:
            raise ValueError(f"matrix is not symplectic (defect {err:.2e})")
        object.__setattr__(self, "matrix", s)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def __call__(self, state: GaussianState) -> GaussianState:
        return apply_symplectic(state, self.matrix)


@dataclass(frozen=True)
class LinearForm:
    """A linear combination of quadratures, c . (x0, p0, x1, p1, ...).

    Used for nullifier certificates and report instructions.
    """

    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    def mean(self, state: GaussianState) -> float:
        return float(self.coeffs @ state.mean)

    def variance(self, state: GaussianState) -> float:
        return float(self.coeffs @ state.cov @ self.coeffs)


# ---------------------------------------------------------------------------
# State constructors


def vacuum(n_modes: int) -> GaussianState:
    """The n-mode vacuum: zero mean, covariance I/2."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    return GaussianState(np.zeros(2 * n_modes), np.eye(2 * n_modes) * VACUUM_VAR)


def coherent(dx: float, dp: float) -> GaussianState:
    """Single-mode coherent state with mean (dx, dp)."""
    return displace(vacuum(1), 0, dx, dp)


# ---------------------------------------------------------------------------
# Symplectic matrix builders (single- and two-mode blocks)


def squeeze_matrix(r: float) -> np.ndarray:
    """Single-mode squeezing block: diag(e^-r, e^+r)."""
    return np.diag([np.exp(-r), np.exp(r)])


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def beamsplitter_matrix(transmissivity: float) -> np.ndarray:
    """Two-mode beam splitter block in interleaved ordering."""
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    t = np.sqrt(transmissivity)
    rkappa = np.sqrt(1.0 - transmissivity)
    s = np.zeros((4, 4))
    for q in range(2):  # same mixing for x and p
        s[q, q] = t
        s[q, 2 + q] = rkappa
        s[2 + q, q] = -rkappa
        s[2 + q, 2 + q] = t
    return s


def embed(block: np.ndarray, modes: tuple[int, ...], n_modes: int) -> np.ndarray:
    """Embed a small symplectic block acting on `modes` into 2n x 2n identity."""
    s = np.eye(2 * n_modes)
    idx = []
    for m in modes:
        idx.extend([2 * m, 2 * m + 1])
    s[np.ix_(idx, idx)] = block
    return s


# ---------------------------------------------------------------------------
# Operations


def _symmetrize(v: np.ndarray) -> np.ndarray:
    return (v + v.T) / 2.0


def apply_symplectic(state: GaussianState, s: np.ndarray) -> GaussianState:
    """Apply a symplectic matrix to all quadratures of the state."""
    return GaussianState(s @ state.mean, _symmetrize(s @ state.cov @ s.T))


def squeeze(state: GaussianState, mode: int, r: float) -> GaussianState:
    """Squeeze one mode: Var(x) -> e^{-2r} Var(x), Var(p) -> e^{+2r} Var(p)."""
    _check_mode(state, mode)
    s = embed(squeeze_matrix(r), (mode,), state.n_modes)
    return apply_symplectic(state, s)


def phase_shift(state: GaussianState, mode: int, theta: float) -> GaussianState:
    _check_mode(state, mode)
    s = embed(rotation_matrix(theta), (mode,), state.n_modes)
    return apply_symplectic(state, s)


def beam_splitter(state: GaussianState, mode_i: int, mode_j: int,
                  transmissivity: float) -> GaussianState:
    """Mix two modes on a beam splitter of the given transmissivity."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beam splitter needs two distinct modes")
    s = embed(beamsplitter_matrix(transmissivity), (mode_i, mode_j), state.n_modes)
    return apply_symplectic(state, s)


def displace(state: GaussianState, mode: int, dx: float, dp: float) -> GaussianState:
    _check_mode(state, mode)
    mean = state.mean.copy()
    mean[2 * mode] += dx
    mean[2 * mode + 1] += dp
    return GaussianState(mean, state.cov)


def loss(state: GaussianState, mode: int, eta: float) -> GaussianState:
    """Pure-loss channel of transmission eta on one mode.

    Mean scales by sqrt(eta); the mode's covariance block contracts
    toward the vacuum: V -> eta V + (1 - eta)/2 I, with cross blocks
    scaled by sqrt(eta).
    """
    _check_mode(state, mode)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmission must lie in [0, 1]")
    n = state.n_modes
    scale = np.ones(2 * n)
    scale[2 * mode] = scale[2 * mode + 1] = np.sqrt(eta)
    mean = state.mean * np.where(np.arange(2 * n) // 2 == mode, np.sqrt(eta), 1.0)
    cov = state.cov * np.outer(scale, scale)
    cov[2 * mode, 2 * mode] += (1.0 - eta) * VACUUM_VAR
    cov[2 * mode + 1, 2 * mode + 1] += (1.0 - eta) * VACUUM_VAR
    return GaussianState(mean, _symmetrize(cov))


def homodyne(state: GaussianState, mode: int, theta: float,
             rng_seed) -> tuple[float, GaussianState]:
    """Measure the quadrature cos(theta) x + sin(theta) p of one mode.

    The outcome is sampled from the exact marginal normal distribution.
    The remaining modes are conditioned on the outcome and the measured
    mode is removed from the state.

    Args:
        state: input state.
        mode: index of the measured mode.
        theta: quadrature angle (0 measures x, pi/2 measures p).
        rng_seed: integer seed or numpy Generator.

    Returns:
        (outcome, conditioned state with the measured mode removed)
    """
    _check_mode(state, mode)
    rng = as_rng(rng_seed)
    n = state.n_modes
    c = np.zeros(2 * n)
    c[2 * mode] = np.cos(theta)
    c[2 * mode + 1] = np.sin(theta)
    mu_q = float(c @ state.mean)
    var_q = float(c @ state.cov @ c)
    if var_q <= 1e-30:
        raise ValueError("measured quadrature has (numerically) zero variance")
    outcome = rng.normal(mu_q, np.sqrt(var_q))

    keep = [i for i in range(2 * n) if i // 2 != mode]
    cross = state.cov @ c  # Cov(R, q) for every quadrature R
    gain = cross[keep] / var_q
    mean = state.mean[keep] + gain * (outcome - mu_q)
    cov = state.cov[np.ix_(keep, keep)] - np.outer(gain, cross[keep])
    return float(outcome), GaussianState(mean, _symmetrize(cov))


def condition_on_outcome(state: GaussianState, mode: int, theta: float,
                         outcome: float) -> GaussianState:
    """Like homodyne, but condition on a given outcome instead of sampling."""
    _check_mode(state, mode)
    n = state.n_modes
    c = np.zeros(2 * n)
    c[2 * mode] = np.cos(theta)
    c[2 * mode + 1] = np.sin(theta)
    mu_q = float(c @ state.mean)
    var_q = float(c @ state.cov @ c)
    if var_q <= 1e-30:
        raise ValueError("measured quadrature has (numerically) zero variance")
    keep = [i for i in range(2 * n) if i // 2 != mode]
    cross = state.cov @ c
    gain = cross[keep] / var_q
    mean = state.mean[keep] + gain * (outcome - mu_q)
    cov = state.cov[np.ix_(keep, keep)] - np.outer(gain, cross[keep])
    return GaussianState(mean, _symmetrize(cov))


def quad_stats(state: GaussianState, form) -> tuple[float, float]:
    """Mean and variance of a linear combination of quadratures."""
    if isinstance(form, LinearForm):
        return form.mean(state), form.variance(state)
    c = np.asarray(form, dtype=float)
    return float(c @ state.mean), float(c @ state.cov @ c)


def purity(state: GaussianState) -> float:
    """Tr(rho^2) = 2^-n / sqrt(det V)."""
    n = state.n_modes
    det = np.linalg.det(state.cov)
    return float(1.0 / (2.0 ** n * np.sqrt(det)))


def symplectic_eigenvalues(state: GaussianState) -> np.ndarray:
    """Williamson eigenvalues of the covariance, each >= 1/2 for physical states."""
    omega = symplectic_form(state.n_modes)
    eigs = np.linalg.eigvals(1j * omega @ state.cov)
    nu = np.sort(np.abs(eigs.real + 1j * eigs.imag))
    # eigenvalues come in +/- pairs; keep one of each
    return nu[::2] if state.n_modes else nu


def is_pure(state: GaussianState, tol: float = 1e-9) -> bool:
    return bool(abs(purity(state) - 1.0) < tol)


def fidelity(a: GaussianState, b: GaussianState) -> float:
    """Fidelity between two Gaussian states.

    Supported cases: either argument pure (any mode count), where
    F = <psi| rho |psi> follows from the Gaussian overlap integral, or
    two arbitrary single-mode states via the closed form.

    Raises:
        ValueError: both states mixed with more than one mode.
    """
    if a.n_modes != b.n_modes:
        raise ValueError("states must have the same number of modes")
    if is_pure(a) or is_pure(b):
        return _overlap(a, b)
    if a.n_modes == 1:
        return _fidelity_single_mode(a, b)
    raise ValueError("fidelity of two mixed multimode states is not supported")


def _overlap(a: GaussianState, b: GaussianState) -> float:
    """Tr(rho_a rho_b); equals fidelity when one argument is pure."""
    vsum = a.cov + b.cov
    delta = a.mean - b.mean
    expo = -0.5 * delta @ np.linalg.solve(vsum, delta)
    det = np.linalg.det(vsum)
    return float(np.exp(expo) / np.sqrt(det))


def _fidelity_single_mode(a: GaussianState, b: GaussianState) -> float:
    # Closed form for one mode.  Work in units where the vacuum covariance
    # is the identity (scale covariances by 2, means by sqrt 2).
    va, vb = 2.0 * a.cov, 2.0 * b.cov
    delta = np.sqrt(2.0) * (a.mean - b.mean)
    vsum = va + vb
    big_delta = np.linalg.det(vsum)
    lam = (np.linalg.det(va) - 1.0) * (np.linalg.det(vb) - 1.0)
    lam = max(lam, 0.0)
    expo = -0.5 * delta @ np.linalg.solve(vsum, delta)
    denom = np.sqrt(big_delta + lam) - np.sqrt(lam)
    return float(2.0 * np.exp(expo) / denom)


# ---------------------------------------------------------------------------
# Mode bookkeeping


def remove_modes(state: GaussianState, modes) -> GaussianState:
    """Trace out the given modes (drop their rows and columns)."""
    drop = set(modes)
    for m in drop:
        _check_mode(state, m)
    keep = [i for i in range(2 * state.n_modes) if i // 2 not in drop]
    return GaussianState(state.mean[keep], state.cov[np.ix_(keep, keep)])


def append_vacuum(state: GaussianState, n_new: int) -> GaussianState:
    """Append n_new vacuum modes after the existing ones."""
    if n_new < 0:
        raise ValueError("n_new must be >= 0")
    if n_new == 0:
        return state
    n = state.n_modes
    mean = np.concatenate([state.mean, np.zeros(2 * n_new)])
    cov = np.eye(2 * (n + n_new)) * VACUUM_VAR
    cov[: 2 * n, : 2 * n] = state.cov
    return GaussianState(mean, cov)


def tensor(a: GaussianState, b: GaussianState) -> GaussianState:
    """Product state of two uncorrelated states, modes of `a` first."""
    na, nb = 2 * a.n_modes, 2 * b.n_modes
    mean = np.concatenate([a.mean, b.mean])
    cov = np.zeros((na + nb, na + nb))
    cov[:na, :na] = a.cov
    cov[na:, na:] = b.cov
    return GaussianState(mean, cov)


# ---------------------------------------------------------------------------
# Helpers


def squeezing_db_to_r(db: float) -> float:
    """Convert a squeezing level in dB to the squeeze parameter r.

    dB = 10 log10(Var_vac / Var_squeezed) = (20 / ln 10) r.
    """
    return db * np.log(10.0) / 20.0


def r_to_squeezing_db(r: float) -> float:
    return r * 20.0 / np.log(10.0)


def as_rng(rng_seed) -> np.random.Generator:
    """Accept an integer seed, a SeedSequence, or a Generator."""
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def _check_mode(state: GaussianState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"mode {mode} out of range for {state.n_modes}-mode state")
