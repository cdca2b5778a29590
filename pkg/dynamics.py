"""
Time-domain dynamics.
Matrix-exponential propagation of density matrices, Jordan-chain
polynomial-growth checks, limit-cycle detection and projection onto the slow
(stationary plus marginal) sector.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from lindblad import SIGMA_PLUS, SIGMA_MINUS, site_operator
from opspace import ArrayLike, as_matrix, devectorize, is_density, vectorize
from spectral import ep_strength_of

logger = logging.getLogger(__name__)

CHAIN_TOL = 1e-8
ILL_CONDITIONED = 1e8
DEFAULT_MARGINAL_TOL = 1e-9

PRESETS = ("site-1-excited", "symmetric", "antisymmetric", "maximally-mixed")


class InvalidDensity(ValueError):
    """Initial state is not a density matrix."""


class NotAChain(ValueError):
    """Vectors do not satisfy the Jordan-chain relations."""


class IllConditionedProjection(RuntimeError):
    """Slow-sector eigenvectors are too close to coalescence for projection."""


class UnknownPreset(ValueError):
    """Initial-state preset name not recognized."""


@dataclass
class Trajectory:
    """
    Sampled evolution of one initial state.

    states[k] is the vectorized density matrix at times[k]; observables maps
    a column name to its real time series.
    """
    times: np.ndarray
    states: List[np.ndarray]
    observables: Dict[str, np.ndarray] = field(default_factory=dict)

    def density(self, k: int) -> np.ndarray:
        return devectorize(self.states[k])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"time": self.times})
        for name, series in self.observables.items():
            frame[name] = series
        return frame


@dataclass
class LimitCycleReport:
    marginal_pairs: List[Tuple[float, float]]
    is_limit_cycle: bool
    period: Optional[float]

    def to_dict(self) -> dict:
        return {
            "marginal_pairs": [{"omega": w, "damping": g} for w, g in self.marginal_pairs],
            "is_limit_cycle": self.is_limit_cycle,
            "period": self.period,
        }


@dataclass
class AsymptoticState:
    """
    Long-time form rho(t) ~ rho_stationary + sum_k exp(lambda_k t) R_k
    over the marginal modes lambda_k = i omega_k.
    """
    stationary: np.ndarray
    components: List[Tuple[complex, np.ndarray]]

    def at(self, t: float) -> np.ndarray:
        rho = self.stationary.astype(complex)
        for lam, amplitude in self.components:
            rho = rho + np.exp(lam * t) * amplitude
        return rho


def initial_state(preset: str, n_sites: int = 2) -> np.ndarray:
    """
    Named initial density matrices on an n-qubit register.

    Presets: site-1-excited |10...0>, symmetric and antisymmetric single
    excitations (uniform / alternating signs), maximally-mixed I/d.
    """
    d = 2 ** n_sites
    vacuum = np.zeros(d, dtype=complex)
    vacuum[0] = 1.0
    if preset == "maximally-mixed":
        return np.eye(d, dtype=complex) / d
    if preset == "site-1-excited":
        psi = site_operator(SIGMA_PLUS, 0, n_sites) @ vacuum
    elif preset in ("symmetric", "antisymmetric"):
        signs = [1.0 if preset == "symmetric" else (-1.0) ** j for j in range(n_sites)]
        psi = sum(s * (site_operator(SIGMA_PLUS, j, n_sites) @ vacuum) for j, s in enumerate(signs))
        psi = psi / np.linalg.norm(psi)
    else:
        raise UnknownPreset(f"unknown initial-state preset {preset!r}; choose from {', '.join(PRESETS)}")
    return np.outer(psi, psi.conj())


def site_populations(rho: np.ndarray) -> np.ndarray:
    """Excitation probability <s+_j s-_j> of every qubit."""
    d = rho.shape[0]
    n = int(round(math.log2(d)))
    if 2 ** n != d:
        return np.zeros(0)
    number = SIGMA_PLUS @ SIGMA_MINUS
    return np.array([np.trace(site_operator(number, j, n) @ rho).real for j in range(n)])


def _check_density(rho0: np.ndarray):
    if rho0.ndim != 2 or rho0.shape[0] != rho0.shape[1]:
        raise InvalidDensity(f"initial state must be square, got shape {rho0.shape}")
    if not is_density(rho0, tol=1e-10):
        raise InvalidDensity("initial state is not Hermitian, unit-trace and positive")


def propagate(l: ArrayLike, rho0: ArrayLike, times: Sequence[float],
              coherences: Sequence[Tuple[int, int]] = ()) -> Trajectory:
    """
    Evolve rho0 under exp(L t) on the given time grid.

    One propagator is exponentiated per distinct time step and reused, so
    uniform grids cost a single expm.

    Args:
        l: Liouvillian (d^2 x d^2)
        rho0: initial density matrix
        times: increasing sample times starting at 0
        coherences: (i, k) index pairs whose Re/Im rho_ik are recorded

    Raises:
        InvalidDensity: if rho0 is not a valid density matrix
    """
    l = as_matrix(l)
    rho0 = as_matrix(rho0)
    _check_density(rho0)
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be non-negative and strictly increasing")
    if l.shape[0] != rho0.size:
        raise ValueError(f"generator of size {l.shape[0]} vs state of size {rho0.size}")

    steppers: Dict[float, np.ndarray] = {}
    state = vectorize(rho0)
    if times[0] > 0:
        state = scipy.linalg.expm(l * times[0]) @ state
    states = [state]
    for dt in np.diff(times):
        key = float(np.round(dt, 14))
        if key not in steppers:
            steppers[key] = scipy.linalg.expm(l * dt)
        state = steppers[key] @ state
        states.append(state)
    logger.debug(f"propagate: {len(times)} samples, {len(steppers)} distinct steps")

    rhos = [devectorize(s) for s in states]
    observables: Dict[str, np.ndarray] = {"trace": np.array([np.trace(r).real for r in rhos])}
    populations = np.array([site_populations(r) for r in rhos])
    for j in range(populations.shape[1]):
        observables[f"pop_{j + 1}"] = populations[:, j]
    for i, k in coherences:
        series = np.array([r[i, k] for r in rhos])
        observables[f"re_rho_{i}_{k}"] = series.real
        observables[f"im_rho_{i}_{k}"] = series.imag
    return Trajectory(times=times, states=states, observables=observables)


def jordan_chain_check(l: ArrayLike, lam: complex, x0: ArrayLike, x1: ArrayLike,
                       times: Sequence[float]) -> float:
    """
    Largest relative residual of exp(L t) x1 against exp(lam t)(x1 + t x0).

    Raises:
        NotAChain: if (L - lam) x0 != 0 or (L - lam) x1 != x0 within 1e-8
    """
    l = as_matrix(l)
    x0 = as_matrix(x0).reshape(-1)
    x1 = as_matrix(x1).reshape(-1)
    shifted = l - lam * np.eye(l.shape[0])
    scale = max(1.0, np.linalg.norm(l, 2)) * max(np.linalg.norm(x0), np.linalg.norm(x1))
    if np.linalg.norm(shifted @ x0) > CHAIN_TOL * scale:
        raise NotAChain("x0 is not an eigenvector at lambda")
    if np.linalg.norm(shifted @ x1 - x0) > CHAIN_TOL * scale:
        raise NotAChain("(L - lambda) x1 does not reproduce x0")

    worst = 0.0
    for t in np.asarray(times, dtype=float):
        evolved = scipy.linalg.expm(l * t) @ x1
        predicted = np.exp(lam * t) * (x1 + t * x0)
        denom = np.linalg.norm(x1) + t * np.linalg.norm(x0)
        worst = max(worst, float(np.linalg.norm(evolved - predicted) / denom))
    return worst


def detect_limit_cycle(l: ArrayLike, tol: float = DEFAULT_MARGINAL_TOL) -> LimitCycleReport:
    """
    Look for undamped oscillating pairs +-i omega.

    An eigenvalue is marginal when |Re| < tol*||L|| and |Im| > tol*||L||. The
    state is a limit cycle iff such a pair exists and every other mode is a
    zero mode or decays with Re < -tol*||L||.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    l = as_matrix(l)
    threshold = tol * np.linalg.norm(l)
    eigvals = scipy.linalg.eigvals(l)

    marginal = [lam for lam in eigvals if abs(lam.real) < threshold and lam.imag > threshold]
    pairs = sorted((float(lam.imag), float(lam.real)) for lam in marginal)

    others = [lam for lam in eigvals if abs(lam.real) >= threshold]
    decaying = all(lam.real < -threshold for lam in others)
    is_cycle = bool(pairs) and decaying
    period = 2.0 * np.pi / pairs[0][0] if pairs else None
    return LimitCycleReport(marginal_pairs=pairs, is_limit_cycle=is_cycle, period=period)


def asymptotic_decompose(l: ArrayLike, rho0: ArrayLike,
                         tol: float = DEFAULT_MARGINAL_TOL) -> AsymptoticState:
    """
    Project rho0 onto the zero and marginal eigenmodes using left eigenvectors.

    Raises:
        IllConditionedProjection: if the slow-sector EP strength exceeds 1e8
    """
    l = as_matrix(l)
    rho0 = as_matrix(rho0)
    threshold = tol * np.linalg.norm(l)
    eigvals, left, right = scipy.linalg.eig(l, left=True, right=True)

    slow = np.flatnonzero(np.abs(eigvals.real) < threshold)
    if slow.size == 0:
        raise IllConditionedProjection("generator has no stationary or marginal modes")
    right_slow = right[:, slow]
    strength = ep_strength_of(right_slow)
    if strength > ILL_CONDITIONED:
        raise IllConditionedProjection(f"slow-sector EP strength {strength:.3e} exceeds 1e8")

    # Biorthogonal coefficients within the slow sector
    left_slow = left[:, slow]
    overlap = left_slow.conj().T @ right_slow
    coeffs = np.linalg.solve(overlap, left_slow.conj().T @ vectorize(rho0))

    d = rho0.shape[0]
    stationary = np.zeros((d, d), dtype=complex)
    components: List[Tuple[complex, np.ndarray]] = []
    for k, idx in enumerate(slow):
        amplitude = devectorize(coeffs[k] * right_slow[:, k])
        if abs(eigvals[idx].imag) <= threshold:
            stationary += amplitude
        else:
            components.append((complex(eigvals[idx]), amplitude))
    components.sort(key=lambda item: item[0].imag)
    return AsymptoticState(stationary=stationary, components=components)
