"""
Noise graphs and correlated dissipation rates.
A noise graph is a symmetric adjacency matrix A whose eigenmodes define the
collective dissipation channels of Gamma = gamma0 (I + c A).
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
REGULARITY_TOL = 1e-10
POSITIVITY_SLACK = 1e-12
ZERO_EIGVAL_TOL = 1e-12


class TooSmall(ValueError):
    """Graph family needs more sites."""


class NotSymmetric(ValueError):
    """Adjacency matrix is not square and symmetric."""


class PositivityViolated(ValueError):
    """Correlation strength makes Gamma indefinite."""


def _fix_column_phases(vecs: np.ndarray) -> np.ndarray:
    """Rotate every column so its first nonzero component is real-positive."""
    vecs = np.array(vecs, copy=True)
    for col in range(vecs.shape[1]):
        column = vecs[:, col]
        nonzero = np.flatnonzero(np.abs(column) > 1e-12)
        if nonzero.size == 0:
            continue
        lead = column[nonzero[0]]
        phase = lead / abs(lead)
        vecs[:, col] = column / phase
    if np.allclose(vecs.imag, 0.0, atol=1e-14):
        return vecs.real.copy()
    return vecs


@dataclass(frozen=True)
class NoiseGraph:
    """
    Symmetric weighted adjacency with its cached spectrum.

    Attributes:
        n: number of sites
        adjacency: symmetric real n x n matrix
        eigvals: adjacency eigenvalues, ascending
        eigvecs: orthonormal eigenvector columns matching eigvals
        regular_degree: common row sum k, or None when rows differ
        name: family label used in reports ("dimer", "cycle", "custom")
    """
    n: int
    adjacency: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    regular_degree: Optional[float] = None
    name: str = "custom"

    @property
    def lambda_min(self) -> float:
        return float(self.eigvals[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigvals[-1])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "eigvals": [float(x) for x in self.eigvals],
            "regular_degree": self.regular_degree,
        }


def _row_regularity(adjacency: np.ndarray) -> Optional[float]:
    sums = adjacency.sum(axis=1)
    if np.max(sums) - np.min(sums) > REGULARITY_TOL:
        return None
    degree = float(np.mean(sums))
    return float(round(degree)) if abs(degree - round(degree)) < REGULARITY_TOL else degree


def fourier_modes(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Complex Fourier modes of the n-site cycle.

    Returns:
        (momenta k_m = 2 pi m / n, U with U[j, m] = exp(i k_m j) / sqrt(n),
         eigenvalues 2 cos k_m)
    """
    if n < 3:
        raise TooSmall(f"cycle needs n >= 3, got {n}")
    momenta = 2.0 * np.pi * np.arange(n) / n
    sites = np.arange(n)
    modes = np.exp(1j * np.outer(sites, momenta)) / np.sqrt(n)
    return momenta, modes, 2.0 * np.cos(momenta)


def band_rate(gamma0: float, c: float, k: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Sector rate of the cycle at crystal momentum k: gamma0 (1 + 2c cos k)."""
    return gamma0 * (1.0 + 2.0 * c * np.cos(k))


def build_cycle(n: int) -> NoiseGraph:
    """
    Cycle graph C_n with periodic boundary conditions.

    Eigenvectors are the real cosine/sine combinations of the Fourier modes
    (fourier_modes gives the complex ones), ordered by ascending eigenvalue.
    """
    if n < 3:
        raise TooSmall(f"cycle needs n >= 3, got {n}")

    adjacency = np.zeros((n, n))
    for i in range(n):
        adjacency[i, (i + 1) % n] = 1.0
        adjacency[(i + 1) % n, i] = 1.0

    sites = np.arange(n)
    columns: List[Tuple[float, int, np.ndarray]] = []
    for m in range(n // 2 + 1):
        k = 2.0 * np.pi * m / n
        lam = 2.0 * np.cos(k)
        if m == 0:
            columns.append((lam, 0, np.ones(n) / np.sqrt(n)))
        elif 2 * m == n:
            columns.append((lam, 0, (-1.0) ** sites / np.sqrt(n)))
        else:
            columns.append((lam, 0, np.sqrt(2.0 / n) * np.cos(k * sites)))
            columns.append((lam, 1, np.sqrt(2.0 / n) * np.sin(k * sites)))

    # Stable ascending order; cosine before sine inside a degenerate pair
    columns.sort(key=lambda item: (round(item[0], 12), item[1]))
    eigvals = np.array([item[0] for item in columns])
    eigvecs = _fix_column_phases(np.column_stack([item[2] for item in columns]))

    return NoiseGraph(n=n, adjacency=adjacency, eigvals=eigvals, eigvecs=eigvecs,
                      regular_degree=2.0, name=f"cycle{n}")


def build_dimer() -> NoiseGraph:
    """Two sites joined by one edge: the degenerate limit of a cycle."""
    adjacency = np.array([[0.0, 1.0], [1.0, 0.0]])
    eigvecs = np.array([[1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(2.0)
    return NoiseGraph(n=2, adjacency=adjacency, eigvals=np.array([-1.0, 1.0]),
                      eigvecs=eigvecs, regular_degree=1.0, name="dimer")


def build_custom(adjacency: np.ndarray) -> NoiseGraph:
    """
    Arbitrary weighted graph from its adjacency matrix.

    Raises:
        NotSymmetric: if the matrix is not square or not symmetric to 1e-10.
    """
    adjacency = np.asarray(adjacency, dtype=float)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise NotSymmetric(f"adjacency must be square, got shape {adjacency.shape}")
    asymmetry = np.max(np.abs(adjacency - adjacency.T), initial=0.0)
    if asymmetry > SYMMETRY_TOL:
        raise NotSymmetric(f"adjacency asymmetric by {asymmetry:.3e}")

    adjacency = 0.5 * (adjacency + adjacency.T)
    eigvals, eigvecs = np.linalg.eigh(adjacency)
    return NoiseGraph(n=adjacency.shape[0], adjacency=adjacency, eigvals=eigvals,
                      eigvecs=_fix_column_phases(eigvecs),
                      regular_degree=_row_regularity(adjacency), name="custom")


def load_adjacency(path: Union[str, Path]) -> NoiseGraph:
    """Read a whitespace-separated adjacency matrix file into a NoiseGraph."""
    matrix = np.loadtxt(path, dtype=float, ndmin=2)
    logger.info(f"Loaded {matrix.shape[0]}x{matrix.shape[1]} adjacency from {path}")
    return build_custom(matrix)


def positivity_range(g: NoiseGraph) -> Tuple[float, float]:
    """
    Largest interval of c with 1 + c*lambda >= 0 for every adjacency eigenvalue.

    Unbounded ends are reported as -inf / +inf (e.g. both for A = 0).
    """
    lam_max = g.lambda_max
    lam_min = g.lambda_min
    c_min = -1.0 / lam_max if lam_max > ZERO_EIGVAL_TOL else -math.inf
    c_max = -1.0 / lam_min if lam_min < -ZERO_EIGVAL_TOL else math.inf
    return c_min, c_max


@dataclass(frozen=True)
class CorrelationModel:
    """Gamma = gamma0 (I + c A) on a noise graph."""
    gamma0: float
    c: float
    graph: NoiseGraph

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        worst = min(1.0 + self.c * self.graph.lambda_min, 1.0 + self.c * self.graph.lambda_max)
        if worst < -POSITIVITY_SLACK:
            c_min, c_max = positivity_range(self.graph)
            raise PositivityViolated(
                f"c={self.c} outside admissible range [{c_min}, {c_max}] for {self.graph.name}"
            )

    @property
    def gamma_matrix(self) -> np.ndarray:
        return self.gamma0 * (np.eye(self.graph.n) + self.c * self.graph.adjacency)

    @property
    def is_uncorrelated(self) -> bool:
        return self.c == 0.0

    def to_dict(self) -> dict:
        return {"gamma0": self.gamma0, "c": self.c, "graph": self.graph.to_dict()}


def sector_rates(m: CorrelationModel) -> np.ndarray:
    """Collective rates gamma0 (1 + c lambda_alpha), ordered like the eigenvalues."""
    return m.gamma0 * (1.0 + m.c * m.graph.eigvals)


def protected_modes(m: CorrelationModel, tol: float = 1e-8) -> List[int]:
    """Indices of channels whose rate falls below tol * gamma0."""
    rates = sector_rates(m)
    return [int(i) for i in np.flatnonzero(rates < tol * m.gamma0)]
