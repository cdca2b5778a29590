"""
Spectral diagnostics for Liouvillians.
Eigendecomposition, EP strength 1/sigma_min(V), single-linkage eigenvalue
clustering and the rank-nullity defectiveness test
    delta1 = dim ker(L - lambda), delta2 = dim ker((L - lambda)^2),
with a Jordan block present iff delta2 > delta1.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from opspace import ArrayLike, as_matrix, identity_vector
from settings import default_cluster_radius, default_rank_tol

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-300


class EigFailure(RuntimeError):
    """The eigensolver did not converge."""


class Cluster(NamedTuple):
    center: complex
    members: List[int]


class DefectResult(NamedTuple):
    delta1: int
    delta2: int
    defective: bool


@dataclass
class EigCluster:
    """Eigenvalues merged by single linkage, with their kernel dimensions."""
    center: complex
    members: List[int]
    delta1: int
    delta2: int
    defective: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": [self.center.real, self.center.imag],
            "members": list(self.members),
            "delta1": self.delta1,
            "delta2": self.delta2,
            "defective": self.defective,
        }


@dataclass
class SpectralReport:
    """
    Eigen-data of one generator.

    eigvecs columns have unit 2-norm; ep_strength is +inf when sigma_min
    underflows below 1e-300.
    """
    eigvals: np.ndarray
    eigvecs: np.ndarray
    sigma_min: float
    ep_strength: float
    clusters: List[EigCluster] = field(default_factory=list)
    radius: float = 0.0
    norm: float = 0.0

    @property
    def defective_any(self) -> bool:
        return any(cl.defective for cl in self.clusters)

    def nonzero_clusters(self) -> List[EigCluster]:
        return [cl for cl in self.clusters if abs(cl.center) > self.radius]

    def spectral_gap(self) -> float:
        """Smallest decay rate -Re(lambda) among eigenvalues off the zero cluster."""
        rates = [-self.eigvals[i].real for cl in self.nonzero_clusters() for i in cl.members]
        return float(min(rates)) if rates else float("inf")

    def n_marginal(self, tol: float) -> int:
        vals = self.eigvals
        return int(np.count_nonzero((np.abs(vals.real) < tol) & (np.abs(vals.imag) > tol)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eigvals": [[float(v.real), float(v.imag)] for v in self.eigvals],
            "sigma_min": self.sigma_min,
            "ep_strength": self.ep_strength,
            "clusters": [cl.to_dict() for cl in self.clusters],
        }


def normalize_columns(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=0)
    norms[norms == 0.0] = 1.0
    return v / norms


def ep_strength_of(v: ArrayLike) -> float:
    """1 / sigma_min of the column-normalized eigenvector matrix."""
    v = normalize_columns(as_matrix(v))
    sigma = scipy.linalg.svdvals(v)
    sigma_min = float(sigma.min()) if sigma.size else 1.0
    return float("inf") if sigma_min < SIGMA_FLOOR else 1.0 / sigma_min


def cluster_eigs(eigvals: np.ndarray, radius: float) -> List[Cluster]:
    """
    Single-linkage clustering of eigenvalues in the complex plane.

    Two eigenvalues share a cluster iff a chain of pairwise distances
    <= radius connects them. Clusters are ordered by their first member.
    """
    if radius <= 0:
        raise ValueError(f"cluster radius must be positive, got {radius}")
    eigvals = np.asarray(eigvals, dtype=complex).reshape(-1)
    n = eigvals.size
    if n == 0:
        return []

    points = np.column_stack([eigvals.real, eigvals.imag])
    pairs = np.array(sorted(cKDTree(points).query_pairs(r=radius)), dtype=int).reshape(-1, 2)
    adjacency = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(adjacency, directed=False)

    clusters: Dict[int, List[int]] = {}
    for idx, label in enumerate(labels):
        clusters.setdefault(int(label), []).append(idx)
    ordered = sorted(clusters.values(), key=lambda members: members[0])
    return [Cluster(complex(np.mean(eigvals[m])), m) for m in ordered]


def _semisimple_basis(l: np.ndarray, center: complex, size: int, rank_tol: float) -> Optional[np.ndarray]:
    """
    Orthonormal basis of ker(L - center) when it has the cluster's full
    dimension, else None.

    The eigenvectors LAPACK returns for a degenerate but diagonalizable
    eigenvalue are an arbitrary basis of the eigenspace and can be nearly
    parallel, so their contribution to sigma_min is replaced by this one.
    """
    _, sigma, vh = scipy.linalg.svd(l - center * np.eye(l.shape[0]))
    top = sigma.max(initial=0.0)
    if top == 0.0 or np.count_nonzero(sigma < rank_tol * top) < size:
        return None
    return vh[-size:].conj().T


def _kernel_dim(m: np.ndarray, rank_tol: float) -> int:
    sigma = scipy.linalg.svdvals(m)
    top = sigma.max(initial=0.0)
    if top == 0.0:
        return m.shape[1]
    return int(np.count_nonzero(sigma < rank_tol * top))


def defectiveness_test(l: ArrayLike, lam: complex, rank_tol: Optional[float] = None) -> DefectResult:
    """
    Kernel dimensions of the shifted generator and its square.

    Singular values below rank_tol * sigma_max count as zero.
    """
    rank_tol = default_rank_tol() if rank_tol is None else rank_tol
    if rank_tol <= 0:
        raise ValueError(f"rank_tol must be positive, got {rank_tol}")
    l = as_matrix(l)
    shifted = l - lam * np.eye(l.shape[0])
    delta1 = _kernel_dim(shifted, rank_tol)
    delta2 = _kernel_dim(shifted @ shifted, rank_tol)
    return DefectResult(delta1, delta2, delta2 > delta1)


def jordan_chain(l: ArrayLike, lam: complex, rank_tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    A length-two Jordan chain at lam: (L - lam) x0 = 0, (L - lam) x1 = x0.

    x1 is taken from ker((L - lam)^2) where (L - lam) is largest, and the
    pair is scaled so that ||x0|| = 1.
    """
    rank_tol = default_rank_tol() if rank_tol is None else rank_tol
    l = as_matrix(l)
    shifted = l - lam * np.eye(l.shape[0])
    squared = shifted @ shifted

    _, sigma, vh = scipy.linalg.svd(squared)
    top = sigma.max(initial=0.0)
    null_count = int(np.count_nonzero(sigma < rank_tol * top)) if top > 0 else len(sigma)
    if null_count == 0:
        raise ValueError(f"lambda={lam} is not an eigenvalue at rank_tol={rank_tol}")
    kernel2 = vh[-null_count:].conj().T

    # Direction inside ker((L-lam)^2) that (L-lam) does not annihilate
    _, _, wh = scipy.linalg.svd(shifted @ kernel2)
    x1 = kernel2 @ wh[0].conj()
    x0 = shifted @ x1
    scale = np.linalg.norm(x0)
    if scale == 0.0:
        raise ValueError(f"no Jordan chain at lambda={lam}")
    return x0 / scale, x1 / scale


def trace_preservation_residual(l: ArrayLike) -> float:
    """||vec(I)^dag L|| / ||L||_F; zero for trace-preserving generators."""
    l = as_matrix(l)
    norm = np.linalg.norm(l)
    if norm == 0.0:
        return 0.0
    d = int(round(np.sqrt(l.shape[0])))
    return float(np.linalg.norm(identity_vector(d).conj() @ l) / norm)


def traceless_block_check(l: ArrayLike) -> float:
    """
    ||(I - P) L P|| with P the projector onto vectorized traceless operators.

    (I - P) is rank one along vec(I)/sqrt(d), so the block reduces to the
    trace functional applied to L P.
    """
    l = as_matrix(l)
    d = int(round(np.sqrt(l.shape[0])))
    unit = identity_vector(d) / np.sqrt(d)
    projector = np.eye(l.shape[0]) - np.outer(unit, unit.conj())
    return float(np.linalg.norm(unit.conj() @ l @ projector))


def decompose(l: ArrayLike, rank_tol: Optional[float] = None,
              cluster_radius: Optional[float] = None,
              test_clusters: bool = True) -> SpectralReport:
    """
    Full non-Hermitian eigendecomposition with EP diagnostics.

    Args:
        l: square generator
        rank_tol: relative cutoff for the defectiveness test
        cluster_radius: absolute clustering radius; default 1e-6 * ||L||_F
        test_clusters: run the defectiveness test on clusters of size >= 2

    Raises:
        EigFailure: if LAPACK does not converge
    """
    l = as_matrix(l)
    if not np.all(np.isfinite(l)):
        raise ValueError("generator has non-finite entries")
    rank_tol = default_rank_tol() if rank_tol is None else rank_tol
    norm = float(np.linalg.norm(l))
    radius = cluster_radius if cluster_radius is not None else default_cluster_radius() * norm
    if radius <= 0:
        radius = np.finfo(float).tiny

    try:
        eigvals, eigvecs = scipy.linalg.eig(l)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigFailure(f"eigensolver failed: {exc}")

    eigvecs = normalize_columns(eigvecs)
    clusters = []
    for center, members in cluster_eigs(eigvals, radius):
        if len(members) > 1:
            basis = _semisimple_basis(l, center, len(members), rank_tol)
            if basis is not None:
                eigvecs[:, members] = basis
        if test_clusters and len(members) > 1:
            delta1, delta2, defective = defectiveness_test(l, center, rank_tol)
        else:
            # singleton: simple eigenvalue
            delta1, delta2, defective = 1, 1, False
        clusters.append(EigCluster(center, members, delta1, delta2, defective))

    sigma = scipy.linalg.svdvals(eigvecs)
    sigma_min = float(sigma.min())
    strength = float("inf") if sigma_min < SIGMA_FLOOR else 1.0 / sigma_min

    logger.debug(f"decompose: n={l.shape[0]} sigma_min={sigma_min:.3e} clusters={len(clusters)}")
    return SpectralReport(eigvals=eigvals, eigvecs=eigvecs, sigma_min=sigma_min,
                          ep_strength=strength, clusters=clusters, radius=radius, norm=norm)
