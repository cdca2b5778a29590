"""
Lindblad Liouvillian assembly with graph-correlated dissipation.

The dissipator of a LindbladModel is
    sum_ij Gamma_ij (L_i rho L_j^dag - 1/2 {L_j^dag L_i, rho}),  Gamma = gamma0 (I + c A),
built either pairwise or through the collective channels that diagonalize Gamma.
All superoperators use column stacking (see opspace).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import List, Sequence, Tuple

import numpy as np

from noisegraph import CorrelationModel, NoiseGraph, sector_rates
from opspace import (
    DimMismatch,
    QOperator,
    as_matrix,
    commutator_superop,
    is_hermitian,
    superop_from_maps,
)

logger = logging.getLogger(__name__)

SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


class JumpKind(str, Enum):
    DEPHASING = "dephasing"
    RELAXATION = "relaxation"
    CUSTOM = "custom"


def site_operator(op: np.ndarray, site: int, n: int) -> np.ndarray:
    """Place a single-qubit operator on `site` of an n-qubit register (site 0 leftmost)."""
    if not 0 <= site < n:
        raise DimMismatch(f"site {site} outside register of {n} qubits")
    factors = [np.eye(2, dtype=complex)] * n
    factors[site] = np.asarray(op, dtype=complex)
    return reduce(np.kron, factors)


@dataclass(frozen=True)
class JumpFamily:
    """One local jump operator per site, all of the same dimension."""
    kind: JumpKind
    ops: Tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(as_matrix(op) for op in self.ops)
        if not ops:
            raise DimMismatch("jump family needs at least one operator")
        shapes = {op.shape for op in ops}
        if len(shapes) != 1:
            raise DimMismatch(f"jump operators have mixed shapes {sorted(shapes)}")
        if self.kind == JumpKind.DEPHASING and not all(is_hermitian(op) for op in ops):
            raise ValueError("dephasing jump operators must be Hermitian")
        if self.kind == JumpKind.RELAXATION and not all(np.allclose(op @ op, 0.0) for op in ops):
            raise ValueError("relaxation jump operators must square to zero")
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        return self.ops[0].shape[0]

    @classmethod
    def dephasing(cls, n: int) -> "JumpFamily":
        """L_j = sigma_j^z on an n-qubit register."""
        return cls(JumpKind.DEPHASING, tuple(site_operator(SIGMA_Z, j, n) for j in range(n)))

    @classmethod
    def relaxation(cls, n: int) -> "JumpFamily":
        """L_j = sigma_j^- on an n-qubit register."""
        return cls(JumpKind.RELAXATION, tuple(site_operator(SIGMA_MINUS, j, n) for j in range(n)))

    @classmethod
    def custom(cls, ops: Sequence[np.ndarray]) -> "JumpFamily":
        return cls(JumpKind.CUSTOM, tuple(ops))


def hopping_hamiltonian(graph: NoiseGraph, j: float) -> np.ndarray:
    """Exchange along the graph edges: J sum_{i<k} A_ik (s+_i s-_k + s-_i s+_k)."""
    n = graph.n
    h = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for i in range(n):
        for k in range(i + 1, n):
            weight = graph.adjacency[i, k]
            if weight == 0.0:
                continue
            flip = site_operator(SIGMA_PLUS, i, n) @ site_operator(SIGMA_MINUS, k, n)
            h += weight * (flip + flip.conj().T)
    return j * h


def detuning_hamiltonian(n: int, delta: float) -> np.ndarray:
    """Staggered site energies (delta/2) sum_j (-1)^j sigma_j^z."""
    h = sum(((-1) ** j) * site_operator(SIGMA_Z, j, n) for j in range(n))
    return 0.5 * delta * h


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian, local jump family and the correlation model mixing the jumps."""
    hamiltonian: QOperator
    jumps: JumpFamily
    correlation: CorrelationModel

    def __post_init__(self):
        h = self.hamiltonian
        if not isinstance(h, QOperator):
            h = QOperator(np.asarray(h, dtype=complex))
            object.__setattr__(self, "hamiltonian", h)
        if not is_hermitian(h.entries):
            raise ValueError("hamiltonian is not Hermitian to 1e-12")
        if h.dim != self.jumps.dim:
            raise DimMismatch(f"hamiltonian dim {h.dim} vs jump dim {self.jumps.dim}")
        if len(self.jumps.ops) != self.correlation.graph.n:
            raise DimMismatch(
                f"{len(self.jumps.ops)} jump operators for a {self.correlation.graph.n}-site graph"
            )

    @property
    def d(self) -> int:
        return self.hamiltonian.dim

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "jumps": self.jumps.kind.value,
            "correlation": self.correlation.to_dict(),
        }


def collective_jumps(model: LindbladModel) -> List[Tuple[float, np.ndarray]]:
    """
    Collective channels (gamma_alpha, L~_alpha) diagonalizing Gamma.

    L~_alpha = sum_j U[j, alpha] L_j with U the eigenvector columns of the
    adjacency. At c = 0 every orthonormal basis diagonalizes Gamma, so the site
    operators are returned unchanged.
    """
    corr = model.correlation
    if corr.is_uncorrelated:
        return [(corr.gamma0, op) for op in model.jumps.ops]

    rates = sector_rates(corr)
    stacked = np.stack(model.jumps.ops)
    channels = np.einsum("ja,jkl->akl", corr.graph.eigvecs, stacked)
    return [(float(rate), channels[a]) for a, rate in enumerate(rates)]


def _dissipator(rate: float, op_i: np.ndarray, op_j: np.ndarray) -> np.ndarray:
    """rate * (L_i . L_j^dag - 1/2 {L_j^dag L_i, .}) as a superoperator."""
    d = op_i.shape[0]
    eye = np.eye(d, dtype=complex)
    product = op_j.conj().T @ op_i
    return rate * (
        superop_from_maps(op_i, op_j.conj().T)
        - 0.5 * np.kron(eye, product)
        - 0.5 * np.kron(product.T, eye)
    )


def assemble_liouvillian(model: LindbladModel) -> np.ndarray:
    """Liouvillian from the collective-channel form of the dissipator."""
    generator = commutator_superop(model.hamiltonian.entries)
    for rate, op in collective_jumps(model):
        if rate == 0.0:
            continue
        generator = generator + _dissipator(rate, op, op)
    return generator


def assemble_pairwise(model: LindbladModel) -> np.ndarray:
    """Liouvillian from the pairwise Gamma_ij form; equals assemble_liouvillian."""
    gamma = model.correlation.gamma_matrix
    ops = model.jumps.ops
    generator = commutator_superop(model.hamiltonian.entries)
    for i, op_i in enumerate(ops):
        for j, op_j in enumerate(ops):
            if gamma[i, j] == 0.0:
                continue
            generator = generator + _dissipator(gamma[i, j], op_i, op_j)
    return generator


def adjoint_liouvillian(model: LindbladModel) -> np.ndarray:
    """Heisenberg-picture generator O -> i[H, O] + sum_a g_a (L^dag O L - 1/2 {L^dag L, O})."""
    h = model.hamiltonian.entries
    d = model.d
    eye = np.eye(d, dtype=complex)
    generator = -commutator_superop(h)
    for rate, op in collective_jumps(model):
        if rate == 0.0:
            continue
        product = op.conj().T @ op
        generator = generator + rate * (
            superop_from_maps(op.conj().T, op)
            - 0.5 * np.kron(eye, product)
            - 0.5 * np.kron(product.T, eye)
        )
    return generator
