"""
Two-site reference models.

Closed-form reduced generators, eigenvalues and EP conditions for the
correlated dimer, together with the calibrated lift to the full two-qubit
Liouvillian and a projection oracle that checks one against the other.

Lift conventions (site 0 is the leftmost qubit, |ab> = |a> kron |b>):

  dephasing   H = J (s+_1 s-_2 + s-_1 s+_2), L_j = sigma^z_j, gamma0 = gamma / 2.
              Inside the single-excitation manifold the dissipator is diagonal
              on |01>, |10> and H couples them, so with
                  Y = -i|01><10| + i|10><01|,   Z = |01><01| - |10><10|
              the adjoint generator closes on {Y, Z} as
                  [[-2 gamma (1-c), -2J], [2J, 0]].

  relaxation  H = (delta/2)(sigma^z_1 - sigma^z_2), L_j = sigma^-_j, gamma0 = gamma.
              The exactly closed two-dimensional adjoint block is
                  O1 = |11><S|,  O2 = -i|11><A|,   S, A = (|01> +- |10>)/sqrt(2)
              with generator [[-gamma (3+c)/2, delta], [-delta, -gamma (3-c)/2]]
              and an EP where the collective decay imbalance gamma |c| / 2 equals |delta|.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lindblad import (
    JumpFamily,
    JumpKind,
    LindbladModel,
    adjoint_liouvillian,
    assemble_liouvillian,
    detuning_hamiltonian,
    hopping_hamiltonian,
)
from noisegraph import CorrelationModel, build_dimer
from opspace import QOperator, vectorize

logger = logging.getLogger(__name__)

CLOSURE_TOL = 1e-10

KET = {label: np.eye(4, dtype=complex)[idx] for idx, label in enumerate(("00", "01", "10", "11"))}
KET_S = (KET["01"] + KET["10"]) / np.sqrt(2.0)
KET_A = (KET["01"] - KET["10"]) / np.sqrt(2.0)


class WrongChannel(ValueError):
    """Operation called for the other dissipation channel."""


class ClosureViolation(RuntimeError):
    """The projected operator pair is not invariant under the adjoint generator."""


@dataclass(frozen=True)
class DimerParams:
    """
    Dimer parameters.

    Attributes:
        gamma: base dissipation rate of the reduced generators
        c: correlation strength, |c| <= 1
        j: tunneling amplitude (dephasing model)
        delta: site-energy imbalance (relaxation model)
        channel: JumpKind.DEPHASING or JumpKind.RELAXATION
    """
    gamma: float
    c: float
    j: float = 0.0
    delta: float = 0.0
    channel: JumpKind = JumpKind.DEPHASING

    def __post_init__(self):
        object.__setattr__(self, "channel", JumpKind(self.channel))
        if self.channel == JumpKind.CUSTOM:
            raise WrongChannel("dimer models are dephasing or relaxation only")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if abs(self.c) > 1.0 + 1e-12:
            raise ValueError(f"|c| must be <= 1, got {self.c}")

    def to_dict(self) -> Dict[str, Any]:
        return {"gamma": self.gamma, "c": self.c, "j": self.j,
                "delta": self.delta, "channel": self.channel.value}


@dataclass(frozen=True)
class ReducedGenerator:
    """Real 2x2 generator acting on the coordinates named in basis_labels."""
    matrix: np.ndarray
    basis_labels: Tuple[str, str] = ("y", "z")

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (2, 2) or not np.all(np.isfinite(matrix)):
            raise ValueError("reduced generator must be a finite 2x2 matrix")
        object.__setattr__(self, "matrix", matrix)

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


def _require(p: DimerParams, channel: JumpKind):
    if p.channel != channel:
        raise WrongChannel(f"expected {channel.value} parameters, got {p.channel.value}")


def _branch_pair(center: float, half_root: complex) -> Tuple[complex, complex]:
    return complex(center + half_root), complex(center - half_root)


def reduced_relaxation(p: DimerParams) -> ReducedGenerator:
    """
    [[0, -delta], [delta, -gamma (1 - 2c)]] on (y, z).

    The off-diagonal signs are antisymmetric; with equal signs the
    eigenvalues would not match relaxation_eigs.
    """
    _require(p, JumpKind.RELAXATION)
    matrix = [[0.0, -p.delta], [p.delta, -p.gamma * (1.0 - 2.0 * p.c)]]
    return ReducedGenerator(np.array(matrix), ("y: Im rho_SA", "z: rho_SS - rho_AA"))


def reduced_dephasing(p: DimerParams) -> ReducedGenerator:
    """[[-2 gamma (1 - c), -2J], [2J, 0]] on (y, z)."""
    _require(p, JumpKind.DEPHASING)
    matrix = [[-2.0 * p.gamma * (1.0 - p.c), -2.0 * p.j], [2.0 * p.j, 0.0]]
    return ReducedGenerator(np.array(matrix), ("y: <Y>", "z: <Z>"))


def relaxation_eigs(p: DimerParams) -> Tuple[complex, complex]:
    """lambda_+- = -g/2 +- sqrt(g^2 - 4 delta^2)/2 with g = gamma (1 - 2c)."""
    _require(p, JumpKind.RELAXATION)
    g = p.gamma * (1.0 - 2.0 * p.c)
    return _branch_pair(-0.5 * g, 0.5 * np.sqrt(complex(g * g - 4.0 * p.delta ** 2)))


def dephasing_eigs(p: DimerParams) -> Tuple[complex, complex]:
    """lambda_+- = -a +- sqrt(a^2 - 4 J^2) with a = gamma (1 - c)."""
    _require(p, JumpKind.DEPHASING)
    a = p.gamma * (1.0 - p.c)
    return _branch_pair(-a, np.sqrt(complex(a * a - 4.0 * p.j ** 2)))


def collective_relaxation_block(p: DimerParams) -> ReducedGenerator:
    """Closed adjoint block of the relaxation lift on (|11><S|, -i|11><A|)."""
    _require(p, JumpKind.RELAXATION)
    matrix = [[-0.5 * p.gamma * (3.0 + p.c), p.delta],
              [-p.delta, -0.5 * p.gamma * (3.0 - p.c)]]
    return ReducedGenerator(np.array(matrix), ("|11><S|", "-i|11><A|"))


def collective_relaxation_eigs(p: DimerParams) -> Tuple[complex, complex]:
    """-3 gamma / 2 +- sqrt(gamma^2 c^2 - 4 delta^2) / 2."""
    _require(p, JumpKind.RELAXATION)
    disc = (p.gamma * p.c) ** 2 - 4.0 * p.delta ** 2
    return _branch_pair(-1.5 * p.gamma, 0.5 * np.sqrt(complex(disc)))


def ep_condition_relaxation(gamma: float, c: float) -> float:
    """Threshold |delta| = gamma |1 - 2c| / 2 of the (y, z) reduction."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 0.5 * gamma * abs(1.0 - 2.0 * c)


def ep_condition_relaxation_imbalance(gamma: float, c: float) -> float:
    """Threshold |delta| = gamma |c| / 2 of the closed collective-decay block."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 0.5 * gamma * abs(c)


def ep_condition_dephasing(gamma: float, j: float) -> float:
    """Discriminant root c_crit = 1 - 2|J|/gamma (may lie outside [-1, 1])."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 1.0 - 2.0 * abs(j) / gamma


def ep_condition_dephasing_alt(gamma: float, j: float) -> float:
    """The competing seam formula c_crit = 1 - |J|/gamma."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 1.0 - abs(j) / gamma


def dephasing_seam_in_range(gamma: float, j: float) -> bool:
    return -1.0 <= ep_condition_dephasing(gamma, j) <= 1.0


def dimer_model(p: DimerParams) -> LindbladModel:
    """Calibrated two-qubit lift of the dimer parameters."""
    graph = build_dimer()
    if p.channel == JumpKind.DEPHASING:
        if p.delta != 0.0:
            logger.debug("dephasing dimer ignores delta")
        corr = CorrelationModel(gamma0=0.5 * p.gamma, c=p.c, graph=graph)
        return LindbladModel(QOperator(hopping_hamiltonian(graph, p.j), hermitian=True),
                             JumpFamily.dephasing(2), corr)

    if p.j != 0.0:
        logger.debug("relaxation dimer ignores j")
    corr = CorrelationModel(gamma0=p.gamma, c=p.c, graph=graph)
    return LindbladModel(QOperator(detuning_hamiltonian(2, p.delta), hermitian=True),
                         JumpFamily.relaxation(2), corr)


def full_dimer_liouvillian(p: DimerParams) -> np.ndarray:
    """16 x 16 Liouvillian of the calibrated lift."""
    return assemble_liouvillian(dimer_model(p))


def dephasing_basis() -> List[np.ndarray]:
    y = -1j * np.outer(KET["01"], KET["10"]) + 1j * np.outer(KET["10"], KET["01"])
    z = np.outer(KET["01"], KET["01"]) - np.outer(KET["10"], KET["10"])
    return [y, z]


def relaxation_basis() -> List[np.ndarray]:
    return [np.outer(KET["11"], KET_S.conj()), -1j * np.outer(KET["11"], KET_A.conj())]


def yz_relaxation_basis() -> List[np.ndarray]:
    """Y = 2 Im(|S><A|), Z = |S><S| - |A><A| in the symmetric/antisymmetric frame."""
    sa = np.outer(KET_S, KET_A.conj())
    y = (sa - sa.conj().T) / 1j
    z = np.outer(KET_S, KET_S.conj()) - np.outer(KET_A, KET_A.conj())
    return [y, z]


def project_adjoint(adjoint: np.ndarray, basis_ops: Sequence[np.ndarray]) -> Tuple[np.ndarray, float]:
    """
    Restrict a Heisenberg generator to span(basis_ops).

    Returns:
        (R, leakage) with adjoint[O_i] ~ sum_j R[i, j] O_j, and leakage the
        relative norm of the component outside the span.
    """
    basis = np.column_stack([vectorize(op) for op in basis_ops])
    image = adjoint @ basis
    coeffs, *_ = np.linalg.lstsq(basis, image, rcond=None)
    leakage = np.linalg.norm(image - basis @ coeffs) / np.linalg.norm(basis)
    return coeffs.T, float(leakage)


@dataclass
class ReductionReport:
    channel: str
    basis_labels: Tuple[str, str]
    projected: np.ndarray
    reference: np.ndarray
    max_deviation: float
    leakage: float
    yz_leakage: Optional[float] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        projected = self.projected
        return {
            "channel": self.channel,
            "params": self.params,
            "basis": list(self.basis_labels),
            "projected_real": projected.real.tolist(),
            "projected_imag": projected.imag.tolist(),
            "reference": self.reference.tolist(),
            "max_deviation": self.max_deviation,
            "leakage": self.leakage,
            "yz_leakage": self.yz_leakage,
        }


def validate_reduction(p: DimerParams, model: Optional[LindbladModel] = None,
                       tol: float = CLOSURE_TOL) -> ReductionReport:
    """
    Project the adjoint Liouvillian onto the channel's reduced operator pair
    and compare with the closed-form generator entrywise.

    Args:
        p: dimer parameters (fix the reference matrix)
        model: lift to test; defaults to dimer_model(p)
        tol: admissible leakage out of the two-dimensional span

    Raises:
        ClosureViolation: if the pair is not invariant to within tol
    """
    model = model or dimer_model(p)
    adjoint = adjoint_liouvillian(model)

    yz_leakage = None
    if p.channel == JumpKind.DEPHASING:
        basis = dephasing_basis()
        reference = reduced_dephasing(p)
    else:
        basis = relaxation_basis()
        reference = collective_relaxation_block(p)
        _, yz_leakage = project_adjoint(adjoint, yz_relaxation_basis())

    projected, leakage = project_adjoint(adjoint, basis)
    if leakage > tol:
        raise ClosureViolation(
            f"{p.channel.value} pair leaks out of its span: {leakage:.3e} > {tol:.1e}"
        )

    deviation = float(np.max(np.abs(projected - reference.matrix)))
    logger.info(f"{p.channel.value} reduction: deviation={deviation:.3e} leakage={leakage:.3e}")
    return ReductionReport(channel=p.channel.value, basis_labels=reference.basis_labels,
                           projected=projected, reference=reference.matrix,
                           max_deviation=deviation, leakage=leakage,
                           yz_leakage=yz_leakage, params=p.to_dict())
