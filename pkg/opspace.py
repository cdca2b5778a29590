"""
Operator-space core.
Column-stacking vectorization, Kronecker superoperator builders, the
Hilbert-Schmidt inner product and Hermiticity/density checks. Every
superoperator formula elsewhere in epscope assumes the column-stacking
convention fixed here: vec(A X B) = (B^T kron A) vec(X).
"""

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class NonSquareLength(ValueError):
    """Vector length is not a perfect square."""


class DimMismatch(ValueError):
    """Operands have incompatible dimensions."""


def _square_side(n: int) -> int:
    side = math.isqrt(n)
    if side * side != n:
        raise NonSquareLength(f"length {n} is not a perfect square")
    return side


@dataclass(frozen=True)
class QOperator:
    """
    Dense d x d Hilbert-space operator.

    The hermitian/density flags are advisory: they are checked once on
    construction (tolerance 1e-12) and never enforced afterwards.
    """
    entries: np.ndarray
    hermitian: bool = False
    density: bool = False

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimMismatch(f"operator must be square, got shape {arr.shape}")
        object.__setattr__(self, "entries", arr)
        if self.hermitian and not is_hermitian(arr):
            raise ValueError("operator flagged hermitian is not Hermitian to 1e-12")
        if self.density and not is_density(arr):
            raise ValueError("operator flagged density is not a valid density matrix")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class OpVector:
    """Vectorized operator |X>> of length d^2."""
    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=complex).reshape(-1)
        _square_side(arr.size)
        object.__setattr__(self, "entries", arr)

    @property
    def dim2(self) -> int:
        return self.entries.size

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class Superoperator:
    """Dense d^2 x d^2 generator acting on vectorized operators."""
    entries: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimMismatch(f"superoperator must be square, got shape {arr.shape}")
        _square_side(arr.shape[0])
        object.__setattr__(self, "entries", arr)

    @property
    def dim2(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return _square_side(self.dim2)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


ArrayLike = Union[np.ndarray, QOperator, OpVector, Superoperator]


def as_matrix(x: ArrayLike) -> np.ndarray:
    """Return the complex ndarray behind any opspace type (or an ndarray)."""
    if isinstance(x, (QOperator, OpVector, Superoperator)):
        return x.entries
    return np.asarray(x, dtype=complex)


def vectorize(op: ArrayLike) -> np.ndarray:
    """Column-stack a d x d operator into a length d^2 vector."""
    return as_matrix(op).reshape(-1, order="F")


def devectorize(v: ArrayLike) -> np.ndarray:
    """
    Inverse of vectorize.

    Raises:
        NonSquareLength: if the vector length has no integer square root.
    """
    flat = as_matrix(v).reshape(-1)
    d = _square_side(flat.size)
    return flat.reshape((d, d), order="F")


def left_mult_superop(a: ArrayLike) -> np.ndarray:
    """Superoperator of X -> A X, i.e. I kron A."""
    a = as_matrix(a)
    return np.kron(np.eye(a.shape[0]), a)


def right_mult_superop(b: ArrayLike) -> np.ndarray:
    """Superoperator of X -> X B, i.e. B^T kron I."""
    b = as_matrix(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def superop_from_maps(left: ArrayLike, right: ArrayLike) -> np.ndarray:
    """Superoperator of X -> left X right, i.e. right^T kron left."""
    left = as_matrix(left)
    right = as_matrix(right)
    if left.shape != right.shape:
        raise DimMismatch(f"shape {left.shape} vs {right.shape}")
    return np.kron(right.T, left)


def commutator_superop(h: ArrayLike) -> np.ndarray:
    """Coherent part -i[H, .] of a Lindblad generator."""
    return -1j * (left_mult_superop(h) - right_mult_superop(h))


def hs_inner(a: ArrayLike, b: ArrayLike) -> complex:
    """Hilbert-Schmidt inner product Tr(a^dagger b)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimMismatch(f"shape {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def identity_vector(d: int) -> np.ndarray:
    """vec(I_d), the trace functional <<I|."""
    return vectorize(np.eye(d, dtype=complex))


def is_hermitian(op: ArrayLike, tol: float = 1e-12) -> bool:
    arr = as_matrix(op)
    return bool(np.max(np.abs(arr - arr.conj().T), initial=0.0) < tol)


def is_density(op: ArrayLike, tol: float = 1e-12) -> bool:
    """Hermitian, unit trace and min eigenvalue >= -1e-10."""
    arr = as_matrix(op)
    if not is_hermitian(arr, max(tol, 1e-10)):
        return False
    if abs(np.trace(arr) - 1.0) > tol:
        return False
    hermitian_part = 0.5 * (arr + arr.conj().T)
    return bool(np.linalg.eigvalsh(hermitian_part).min() >= -1e-10)
