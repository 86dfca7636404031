"""Dense pure-state engine for up to five qubits.

Layout: subsystem 0 is the slowest-varying index of the Kronecker product,
so ``|a b c>`` lives at index ``4a + 2b + c``. Index 0 of every local
factor is the ``|u>`` (outcome +1) vector, index 1 is ``|u_perp>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_QUBITS = 5
NORM_TOL = 1e-12
IMPOSSIBLE_BRANCH = 1e-14
DEPENDENCE_TOL = 1e-10


class DimensionError(ValueError):
    pass


class ImpossibleBranchError(ValueError):
    """Projection onto a branch whose Born probability is numerically zero."""


class DegenerateInputError(ValueError):
    """Gram-Schmidt was handed linearly dependent vectors."""


def _num_qubits(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = _num_qubits(amps.size)
        if n > MAX_QUBITS:
            raise DimensionError(f"{n} qubits exceeds the limit of {MAX_QUBITS}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"state is not normalised (norm={norm:.3e})")
        amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, vec, normalize: bool = False) -> "PureState":
        vec = np.asarray(vec, dtype=complex)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm < IMPOSSIBLE_BRANCH:
                raise ValueError("cannot normalise the zero vector")
            vec = vec / norm
        return cls(vec)

    @classmethod
    def basis(cls, bits: Sequence[int]) -> "PureState":
        vec = np.zeros(2 ** len(bits), dtype=complex)
        vec[int("".join(str(int(b)) for b in bits), 2)] = 1.0
        return cls(vec)

    @property
    def n(self) -> int:
        return _num_qubits(self.amplitudes.size)

    def __repr__(self) -> str:
        return f"PureState(n={self.n}, amplitudes={np.round(self.amplitudes, 6)})"


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Square operator on ``k`` qubits, optionally certified unitary or projector."""

    matrix: np.ndarray
    unitary: bool = False
    projector: bool = False

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("operator matrix must be square")
        _num_qubits(mat.shape[0])
        eye = np.eye(mat.shape[0])
        if self.unitary and not np.allclose(mat.conj().T @ mat, eye, atol=NORM_TOL, rtol=0):
            raise ValueError("matrix flagged unitary is not unitary")
        if self.projector and not (
            np.allclose(mat @ mat, mat, atol=NORM_TOL, rtol=0)
            and np.allclose(mat.conj().T, mat, atol=NORM_TOL, rtol=0)
        ):
            raise ValueError("matrix flagged projector is not an orthogonal projector")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def arity(self) -> int:
        return _num_qubits(self.matrix.shape[0])

    @classmethod
    def ket_projector(cls, ket) -> "LinearOperator":
        vec = ket.amplitudes if isinstance(ket, PureState) else np.asarray(ket, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(np.outer(vec, vec.conj()), projector=True)

    def complement(self) -> "LinearOperator":
        if not self.projector:
            raise ValueError("complement is defined for projectors only")
        return LinearOperator(np.eye(self.matrix.shape[0]) - self.matrix, projector=True)

    @classmethod
    def identity(cls, k: int = 1) -> "LinearOperator":
        return cls(np.eye(2**k), unitary=True, projector=True)


@dataclass(frozen=True, eq=False)
class LocalBasis:
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        plus = np.asarray(self.plus, dtype=complex).reshape(2)
        minus = np.asarray(self.minus, dtype=complex).reshape(2)
        gram = np.array([[np.vdot(a, b) for b in (plus, minus)] for a in (plus, minus)])
        if not np.allclose(gram, np.eye(2), atol=NORM_TOL, rtol=0):
            raise ValueError("basis vectors are not orthonormal")
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    def vector(self, outcome: int) -> np.ndarray:
        return self.plus if outcome == 1 else self.minus


def tensor(a: PureState, b: PureState) -> PureState:
    if a.n + b.n > MAX_QUBITS:
        raise DimensionError(f"{a.n}+{b.n} qubits exceeds the limit of {MAX_QUBITS}")
    return PureState(np.kron(a.amplitudes, b.amplitudes))


def _check_targets(targets: Sequence[int], n: int, arity: int) -> list[int]:
    targets = [int(t) for t in targets]
    if len(targets) != arity:
        raise DimensionError(f"operator acts on {arity} qubits, got {len(targets)} targets")
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate targets {targets}")
    if any(t < 0 or t >= n for t in targets):
        raise ValueError(f"targets {targets} out of range for {n} qubits")
    return targets


def _act(matrix: np.ndarray, targets: list[int], amps: np.ndarray, n: int) -> np.ndarray:
    k = len(targets)
    psi = amps.reshape([2] * n)
    op = matrix.reshape([2] * (2 * k))
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), targets))
    # tensordot puts the operator's output legs first
    return np.moveaxis(out, list(range(k)), targets).reshape(-1)


def apply(op: LinearOperator, targets: Sequence[int], s: PureState) -> PureState:
    """Apply a unitary on the listed subsystems (identity elsewhere).

    Non-unitary operators are rejected; projections go through :func:`collapse`.
    """
    if not op.unitary:
        raise ValueError("apply() takes unitaries; use collapse() for projectors")
    targets = _check_targets(targets, s.n, op.arity)
    out = _act(op.matrix, targets, s.amplitudes, s.n)
    return PureState(out / np.linalg.norm(out))


def project(op: LinearOperator, targets: Sequence[int], s: PureState) -> np.ndarray:
    """Unnormalised ``P|s>``; used where the branch amplitude itself matters."""
    targets = _check_targets(targets, s.n, op.arity)
    return _act(op.matrix, targets, s.amplitudes, s.n)


def collapse(proj: LinearOperator, targets: Sequence[int], s: PureState) -> tuple[PureState, float]:
    if not proj.projector:
        raise ValueError("collapse() needs a projector")
    branch = project(proj, targets, s)
    prob = float(np.vdot(branch, branch).real)
    if prob < IMPOSSIBLE_BRANCH:
        raise ImpossibleBranchError(f"branch probability {prob:.3e} is zero")
    return PureState(branch / np.sqrt(prob)), prob


def measure_local(
    s: PureState, subsystem: int, basis: LocalBasis, rng: np.random.Generator
) -> tuple[int, PureState, float]:
    """Born-sample a +1/-1 measurement of one qubit in ``basis``."""
    (subsystem,) = _check_targets([subsystem], s.n, 1)
    # amplitudes along each basis vector, without building full projectors
    psi = np.moveaxis(s.amplitudes.reshape([2] * s.n), subsystem, 0).reshape(2, -1)
    vec = {1: basis.plus, -1: basis.minus}
    comp = {o: vec[o].conj() @ psi for o in vec}
    p_plus = min(max(float(np.vdot(comp[1], comp[1]).real), 0.0), 1.0)
    outcome = 1 if rng.random() < p_plus else -1
    prob = p_plus if outcome == 1 else float(np.vdot(comp[-1], comp[-1]).real)
    if prob < IMPOSSIBLE_BRANCH:
        raise ImpossibleBranchError(f"branch probability {prob:.3e} is zero")
    post = np.outer(vec[outcome], comp[outcome] / np.sqrt(prob)).reshape([2] * s.n)
    return outcome, PureState(np.moveaxis(post, 0, subsystem).reshape(-1)), prob


def fidelity(a: PureState, b: PureState) -> float:
    if a.amplitudes.size != b.amplitudes.size:
        raise DimensionError("fidelity of states with different dimensions")
    return min(float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2), 1.0)


def gram_schmidt(vectors: Sequence[np.ndarray], tol: float = DEPENDENCE_TOL) -> list[np.ndarray]:
    """Orthonormalise ``vectors`` in order (modified Gram-Schmidt, one re-pass)."""
    basis: list[np.ndarray] = []
    for i, v in enumerate(vectors):
        w = np.array(v, dtype=complex).reshape(-1)
        for _ in range(2):
            for e in basis:
                w = w - np.vdot(e, w) * e
        norm = np.linalg.norm(w)
        if norm < tol:
            raise DegenerateInputError(f"vector {i} is linearly dependent on its predecessors")
        basis.append(w / norm)
    return basis
