"""Hardy-state construction for a choice of local observables.

Each party measures either ``U`` (eigenbasis {|u>, |u_perp>}) or ``D``, where

    |d>      = alpha |u> + beta |u_perp>
    |d_perp> = beta* |u> - alpha* |u_perp>

Outcome +1 is the first vector of a basis, -1 the second.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np
from scipy.optimize import minimize_scalar

from .qcore import (
    DegenerateInputError,
    LinearOperator,
    LocalBasis,
    PureState,
    apply,
    collapse,
    gram_schmidt,
    tensor,
)

SETTINGS = ("U", "D")
OUTCOMES = (1, -1)
ALPHA_MARGIN = 1e-9

# Golden-ratio optimum |alpha|^2 = (sqrt5 - 1)/2
ALPHA_OPT = math.sqrt((math.sqrt(5) - 1) / 2)
Q_MAX = (5 * math.sqrt(5) - 11) / 2

U_KET = np.array([1, 0], dtype=complex)
U_PERP_KET = np.array([0, 1], dtype=complex)
U_BASIS = LocalBasis(U_KET, U_PERP_KET)


class InvalidObservableError(ValueError):
    pass


@dataclass(frozen=True)
class ObservablePair:
    """``alpha = <u|d>``, ``beta = <u_perp|d>`` for one party."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-12:
            raise InvalidObservableError(f"|alpha|^2 + |beta|^2 != 1 for ({a}, {b})")
        if not (ALPHA_MARGIN < abs(a) < 1 - ALPHA_MARGIN):
            raise InvalidObservableError(f"|alpha| = {abs(a)} must lie strictly inside (0, 1)")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def real(cls, alpha: float) -> "ObservablePair":
        if not (0 < abs(alpha) < 1):
            raise InvalidObservableError(f"alpha = {alpha} must lie strictly inside (0, 1)")
        return cls(alpha, math.sqrt(1 - alpha * alpha))

    @property
    def d(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def d_perp(self) -> np.ndarray:
        return np.array([self.beta.conjugate(), -self.alpha.conjugate()], dtype=complex)

    @property
    def d_basis(self) -> LocalBasis:
        return LocalBasis(self.d, self.d_perp)

    def basis(self, setting: str) -> LocalBasis:
        return U_BASIS if setting == "U" else self.d_basis

    @property
    def relabel(self) -> np.ndarray:
        """Unitary sending |u> -> |d>, |u_perp> -> |d_perp>."""
        return np.column_stack([self.d, self.d_perp])


def q_value(pair1: ObservablePair, pair2: ObservablePair) -> float:
    """Closed-form P(+1,+1|U,U) of the Hardy state."""
    a2 = abs(pair1.alpha * pair2.alpha) ** 2
    b2 = abs(pair1.beta * pair2.beta) ** 2
    return a2 * b2 / (1 - a2)


def _q_symmetric(a: float) -> float:
    a2 = a * a
    return a2 * a2 * (1 - a2) ** 2 / (1 - a2 * a2)


def q_max_search() -> tuple[float, float]:
    """Maximise q over real, equal alphas; returns ``(alpha_opt, q_max)``."""
    res = minimize_scalar(
        lambda a: -_q_symmetric(a),
        bounds=(1e-6, 1 - 1e-6),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(-res.fun)


def symmetric_coefficients(pair: ObservablePair) -> tuple[complex, complex, complex]:
    """(x00, x01, x11) of the Hardy state in the U basis when both parties share ``pair``."""
    a, b = pair.alpha, pair.beta
    s = math.sqrt(1 - abs(a) ** 4)
    x00 = abs(a * b) ** 2 / s
    x01 = -a.conjugate() * b * abs(a) ** 2 / s
    x11 = -(a.conjugate() ** 2) * b**2 * s / abs(a * b) ** 2
    return complex(x00), complex(x01), complex(x11)


def hardy_product_states(pair1: ObservablePair, pair2: ObservablePair) -> list[np.ndarray]:
    """phi_0..phi_3: the three forbidden product states, then |u1 u2>."""
    return [
        np.kron(pair1.d_perp, pair2.d_perp),
        np.kron(U_KET, pair2.d),
        np.kron(pair1.d, U_KET),
        np.kron(U_KET, U_KET),
    ]


def hardy_state(pair1: ObservablePair, pair2: ObservablePair) -> PureState:
    """Last Gram-Schmidt vector of phi_0..phi_3, phased so <u1 u2|psi> > 0."""
    psi = gram_schmidt(hardy_product_states(pair1, pair2))[-1]
    lead = psi[0]
    return PureState(psi * (abs(lead) / lead))


def conversion_columns(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Images of |u u> and |u u_perp> (ancilla first) under the conversion unitary.

    With psi = sum c_ij |i>_1 |j>_2 the images are
    (c00, c10, c01*, c11*) and (c01, c11, -c00*, -c10*); for the symmetric
    Hardy state these are exactly the two published rows.
    """
    c = psi.reshape(2, 2)
    col0 = np.array([c[0, 0], c[1, 0], c[0, 1].conj(), c[1, 1].conj()])
    col1 = np.array([c[0, 1], c[1, 1], -c[0, 0].conj(), -c[1, 0].conj()])
    return col0, col1


def conversion_unitary(psi: PureState) -> LinearOperator:
    col0, col1 = conversion_columns(psi.amplitudes)
    eye = np.eye(4, dtype=complex)
    # complete against the computational vectors, skipping any that are dependent
    cols = [col0, col1]
    for e in eye:
        if len(cols) == 4:
            break
        try:
            cols = gram_schmidt(cols + [e], tol=1e-6)
        except DegenerateInputError:
            continue
    return LinearOperator(np.column_stack(cols), unitary=True)


def branch_state(psi: PureState) -> PureState:
    """psi': the qubit-1/qubit-2 state left on the ancilla-|u_perp> branch."""
    col0, col1 = conversion_columns(psi.amplitudes)
    # psi'_{ij} = bottom block entry of column j at row i
    return PureState(np.array([col0[2], col1[2], col0[3], col1[3]]))


PHI_PLUS = PureState(np.array([1, 0, 0, 1]) / math.sqrt(2))


@dataclass(frozen=True)
class ProbabilityTable:
    """P(o1, o2 | s1, s2) keyed by ``(s1, s2, o1, o2)`` with s in {U,D}, o in {+1,-1}."""

    entries: dict

    def __post_init__(self):
        for s1 in SETTINGS:
            for s2 in SETTINGS:
                probs = [self.entries[(s1, s2, o1, o2)] for o1 in OUTCOMES for o2 in OUTCOMES]
                if min(probs) < -1e-15 or abs(sum(probs) - 1) > 1e-12:
                    raise ValueError(f"invalid distribution for settings ({s1},{s2}): {probs}")

    def __getitem__(self, key) -> float:
        return self.entries[key]

    def __iter__(self) -> Iterator[tuple]:
        for s1 in SETTINGS:
            for s2 in SETTINGS:
                for o1 in OUTCOMES:
                    for o2 in OUTCOMES:
                        yield s1, s2, o1, o2

    def as_array(self) -> np.ndarray:
        """Shape (2, 2, 4): [setting1, setting2, joint outcome] with U=0, D=1 and
        joint outcomes ordered (+,+), (+,-), (-,+), (-,-)."""
        arr = np.empty((2, 2, 4))
        for i, s1 in enumerate(SETTINGS):
            for j, s2 in enumerate(SETTINGS):
                arr[i, j] = [self.entries[(s1, s2, o1, o2)] for o1 in OUTCOMES for o2 in OUTCOMES]
        return arr

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["setting1", "setting2", "outcome1", "outcome2", "probability"])
        for key in self:
            s1, s2, o1, o2 = key
            writer.writerow([s1, s2, f"{o1:+d}", f"{o2:+d}", repr(float(self.entries[key]))])
        return buf.getvalue()


def probability_table(state: PureState, pair1: ObservablePair, pair2: ObservablePair) -> ProbabilityTable:
    if state.n != 2:
        raise ValueError("probability tables are defined for two-qubit states")
    entries = {}
    for s1 in SETTINGS:
        for s2 in SETTINGS:
            b1, b2 = pair1.basis(s1), pair2.basis(s2)
            for o1 in OUTCOMES:
                for o2 in OUTCOMES:
                    bra = np.kron(b1.vector(o1), b2.vector(o2))
                    entries[(s1, s2, o1, o2)] = float(abs(np.vdot(bra, state.amplitudes)) ** 2)
    return ProbabilityTable(entries)


# the three cells Hardy's argument requires to vanish
ZERO_CONDITIONS = (("D", "D", -1, -1), ("D", "U", 1, 1), ("U", "D", 1, 1))
Q_CELL = ("U", "U", 1, 1)


@dataclass(frozen=True)
class HardyCheck:
    passed: bool
    residuals: dict
    q: float


def check_hardy_conditions(table: ProbabilityTable, tol: float = 1e-12) -> HardyCheck:
    residuals = {cell: table[cell] for cell in ZERO_CONDITIONS}
    q = table[Q_CELL]
    passed = all(r <= tol for r in residuals.values()) and q > tol
    return HardyCheck(passed, residuals, q)


@dataclass(frozen=True, eq=False)
class HardyModel:
    """Everything derived from one observable choice.

    Qubit order for two-party states: party 1 first. ``chi`` relabels party 2's
    basis U <-> D; ``swap_m``/``cheat_m`` are rank-1 projectors onto the
    complex conjugates of ``psi_h``/``chi``.
    """

    pair1: ObservablePair
    pair2: ObservablePair
    psi_h: PureState = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "psi_h", hardy_state(self.pair1, self.pair2))

    @property
    def symmetric(self) -> bool:
        return self.pair1 == self.pair2

    @cached_property
    def coefficients(self) -> tuple[complex, complex, complex]:
        """(x00, x01, x11); only defined when both parties share the observables."""
        if not self.symmetric:
            raise ValueError("U-basis coefficients need pair1 == pair2")
        return symmetric_coefficients(self.pair1)

    @property
    def x00(self) -> complex:
        return self.coefficients[0]

    @property
    def x01(self) -> complex:
        return self.coefficients[1]

    @property
    def x11(self) -> complex:
        return self.coefficients[2]

    @cached_property
    def q(self) -> float:
        return q_value(self.pair1, self.pair2)

    @cached_property
    def conversion_u(self) -> LinearOperator:
        return conversion_unitary(self.psi_h)

    @cached_property
    def psi_prime(self) -> PureState:
        return branch_state(self.psi_h)

    @cached_property
    def swap_m(self) -> LinearOperator:
        return LinearOperator.ket_projector(self.psi_h.amplitudes.conj())

    @cached_property
    def chi(self) -> PureState:
        relabel = np.kron(np.eye(2), self.pair2.relabel)
        return PureState(relabel @ self.psi_h.amplitudes)

    @cached_property
    def cheat_m(self) -> LinearOperator:
        return LinearOperator.ket_projector(self.chi.amplitudes.conj())

    def table(self, which: str = "psi") -> ProbabilityTable:
        state = {"psi": self.psi_h, "chi": self.chi}[which]
        return probability_table(state, self.pair1, self.pair2)

    @cached_property
    def conversion_branch(self) -> tuple[float, PureState]:
        """(probability, qubit-1/2 state) of the ancilla-|u> outcome after conversion."""
        start = tensor(PureState(U_KET), PHI_PLUS)
        converted = apply(self.conversion_u, [0, 1], start)
        keep = LinearOperator.ket_projector(U_KET)
        post, prob = collapse(keep, [0], converted)
        return prob, PureState(post.amplitudes.reshape(2, 4)[0])

    @cached_property
    def tables(self) -> dict[str, ProbabilityTable]:
        return {"psi": self.table("psi"), "chi": self.table("chi")}

    @cached_property
    def swap_branches(self) -> dict[bool, tuple[float, PureState]]:
        return {cheat: self.swap_branch(cheat) for cheat in (False, True)}

    def swap_branch(self, cheat: bool = False) -> tuple[float, PureState]:
        """(click probability, state of qubits 2 and 4) for the joint projection on 1 and 3."""
        proj = self.cheat_m if cheat else self.swap_m
        ket13 = (self.chi if cheat else self.psi_h).amplitudes.conj()
        post, prob = collapse(proj, [0, 2], tensor(PHI_PLUS, PHI_PLUS))
        # qubits 1,3 are left in the projector's ket; contract it out to get the 2,4 factor
        amps = post.amplitudes.reshape(2, 2, 2, 2)
        rest = np.einsum("ac,abcd->bd", ket13.conj().reshape(2, 2), amps).reshape(4)
        return prob, PureState.from_vector(rest, normalize=True)


def build_model(pair1: ObservablePair, pair2: ObservablePair | None = None) -> HardyModel:
    return HardyModel(pair1, pair2 if pair2 is not None else pair1)


def symmetric_model(alpha: float = ALPHA_OPT) -> HardyModel:
    """Protocol default: every party uses the same real ``alpha``."""
    return build_model(ObservablePair.real(alpha))
