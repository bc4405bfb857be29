"""Unitary and antiunitary symmetries of Bloch Hamiltonians, checked on a grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SIGMA_0, SIGMA_3, BlochModel, pauli_matrix
from .spectrum import bz_grid


@dataclass(frozen=True)
class SymmetryOp:
    """``k -> s k`` together with ``H -> U H U^dagger`` (with ``H`` conjugated if antiunitary)."""

    name: str
    unitary: np.ndarray
    conjugates: bool
    inverts_k: bool

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        if u.shape != (2, 2):
            raise ValueError("unitary part must be 2x2")
        if not np.allclose(u.conj().T @ u, SIGMA_0, rtol=0, atol=1e-12):
            raise ValueError(f"{self.name}: matrix is not unitary")
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)

    def square(self) -> int | None:
        """+1 or -1 if the operator squares to a sign, else None."""
        u = self.unitary
        sq = u @ u.conj() if self.conjugates else u @ u
        for sign in (1, -1):
            if np.allclose(sq, sign * SIGMA_0, rtol=0, atol=1e-12):
                return sign
        return None

    def then(self, other: SymmetryOp, name: str | None = None) -> SymmetryOp:
        """The operator ``other . self`` (apply ``self`` first)."""
        u = other.unitary @ (self.unitary.conj() if other.conjugates else self.unitary)
        return SymmetryOp(
            name or f"{other.name}{self.name}",
            u,
            self.conjugates != other.conjugates,
            self.inverts_k != other.inverts_k,
        )


P = SymmetryOp("P", SIGMA_3, conjugates=False, inverts_k=True)
T = SymmetryOp("T", SIGMA_0, conjugates=True, inverts_k=True)
PT = SymmetryOp("PT", SIGMA_3, conjugates=True, inverts_k=False)
CANNED = (P, T, PT)


@dataclass(frozen=True)
class SymmetryReport:
    op_name: str
    holds: bool
    max_violation: float
    grid_resolution: int
    squares_to: int | None
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "op_name": self.op_name,
            "holds": self.holds,
            "max_violation": self.max_violation,
            "grid_resolution": self.grid_resolution,
            "squares_to": self.squares_to,
            "tolerance": self.tolerance,
        }


def violation_field(model: BlochModel, op: SymmetryOp, params=None, grid_n: int = 64) -> np.ndarray:
    """Operator norm of ``U H~(s k) U^dagger - H(k)`` on the grid, dimensionless (H = g . sigma)."""
    kx, ky = bz_grid(grid_n, grid_n)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    sign = -1.0 if op.inverts_k else 1.0
    h = pauli_matrix(model.bloch_vector(KX, KY, params))
    h_src = pauli_matrix(model.bloch_vector(sign * KX, sign * KY, params))
    if op.conjugates:
        h_src = h_src.conj()
    u = op.unitary
    diff = u @ h_src @ u.conj().T - h
    return np.linalg.svd(diff, compute_uv=False)[..., 0]


def check_symmetry(model: BlochModel, op: SymmetryOp, params=None, grid_n: int = 64, tol: float = 1e-10) -> SymmetryReport:
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    if tol <= 0:
        raise ValueError("tol must be positive")
    worst = float(np.max(violation_field(model, op, params, grid_n)))
    return SymmetryReport(op.name, worst < tol, worst, grid_n, op.square(), tol)


def classify_symmetries(model: BlochModel, params=None, grid_n: int = 64, tol: float = 1e-10) -> list[SymmetryReport]:
    return [check_symmetry(model, op, params, grid_n, tol) for op in CANNED]
