"""Two-band Bloch Hamiltonians written as real Fourier series.

A model is three real trigonometric series g1, g2, g3 over the square-lattice
Brillouin zone and an energy scale ``omega`` (MHz).  The Hamiltonian is

    H(k) = (omega / 2) * (g1 sigma_1 + g2 sigma_2 + g3 sigma_3)

so the splitting between the two bands is ``omega * |g(k)|`` and the
per-axis drive rates of the qubit realisation are ``omega * g_i``.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import NamedTuple

import numpy as np

from .errors import DegeneracyError, UnboundParameterError, UnknownParameterError

TWO_PI = 2.0 * np.pi

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_1, SIGMA_2, SIGMA_3)

DEGENERACY_TOL = 1e-12


class Momentum(NamedTuple):
    kx: float
    ky: float


def wrap_angle(x):
    """Reduce angles into [-pi, pi).  Works on scalars and arrays."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi
    # mod can round up to exactly 2*pi for inputs just below an odd multiple of pi
    y = np.where(y >= np.pi, y - TWO_PI, y)
    if np.ndim(y) == 0:
        return float(y)
    return y


def canonical(k) -> Momentum:
    kx, ky = k
    return Momentum(wrap_angle(kx), wrap_angle(ky))


def periodic_delta(a, b) -> np.ndarray:
    """Componentwise shortest displacement from ``b`` to ``a`` on the torus."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def periodic_distance(a, b) -> float:
    return float(np.hypot(*periodic_delta(a, b)))


@dataclass(frozen=True)
class Coefficient:
    """Affine coefficient ``const + sum(weight * parameter)``."""

    const: float = 0.0
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        names = [name for name, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter in coefficient: {names}")
        if not math.isfinite(self.const) or not all(math.isfinite(w) for _, w in self.params):
            raise ValueError("coefficient weights must be finite")

    @classmethod
    def of(cls, value) -> Coefficient:
        """Accept a number, a Coefficient, or a ``{"const": c, "params": {...}}`` mapping."""
        if isinstance(value, Coefficient):
            return value
        if isinstance(value, Mapping):
            params = tuple(sorted((str(k), float(v)) for k, v in value.get("params", {}).items()))
            return cls(float(value.get("const", 0.0)), params)
        return cls(float(value))

    @classmethod
    def parameter(cls, name: str, weight: float = 1.0) -> Coefficient:
        return cls(0.0, ((name, float(weight)),))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.params)

    def value(self, values: Mapping[str, float]) -> float:
        total = self.const
        for name, weight in self.params:
            if name not in values:
                raise UnboundParameterError(name)
            total += weight * values[name]
        return total

    def to_dict(self) -> dict:
        return {"const": self.const, "params": dict(self.params)}


@dataclass(frozen=True)
class HarmonicTerm:
    """``coefficient * cos(m kx + n ky)`` or ``coefficient * sin(m kx + n ky)``."""

    m: int
    n: int
    kind: str
    coefficient: Coefficient = field(default_factory=Coefficient)

    def __post_init__(self):
        if self.kind not in ("cos", "sin"):
            raise ValueError(f"kind must be 'cos' or 'sin', got {self.kind!r}")
        if self.kind == "sin" and self.m == 0 and self.n == 0:
            raise ValueError("sin term with (m, n) = (0, 0) vanishes identically")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "coefficient", Coefficient.of(self.coefficient))

    def to_dict(self) -> dict:
        return {"m": self.m, "n": self.n, "kind": self.kind, "coefficient": self.coefficient.to_dict()}


class _Series(NamedTuple):
    m: np.ndarray
    n: np.ndarray
    is_sin: np.ndarray
    coeff: np.ndarray


def _check_series(terms: Sequence[HarmonicTerm], label: str) -> tuple[HarmonicTerm, ...]:
    terms = tuple(terms)
    seen = set()
    for term in terms:
        key = (term.m, term.n, term.kind)
        if key in seen:
            raise ValueError(f"{label}: duplicate harmonic {key}")
        seen.add(key)
    return terms


@dataclass(frozen=True, eq=True)
class BlochModel:
    g1: tuple[HarmonicTerm, ...]
    g2: tuple[HarmonicTerm, ...]
    g3: tuple[HarmonicTerm, ...]
    omega: float = 10.0
    parameter_table: Mapping[str, float] = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        for label in ("g1", "g2", "g3"):
            object.__setattr__(self, label, _check_series(getattr(self, label), label))
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")
        table = {str(k): float(v) for k, v in dict(self.parameter_table).items()}
        for key, value in table.items():
            if not math.isfinite(value):
                raise ValueError(f"default for {key!r} is not finite")
        object.__setattr__(self, "parameter_table", MappingProxyType(table))

    @property
    def series(self) -> tuple[tuple[HarmonicTerm, ...], ...]:
        return (self.g1, self.g2, self.g3)

    def referenced_parameters(self) -> set[str]:
        return {name for s in self.series for t in s for name in t.coefficient.names}

    def resolve(self, params: Mapping[str, float] | None = None) -> dict[str, float]:
        """Merge overrides into the defaults; reject unknown and unbound names."""
        values = dict(self.parameter_table)
        known = set(values) | self.referenced_parameters()
        for key, value in (params or {}).items():
            if key not in known:
                raise UnknownParameterError(key)
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"parameter {key!r} is not finite")
            values[key] = value
        for name in sorted(self.referenced_parameters()):
            if name not in values:
                raise UnboundParameterError(name)
        return values

    def _compile(self, params) -> tuple[_Series, _Series, _Series]:
        values = self.resolve(params)
        out = []
        for terms in self.series:
            out.append(
                _Series(
                    np.array([t.m for t in terms], dtype=float),
                    np.array([t.n for t in terms], dtype=float),
                    np.array([t.kind == "sin" for t in terms], dtype=bool),
                    np.array([t.coefficient.value(values) for t in terms], dtype=float),
                )
            )
        return tuple(out)

    def bloch_vector(self, kx, ky, params=None) -> np.ndarray:
        """Vectorised g(k); output has shape ``broadcast(kx, ky).shape + (3,)``."""
        kx, ky = np.broadcast_arrays(np.asarray(kx, dtype=float), np.asarray(ky, dtype=float))
        out = np.zeros(kx.shape + (3,))
        for axis, s in enumerate(self._compile(params)):
            for m, n, is_sin, c in zip(s.m, s.n, s.is_sin, s.coeff):
                if c == 0.0:
                    continue
                phase = m * kx + n * ky
                out[..., axis] += c * (np.sin(phase) if is_sin else np.cos(phase))
        return out

    def jacobian(self, kx, ky, params=None) -> np.ndarray:
        """d g_i / d k_j, shape ``(..., 3, 2)``."""
        kx, ky = np.broadcast_arrays(np.asarray(kx, dtype=float), np.asarray(ky, dtype=float))
        out = np.zeros(kx.shape + (3, 2))
        for axis, s in enumerate(self._compile(params)):
            for m, n, is_sin, c in zip(s.m, s.n, s.is_sin, s.coeff):
                if c == 0.0:
                    continue
                phase = m * kx + n * ky
                d = c * (np.cos(phase) if is_sin else -np.sin(phase))
                out[..., axis, 0] += m * d
                out[..., axis, 1] += n * d
        return out

    def component_vanishes(self, axis: int, params=None, atol: float = 1e-14) -> bool:
        """Structural test that series ``g_{axis+1}`` is identically zero.

        Terms are folded onto canonical harmonics first, since cos(-x) = cos(x)
        and sin(-x) = -sin(x) let distinct (m, n) entries cancel.
        """
        values = self.resolve(params)
        folded: dict[tuple[int, int, str], float] = {}
        for t in self.series[axis]:
            m, n, sign = t.m, t.n, 1.0
            if (m, n) < (0, 0) or (m == 0 and n < 0):
                m, n = -m, -n
                if t.kind == "sin":
                    sign = -1.0
            key = (m, n, t.kind)
            folded[key] = folded.get(key, 0.0) + sign * t.coefficient.value(values)
        return all(abs(v) <= atol for v in folded.values())

    def with_defaults(self, **updates: float) -> BlochModel:
        table = dict(self.parameter_table)
        table.update({k: float(v) for k, v in updates.items()})
        return BlochModel(self.g1, self.g2, self.g3, self.omega, table, self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "omega": self.omega,
            "parameters": dict(self.parameter_table),
            "g1": [t.to_dict() for t in self.g1],
            "g2": [t.to_dict() for t in self.g2],
            "g3": [t.to_dict() for t in self.g3],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> BlochModel:
        def terms(items):
            return tuple(
                HarmonicTerm(int(t["m"]), int(t["n"]), t["kind"], Coefficient.of(t.get("coefficient", 0.0)))
                for t in items
            )

        return cls(
            terms(data.get("g1", ())),
            terms(data.get("g2", ())),
            terms(data.get("g3", ())),
            float(data.get("omega", 10.0)),
            dict(data.get("parameters", {})),
            str(data.get("name", "custom")),
        )


def build_paper_model(lambda_: float = 0.0, eta: float = 0.0, epsilon: float = 0.0, omega: float = 10.0) -> BlochModel:
    """g = (epsilon, sin kx + eta, lambda + cos ky), the '+' branch of the lattice model.

    ``eta`` shifts the sigma_2 component (breaks P and T, keeps PT) and
    ``epsilon`` adds a constant sigma_1 term (breaks PT).
    """
    for label, value in (("lambda", lambda_), ("eta", eta), ("epsilon", epsilon), ("omega", omega)):
        if not math.isfinite(value):
            raise ValueError(f"{label} must be finite, got {value}")
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    p = Coefficient.parameter
    return BlochModel(
        g1=(HarmonicTerm(0, 0, "cos", p("epsilon")),),
        g2=(HarmonicTerm(1, 0, "sin", Coefficient(1.0)), HarmonicTerm(0, 0, "cos", p("eta"))),
        g3=(HarmonicTerm(0, 0, "cos", p("lambda")), HarmonicTerm(0, 1, "cos", Coefficient(1.0))),
        omega=float(omega),
        parameter_table={"lambda": float(lambda_), "eta": float(eta), "epsilon": float(epsilon)},
        name="paper",
    )


def eval_bloch_vector(model: BlochModel, k, params=None) -> np.ndarray:
    kx, ky = k
    return model.bloch_vector(float(kx), float(ky), params)


def eigen_splitting(model: BlochModel, k, params=None) -> float:
    """Full gap between the two bands at ``k`` in MHz."""
    return model.omega * float(np.linalg.norm(eval_bloch_vector(model, k, params)))


def band_energies(model: BlochModel, k, params=None) -> tuple[float, float]:
    half = 0.5 * eigen_splitting(model, k, params)
    return -half, half


def hamiltonian(model: BlochModel, k, params=None) -> np.ndarray:
    """2x2 Hamiltonian in MHz."""
    g = eval_bloch_vector(model, k, params)
    return 0.5 * model.omega * pauli_matrix(g)


def pauli_matrix(g) -> np.ndarray:
    """g . sigma for g of shape (..., 3); returns (..., 2, 2)."""
    g = np.asarray(g, dtype=float)
    out = np.empty(g.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = g[..., 2]
    out[..., 1, 1] = -g[..., 2]
    out[..., 0, 1] = g[..., 0] - 1j * g[..., 1]
    out[..., 1, 0] = g[..., 0] + 1j * g[..., 1]
    return out


def band_states(g) -> tuple[np.ndarray, np.ndarray]:
    """Normalised eigenvectors of g . sigma for eigenvalues -|g| and +|g|.

    Vectorised over leading axes.  Each eigenvector is built from whichever row
    of (g . sigma -/+ |g|) has the larger norm, so the formula stays
    well-conditioned for all directions of g.  Degenerate inputs give NaN.
    """
    g = np.asarray(g, dtype=float)
    g1, g2, g3 = g[..., 0], g[..., 1], g[..., 2]
    r = np.sqrt(g1 * g1 + g2 * g2 + g3 * g3)
    north = g3 >= 0

    lower = np.empty(g.shape[:-1] + (2,), dtype=complex)
    lower[..., 0] = np.where(north, g1 - 1j * g2, r - g3)
    lower[..., 1] = np.where(north, -(r + g3), -(g1 + 1j * g2))
    upper = np.empty_like(lower)
    upper[..., 0] = np.where(north, r + g3, g1 - 1j * g2)
    upper[..., 1] = np.where(north, g1 + 1j * g2, r - g3)

    with np.errstate(invalid="ignore", divide="ignore"):
        lower /= np.linalg.norm(lower, axis=-1, keepdims=True)
        upper /= np.linalg.norm(upper, axis=-1, keepdims=True)
    return lower, upper


def eigenvectors(model: BlochModel, k, params=None, tol: float = DEGENERACY_TOL) -> tuple[np.ndarray, np.ndarray]:
    """(lower, upper) band eigenvectors at ``k``; raises at a band crossing."""
    g = eval_bloch_vector(model, k, params)
    return states_from_vector(g, tol=tol, k=k)


def states_from_vector(g, tol: float = DEGENERACY_TOL, k=None) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=float)
    if np.linalg.norm(g) < tol:
        raise DegeneracyError(f"bands are degenerate (|g| = {np.linalg.norm(g):.3g})", k=k)
    return band_states(g)
