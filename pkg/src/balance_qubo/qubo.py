"""Sparse quadratic pseudo-Boolean models and their Ising equivalents.

A :class:`QuboModel` stores

    f(x) = offset + sum_i q_ii x_i + sum_{i<j} q_ij x_i x_j,   x_i in {0, 1}

as two dicts plus a constant. Models are built incrementally with the
``add_*`` methods and then frozen; a frozen model rejects further edits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


@dataclass(frozen=True)
class DecisionVar:
    """``x_{segment,level}``: segment ``segment`` uses quality level ``level`` (0-based)."""

    segment: int
    level: int
    label: str = ""

    def to_dict(self) -> dict:
        return {"kind": "decision", "segment": self.segment, "level": self.level, "label": self.label}


@dataclass(frozen=True)
class SlackVar:
    """Slack bit ``s_k`` (``k`` 1-based) carrying weight ``2**(k-1)`` data units."""

    bit: int

    @property
    def weight(self) -> int:
        return 1 << (self.bit - 1)

    def to_dict(self) -> dict:
        return {"kind": "slack", "bit": self.bit, "weight": self.weight}


@dataclass(frozen=True)
class GenericVar:
    name: str

    def to_dict(self) -> dict:
        return {"kind": "generic", "name": self.name}


VarRole = Union[DecisionVar, SlackVar, GenericVar]


def _role_from_dict(d: Mapping) -> VarRole:
    kind = d.get("kind")
    if kind == "decision":
        return DecisionVar(int(d["segment"]), int(d["level"]), str(d.get("label", "")))
    if kind == "slack":
        return SlackVar(int(d["bit"]))
    return GenericVar(str(d.get("name", "")))


class FrozenModelError(RuntimeError):
    pass


class QuboModel:
    """Quadratic unconstrained binary model with a variable registry.

    Args:
        num_vars: Number of generic variables to pre-register.
        sense: ``"minimize"`` or ``"maximize"``.

    Example:
        >>> m = QuboModel(2)
        >>> m.add_linear(0, 1.0).add_linear(1, 2.0).add_quadratic(1, 0, 3.0)
        QuboModel(num_vars=2, linear=2, quadratic=1, sense='minimize')
        >>> m.energy([1, 1])
        6.0
    """

    def __init__(self, num_vars: int = 0, sense: str = MINIMIZE):
        if sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"sense must be {MINIMIZE!r} or {MAXIMIZE!r}, got {sense!r}")
        self.sense = sense
        self.linear: dict[int, float] = {}
        self.quadratic: dict[tuple[int, int], float] = {}
        self.offset = 0.0
        self.registry: list[VarRole] = []
        self._frozen = False
        for i in range(num_vars):
            self.add_variable(GenericVar(f"x{i}"))

    # -- construction ----------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.registry)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenModelError("model is frozen")

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.num_vars:
            raise IndexError(f"variable index {i} out of range for {self.num_vars} variables")

    def add_variable(self, role: VarRole) -> int:
        self._check_mutable()
        self.registry.append(role)
        return len(self.registry) - 1

    def add_linear(self, i: int, coeff: float) -> "QuboModel":
        self._check_mutable()
        self._check_index(i)
        self.linear[i] = self.linear.get(i, 0.0) + float(coeff)
        return self

    def add_quadratic(self, i: int, j: int, coeff: float) -> "QuboModel":
        self._check_mutable()
        if i == j:
            raise ValueError(f"diagonal term ({i}, {j}) is not allowed; use add_linear")
        self._check_index(i)
        self._check_index(j)
        key = (i, j) if i < j else (j, i)
        self.quadratic[key] = self.quadratic.get(key, 0.0) + float(coeff)
        return self

    def add_offset(self, c: float) -> "QuboModel":
        self._check_mutable()
        self.offset += float(c)
        return self

    def freeze(self) -> "QuboModel":
        self._frozen = True
        return self

    def copy(self) -> "QuboModel":
        m = QuboModel(0, self.sense)
        m.linear = dict(self.linear)
        m.quadratic = dict(self.quadratic)
        m.offset = self.offset
        m.registry = list(self.registry)
        return m

    def __repr__(self) -> str:
        return (
            f"QuboModel(num_vars={self.num_vars}, linear={len(self.linear)}, "
            f"quadratic={len(self.quadratic)}, sense={self.sense!r})"
        )

    # -- transforms ------------------------------------------------------

    def negated(self) -> "QuboModel":
        """All coefficients negated and the sense flipped; same optimizers."""
        m = self.copy()
        m.linear = {i: -q for i, q in self.linear.items()}
        m.quadratic = {k: -q for k, q in self.quadratic.items()}
        m.offset = -self.offset
        m.sense = MAXIMIZE if self.sense == MINIMIZE else MINIMIZE
        return m

    def canonical(self) -> "QuboModel":
        """Minimization form of this model (frozen)."""
        m = self.copy() if self.sense == MINIMIZE else self.negated()
        return m.freeze()

    def scaled(self, factor: float) -> "QuboModel":
        m = self.copy()
        m.linear = {i: q * factor for i, q in self.linear.items()}
        m.quadratic = {k: q * factor for k, q in self.quadratic.items()}
        m.offset = self.offset * factor
        return m

    # -- evaluation ------------------------------------------------------

    def energy(self, x: Sequence[int]) -> float:
        return energy(self, x)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """``(h, W)``: linear vector and symmetric coupling matrix with zero diagonal."""
        n = self.num_vars
        h = np.zeros(n)
        W = np.zeros((n, n))
        for i, q in self.linear.items():
            h[i] = q
        for (i, j), q in self.quadratic.items():
            W[i, j] = q
            W[j, i] = q
        return h, W

    def energies(self, X: np.ndarray) -> np.ndarray:
        """Vectorized energies for a ``(samples, num_vars)`` 0/1 array.

        Summation order differs from :func:`energy`, so results can differ in
        the last bits; use :func:`energy` where exact agreement matters.
        """
        X = np.asarray(X, dtype=float)
        h, W = self.dense()
        return self.offset + X @ h + 0.5 * np.einsum("si,ij,sj->s", X, W, X)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "sense": self.sense,
            "offset": self.offset,
            "linear": {str(i): q for i, q in sorted(self.linear.items())},
            "quadratic": [[i, j, q] for (i, j), q in sorted(self.quadratic.items())],
            "registry": {str(i): role.to_dict() for i, role in enumerate(self.registry)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuboModel":
        m = cls(0, d.get("sense", MINIMIZE))
        n = int(d["num_vars"])
        registry = d.get("registry") or {}
        for i in range(n):
            role = registry.get(str(i))
            m.add_variable(_role_from_dict(role) if role else GenericVar(f"x{i}"))
        for i, q in d.get("linear", {}).items():
            m.add_linear(int(i), q)
        for i, j, q in d.get("quadratic", []):
            m.add_quadratic(int(i), int(j), q)
        m.add_offset(d.get("offset", 0.0))
        return m


def energy(model: QuboModel, x: Sequence[int]) -> float:
    """``offset + sum_i q_ii x_i + sum_{i<j} q_ij x_i x_j`` for one bit-vector."""
    if len(x) != model.num_vars:
        raise ValueError(f"bit-vector has length {len(x)}, model has {model.num_vars} variables")
    e = model.offset
    for i, q in model.linear.items():
        if x[i]:
            e += q
    for (i, j), q in model.quadratic.items():
        if x[i] and x[j]:
            e += q
    return float(e)


def union(a: QuboModel, b: QuboModel) -> QuboModel:
    """Term-wise sum of two models over the same variables."""
    if a.num_vars != b.num_vars or a.sense != b.sense:
        raise ValueError("models must share num_vars and sense")
    m = a.copy()
    for i, q in b.linear.items():
        m.add_linear(i, q)
    for (i, j), q in b.quadratic.items():
        m.add_quadratic(i, j, q)
    m.add_offset(b.offset)
    return m


@dataclass
class IsingModel:
    """``E(s) = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j`` over spins in {-1, +1}."""

    num_vars: int
    h: dict[int, float]
    J: dict[tuple[int, int], float]
    offset: float = 0.0

    def energy(self, s: Sequence[int]) -> float:
        return ising_energy(self, s)


def ising_energy(model: IsingModel, s: Sequence[int]) -> float:
    if len(s) != model.num_vars:
        raise ValueError(f"spin vector has length {len(s)}, model has {model.num_vars} spins")
    e = model.offset
    for i, hi in model.h.items():
        e += hi * s[i]
    for (i, j), jij in model.J.items():
        e += jij * s[i] * s[j]
    return float(e)


def to_ising(model: QuboModel) -> IsingModel:
    """Substitute ``x_i = (1 + s_i) / 2``; energies agree for every configuration."""
    h: dict[int, float] = {}
    J: dict[tuple[int, int], float] = {}
    offset = model.offset
    for i, q in model.linear.items():
        h[i] = h.get(i, 0.0) + q / 2
        offset += q / 2
    for (i, j), q in model.quadratic.items():
        J[(i, j)] = J.get((i, j), 0.0) + q / 4
        h[i] = h.get(i, 0.0) + q / 4
        h[j] = h.get(j, 0.0) + q / 4
        offset += q / 4
    return IsingModel(model.num_vars, h, J, offset)


def spins(x: Iterable[int]) -> list[int]:
    """Binary vector to spins: 0 -> -1, 1 -> +1."""
    return [2 * int(b) - 1 for b in x]
