"""Exhaustive enumeration of small QUBO models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from balance_qubo.qubo import QuboModel, energy

MAX_ENUM_VARS = 24
_CHUNK_BITS = 16
_MAX_TIE_CANDIDATES = 4096


class ModelTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class ExactResult:
    bitstring: tuple[int, ...]
    energy: float
    spectrum: Optional[list[tuple[float, tuple[int, ...]]]] = None


def _bit_block(start: int, stop: int, n: int) -> np.ndarray:
    # Variable 0 is the most significant bit, so integer order is lexicographic order.
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.int8)


def enumerate_exact(model: QuboModel, spectrum: bool = False) -> ExactResult:
    """Global minimum by full enumeration.

    Maximize-sense models are minimized in their negated form. Ties go to the
    lexicographically smallest bitstring. The returned energy is recomputed
    with :func:`balance_qubo.qubo.energy` in the model's own sense.

    Args:
        model: Model with at most ``MAX_ENUM_VARS`` variables.
        spectrum: Also return every ``(energy, bitstring)`` sorted ascending.
    """
    n = model.num_vars
    if n > MAX_ENUM_VARS:
        raise ModelTooLargeError(f"{n} variables exceeds enumeration limit {MAX_ENUM_VARS}")
    canon = model.canonical()
    total = 1 << n
    chunk = 1 << _CHUNK_BITS
    best_e = np.inf
    near_idx = np.empty(0, dtype=np.int64)
    near_e = np.empty(0)
    all_e = np.empty(total) if spectrum else None
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        e = canon.energies(_bit_block(start, stop, n))
        if all_e is not None:
            all_e[start:stop] = e
        best_e = min(best_e, float(e.min()))
        cut = best_e + _tol(best_e)
        keep = np.flatnonzero(e <= cut)
        near_idx = np.concatenate([near_idx, keep + start])
        near_e = np.concatenate([near_e, e[keep]])
        mask = near_e <= cut
        near_idx, near_e = near_idx[mask], near_e[mask]
    # Vectorized sums can differ in the last bits: settle near-ties with the
    # exact scalar energy, scanning candidates in lexicographic order.
    best_bits: tuple[int, ...] = ()
    best_exact = np.inf
    for k in near_idx[:_MAX_TIE_CANDIDATES]:
        bits = _bits_of(int(k), n)
        e = energy(canon, bits)
        if e < best_exact:
            best_bits, best_exact = bits, e

    spec = None
    if all_e is not None:
        sign = 1.0 if model.sense == canon.sense else -1.0
        order = np.lexsort((np.arange(total), all_e))
        spec = [(sign * float(all_e[k]), _bits_of(int(k), n)) for k in order]
    return ExactResult(best_bits, energy(model, best_bits), spec)


def _tol(e: float) -> float:
    return 1e-9 * max(1.0, abs(e))


def _bits_of(k: int, n: int) -> tuple[int, ...]:
    return tuple((k >> (n - 1 - i)) & 1 for i in range(n))
