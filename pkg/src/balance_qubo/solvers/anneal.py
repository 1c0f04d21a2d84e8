"""Seeded Metropolis simulated annealing over QUBO models.

Each shot is an independent chain started from a uniformly random bitstring.
A sweep visits variables ``0..n-1`` in order and proposes a single flip of
each, accepted with probability ``min(1, exp(-beta * dE))``. Inverse
temperature rises once per sweep following the schedule.

Random streams: shot ``k`` under master seed ``s`` draws from
``PCG64(SeedSequence(entropy=s, spawn_key=(k,)))``: first the initial bits
for every restart, then one uniform per proposal. A shot's outcome therefore
depends only on ``(model, schedule, s, k)``, so chunking shots across
threads cannot change results.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numba
import numpy as np

from balance_qubo._io import seed_sequence
from balance_qubo.qubo import QuboModel, energy

SAMPLER_ID = "simulated-annealing/metropolis-single-flip"
# Uniform draws buffered per chunk of shots (bounds memory for long schedules).
_DRAWS_PER_CHUNK = 1 << 22


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 1000
    beta_initial: float = 0.1
    beta_final: float = 10.0
    schedule: str = "geometric"
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.sweeps < 1:
            raise ValueError(f"sweeps must be >= 1, got {self.sweeps}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if not (0 < self.beta_initial <= self.beta_final) or not math.isfinite(self.beta_final):
            raise ValueError(
                f"need 0 < beta_initial <= beta_final < inf, got {self.beta_initial}, {self.beta_final}"
            )
        if self.schedule not in ("geometric", "linear"):
            raise ValueError(f"schedule must be 'geometric' or 'linear', got {self.schedule!r}")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_final])
        if self.schedule == "geometric":
            return np.geomspace(self.beta_initial, self.beta_final, self.sweeps)
        return np.linspace(self.beta_initial, self.beta_final, self.sweeps)

    def to_dict(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "beta_initial": self.beta_initial,
            "beta_final": self.beta_final,
            "schedule": self.schedule,
            "restarts": self.restarts,
        }


def flip_energy_bounds(model: QuboModel) -> tuple[float, float]:
    """``(dE_max, dE_min)`` bounds on a single-flip energy change.

    ``dE_max`` is the largest ``|q_ii| + sum_j |q_ij|`` over variables;
    ``dE_min`` is the smallest nonzero coefficient magnitude. Coefficients
    below ``1e-12`` of the largest are treated as zero (cancellation noise).
    """
    h, W = model.dense()
    mags = np.concatenate([np.abs(h), np.abs(np.triu(W, 1)).ravel()])
    top = float(mags.max()) if mags.size else 0.0
    if top == 0.0:
        raise ValueError("model has no nonzero terms")
    nonzero = mags[mags > top * 1e-12]
    de_max = float((np.abs(h) + np.abs(W).sum(axis=1)).max())
    return de_max, float(nonzero.min())


def autoscale_schedule(
    model: QuboModel,
    sweeps: int = 1000,
    schedule: str = "geometric",
    p_accept_final: float = 1e-3,
    restarts: int = 1,
) -> AnnealSchedule:
    """Hot enough to accept the largest move at the start, cold enough to
    reject the smallest uphill move with probability ``1 - p_accept_final`` at the end."""
    de_max, de_min = flip_energy_bounds(model)
    beta_initial = 1.0 / de_max
    beta_final = math.log(1.0 / p_accept_final) / de_min
    return AnnealSchedule(sweeps, beta_initial, max(beta_final, beta_initial), schedule, restarts)


@numba.njit(cache=True, nogil=True)
def _anneal_kernel(h, W, betas, init, draws, out, out_energy):  # pragma: no cover - jitted
    shots, restarts, n = init.shape
    sweeps = betas.shape[0]
    x = np.empty(n, dtype=np.int8)
    local = np.empty(n)
    for s in range(shots):
        best_e = np.inf
        for r in range(restarts):
            for i in range(n):
                x[i] = init[s, r, i]
            e = 0.0
            for i in range(n):
                acc = h[i]
                for j in range(n):
                    acc += W[i, j] * x[j]
                local[i] = acc
                if x[i]:
                    e += h[i]
                    for j in range(i + 1, n):
                        if x[j]:
                            e += W[i, j]
            for t in range(sweeps):
                beta = betas[t]
                for i in range(n):
                    de = local[i] if x[i] == 0 else -local[i]
                    if de <= 0.0 or draws[s, r, t, i] < math.exp(-beta * de):
                        delta = 1.0 if x[i] == 0 else -1.0
                        x[i] = 1 - x[i]
                        e += de
                        for j in range(n):
                            local[j] += W[j, i] * delta
            if e < best_e:
                best_e = e
                for i in range(n):
                    out[s, i] = x[i]
        out_energy[s] = best_e


def _run_shots(h, W, betas, schedule: AnnealSchedule, seed: int, shot_ids: range) -> np.ndarray:
    n = h.shape[0]
    out = np.zeros((len(shot_ids), n), dtype=np.int8)
    per_shot = max(1, schedule.restarts * schedule.sweeps * n)
    chunk = max(1, _DRAWS_PER_CHUNK // per_shot)
    for c0 in range(0, len(shot_ids), chunk):
        ids = shot_ids[c0 : c0 + chunk]
        init = np.empty((len(ids), schedule.restarts, n), dtype=np.int8)
        draws = np.empty((len(ids), schedule.restarts, schedule.sweeps, n))
        for k, shot in enumerate(ids):
            gen = np.random.Generator(np.random.PCG64(seed_sequence(seed, shot)))
            init[k] = gen.integers(0, 2, size=(schedule.restarts, n), dtype=np.int8)
            draws[k] = gen.random((schedule.restarts, schedule.sweeps, n))
        energies = np.empty(len(ids))
        _anneal_kernel(h, W, betas, init, draws, out[c0 : c0 + len(ids)], energies)
    return out


@dataclass(frozen=True)
class SampleRecord:
    bitstring: tuple[int, ...]
    energy: float
    occurrences: int


@dataclass
class SampleSet:
    """Aggregated samples, sorted by ``(energy, bitstring)``.

    Energies are always recomputed with :func:`balance_qubo.qubo.energy`
    on the minimization form of the sampled model.
    """

    records: list[SampleRecord]
    shots: int
    seed: int
    sampler_id: str
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)

    @classmethod
    def from_states(
        cls, model: QuboModel, states: np.ndarray, seed: int, sampler_id: str, wall_time: float = 0.0,
        info: Optional[dict] = None,
    ) -> "SampleSet":
        uniq, counts = np.unique(np.asarray(states, dtype=np.int8), axis=0, return_counts=True)
        records = []
        for row, cnt in zip(uniq, counts):
            bits = tuple(int(b) for b in row)
            records.append(SampleRecord(bits, energy(model, bits), int(cnt)))
        records.sort(key=lambda r: (r.energy, r.bitstring))
        return cls(records, int(counts.sum()), int(seed), sampler_id, wall_time, dict(info or {}))

    @property
    def first(self) -> SampleRecord:
        return self.records[0]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "sampler_id": self.sampler_id,
            "seed": self.seed,
            "shots": self.shots,
            "info": self.info,
            "records": [
                {"bitstring": "".join(map(str, r.bitstring)), "energy": r.energy, "occurrences": r.occurrences}
                for r in self.records
            ],
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


class Sampler(Protocol):
    sampler_id: str

    def sample(self, model: QuboModel, shots: int, seed: int) -> SampleSet: ...


def simulated_anneal(
    model: QuboModel,
    shots: int,
    schedule: Optional[AnnealSchedule] = None,
    seed: int = 0,
    jobs: int = 1,
) -> SampleSet:
    """Run ``shots`` independent annealing chains on the minimization form of ``model``.

    Args:
        schedule: Defaults to :func:`autoscale_schedule` of the model.
        jobs: Worker threads; results are merged in shot order, so output is
            identical for every value.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    t0 = time.perf_counter()
    canon = model.canonical()
    if schedule is None:
        schedule = autoscale_schedule(canon)
    h, W = canon.dense()
    betas = schedule.betas()
    jobs = max(1, min(jobs, shots))
    if jobs == 1:
        states = _run_shots(h, W, betas, schedule, seed, range(shots))
    else:
        bounds = np.linspace(0, shots, jobs + 1).astype(int)
        parts = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: _run_shots(h, W, betas, schedule, seed, r), parts))
        states = np.concatenate(results, axis=0)
    return SampleSet.from_states(
        canon, states, seed, SAMPLER_ID, time.perf_counter() - t0, {"schedule": schedule.to_dict()}
    )


@dataclass
class SimulatedAnnealingSampler:
    """Sampler-contract wrapper; ``schedule=None`` autoscales per model."""

    schedule: Optional[AnnealSchedule] = None
    sweeps: int = 1000
    jobs: int = 1
    sampler_id: str = SAMPLER_ID

    def schedule_for(self, model: QuboModel) -> AnnealSchedule:
        if self.schedule is not None:
            return self.schedule
        return autoscale_schedule(model.canonical(), sweeps=self.sweeps)

    def sample(self, model: QuboModel, shots: int, seed: int) -> SampleSet:
        return simulated_anneal(model, shots, self.schedule_for(model), seed, self.jobs)
