"""Euler-Maruyama simulation of the diffusion and Monte Carlo estimators.

Each step computes the raw update drift*dt + amplitude*sqrt(dt)*N(0,1) per
coordinate, records a boundary hit whenever the raw value is <= 0 or >= 1,
and clamps back to [0, 1].  Noise for replicate ``i`` and coordinate ``j``
comes from its own stream (see ``streams``), so results do not depend on the
block size or on how many worker threads are used.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
from numba import njit

from .model import ModelParams
from .streams import Stream, stream_generator

__all__ = [
    "Path",
    "Ensemble",
    "MomentEstimate",
    "HitEstimate",
    "simulate_path",
    "simulate_path_k",
    "simulate_ensemble",
    "estimate_moment",
    "estimate_moments",
    "hitting_experiment",
    "hitting_sequence",
    "DEFAULT_DT",
    "DEFAULT_N_PATHS",
    "BOUNDARIES",
]

DEFAULT_DT = 1e-4
DEFAULT_N_PATHS = 100_000
BOUNDARIES = ("X0", "X1", "Y0", "Y1")
_CHUNK = 2048
_BLOCK = 1024


@dataclass(frozen=True)
class _Coefficients:
    """Flat coefficient arrays consumed by the compiled stepper."""

    u1: float
    u2: float
    alpha: float
    mig: np.ndarray
    back: np.ndarray
    bu1: np.ndarray
    bu2: np.ndarray
    amp: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.mig) + 1

    def noisy(self) -> list[int]:
        coords = [0] if self.alpha != 0 else []
        return coords + [i + 1 for i, a in enumerate(self.amp) if a != 0]

    @classmethod
    def two_dim(cls, p: ModelParams) -> "_Coefficients":
        return cls(p.u1, p.u2, p.alpha, np.array([p.c]), np.array([p.cp]),
                   np.array([p.u1p]), np.array([p.u2p]), np.array([p.alphap]))

    @classmethod
    def banks(cls, p: ModelParams) -> "_Coefficients":
        banks = p.banks()
        return cls(p.u1, p.u2, p.alpha,
                   np.array([b.c for b in banks]), np.array([b.backflow for b in banks]),
                   np.array([b.u1 for b in banks]), np.array([b.u2 for b in banks]),
                   np.zeros(len(banks)))


@njit(cache=True, nogil=True)
def _em_chunk(state, dt, u1, u2, alpha, mig, back, bu1, bu2, amp, z, step0,
              hit_lo, hit_hi, rec_slot, out):
    # state (dim, B), z (dim, T, B); replicates are the inner loop so steps of
    # different replicates interleave
    d, B = state.shape
    T = z.shape[1]
    sqdt = math.sqrt(dt)
    fx = np.empty(B)
    xs = state[0]
    for j in range(T):
        step = step0 + j + 1
        for b in range(B):
            x = xs[b]
            f = -u1 * x + u2 * (1.0 - x)
            for i in range(d - 1):
                f += mig[i] * (state[i + 1, b] - x)
            fx[b] = f
        for i in range(d - 1):
            ys = state[i + 1]
            zi = z[i + 1, j]
            a = amp[i]
            for b in range(B):
                y = ys[b]
                r = y + (-bu1[i] * y + bu2[i] * (1.0 - y) + back[i] * (xs[b] - y)) * dt
                if a != 0.0:
                    w = y * (1.0 - y)
                    if w < 0.0:
                        w = 0.0
                    r += a * math.sqrt(w) * sqdt * zi[b]
                if r <= 0.0:
                    if hit_lo[i + 1, b] < 0:
                        hit_lo[i + 1, b] = step
                    r = 0.0
                elif r >= 1.0:
                    if hit_hi[i + 1, b] < 0:
                        hit_hi[i + 1, b] = step
                    r = 1.0
                ys[b] = r
        z0 = z[0, j]
        for b in range(B):
            x = xs[b]
            v = x * (1.0 - x)
            if v < 0.0:
                v = 0.0
            r = x + fx[b] * dt + alpha * math.sqrt(v) * sqdt * z0[b]
            if r <= 0.0:
                if hit_lo[0, b] < 0:
                    hit_lo[0, b] = step
                r = 0.0
            elif r >= 1.0:
                if hit_hi[0, b] < 0:
                    hit_hi[0, b] = step
                r = 1.0
            xs[b] = r
        slot = rec_slot[step]
        if slot >= 0:
            out[slot] = state


def _n_steps(t: float, dt: float) -> int:
    n = round(t / dt)
    if abs(n * dt - t) > 1e-9 * max(t, dt):
        raise ValueError(f"time {t} is not a multiple of dt={dt}")
    return int(n)


def _check_controls(init, t_max, dt):
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    if not (math.isfinite(t_max) and t_max >= 0):
        raise ValueError("t_max must be finite and nonnegative")
    if t_max > 0 and dt > t_max:
        raise ValueError("dt must not exceed t_max")
    z = np.asarray(init, dtype=float)
    if not np.all(np.isfinite(z)) or np.any(z < 0) or np.any(z > 1):
        raise ValueError("initial state must lie in the unit cube")
    return z


def _draw(gen: np.random.Generator, T: int, coarsen: int) -> np.ndarray:
    if coarsen == 1:
        return gen.standard_normal(T)
    return gen.standard_normal(T * coarsen).reshape(T, coarsen).sum(axis=1) / math.sqrt(coarsen)


def _run_block(co: _Coefficients, init, n_steps, dt, seed, indices, rec_slot, n_rec, coarsen):
    B, d = len(indices), co.dim
    noisy = co.noisy()
    gens = [[stream_generator(seed, idx, coord) for coord in noisy] for idx in indices]
    state = np.tile(np.asarray(init, dtype=float)[:, None], (1, B))
    out = np.empty((n_rec, d, B))
    # a replicate started on the boundary has hit it at step 0
    hit_lo = np.tile(np.where(init <= 0, 0, -1).astype(np.int64)[:, None], (1, B))
    hit_hi = np.tile(np.where(init >= 1, 0, -1).astype(np.int64)[:, None], (1, B))
    if rec_slot[0] >= 0:
        out[rec_slot[0]] = state
    draws = np.zeros(d, dtype=np.int64)
    for start in range(0, n_steps, _CHUNK):
        T = min(_CHUNK, n_steps - start)
        z = np.zeros((d, T, B))
        for b in range(B):
            for g, coord in zip(gens[b], noisy):
                z[coord, :, b] = _draw(g, T, coarsen)
        for coord in noisy:
            draws[coord] += B * T * coarsen
        _em_chunk(state, dt, co.u1, co.u2, co.alpha, co.mig, co.back, co.bu1, co.bu2, co.amp,
                  z, start, hit_lo, hit_hi, rec_slot, out)
    return out.transpose(2, 0, 1), hit_lo.T, hit_hi.T, draws


@dataclass
class Ensemble:
    """States of many replicates at a few recording times."""

    times: np.ndarray
    states: np.ndarray  # (n_paths, n_times, dim)
    hit_lo: np.ndarray  # (n_paths, dim) first step index with raw <= 0, -1 if none
    hit_hi: np.ndarray
    dt: float
    seed: int
    noise_draws: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, t):
            raise KeyError(f"time {t} was not recorded")
        return self.states[:, k, :]


def _simulate(co: _Coefficients, init, record_steps, n_steps, dt, seed, indices,
              coarsen=1, block_size=_BLOCK, n_workers=1):
    if coarsen < 1:
        raise ValueError("coarsen must be a positive integer")
    rec_slot = np.full(n_steps + 1, -1, dtype=np.int64)
    for slot, s in enumerate(record_steps):
        rec_slot[s] = slot
    blocks = [indices[i:i + block_size] for i in range(0, len(indices), block_size)]

    def job(block):
        return _run_block(co, init, n_steps, dt, seed, block, rec_slot, len(record_steps), coarsen)

    if n_workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(job, blocks))
    else:
        results = [job(b) for b in blocks]
    states = np.concatenate([r[0] for r in results], axis=0)
    hit_lo = np.concatenate([r[1] for r in results], axis=0)
    hit_hi = np.concatenate([r[2] for r in results], axis=0)
    draws = np.sum([r[3] for r in results], axis=0)
    return states, hit_lo, hit_hi, draws


def simulate_ensemble(p: ModelParams, init, times: Sequence[float], dt: float, n_paths: int,
                      seed: int, *, banks: bool = False, coarsen: int = 1,
                      first_index: int = 0, block_size: int = _BLOCK, n_workers: int = 1) -> Ensemble:
    """Simulate ``n_paths`` replicates and keep the states at ``times``.

    ``banks=True`` integrates the k-seed-bank system instead of the
    two-dimensional one.  With ``coarsen=r`` each step consumes r normals, so
    the result is pathwise coupled to a run with step dt / r.
    """
    times = np.asarray(sorted(set(float(t) for t in times)))
    t_max = float(times[-1]) if len(times) else 0.0
    z0 = _check_controls(init, t_max, dt)
    co = _Coefficients.banks(p) if banks else _Coefficients.two_dim(p)
    if len(z0) != co.dim:
        raise ValueError(f"initial state needs {co.dim} coordinates")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n_steps = _n_steps(t_max, dt) if t_max > 0 else 0
    record = [_n_steps(t, dt) if t > 0 else 0 for t in times]
    indices = list(range(first_index, first_index + n_paths))
    states, lo, hi, draws = _simulate(co, z0, record, n_steps, dt, seed, indices,
                                      coarsen, block_size, n_workers)
    return Ensemble(times=times, states=states, hit_lo=lo, hit_hi=hi, dt=dt, seed=seed,
                    noise_draws=draws)


@dataclass
class Path:
    times: np.ndarray
    states: np.ndarray  # (n_steps + 1, dim)
    stream: Stream
    dt: float
    hit_index: np.ndarray  # (dim, 2): first grid index of raw <= 0 / raw >= 1, -1 if none
    noise_draws: np.ndarray = field(default=None)
    integrals: np.ndarray | None = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, 1] if self.states.shape[1] == 2 else self.states[:, 1:]

    def to_csv(self, fh: TextIO, header_comments: Sequence[str] = ()) -> None:
        for line in header_comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        d = self.states.shape[1]
        ys = ["y"] if d == 2 else [f"y{i}" for i in range(1, d)]
        w.writerow(["t", "x", *ys])
        for t, row in zip(self.times, self.states):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def _path(co, init, t_max, dt, stream, coarsen):
    if not isinstance(stream, Stream):
        stream = Stream(int(stream))
    z0 = _check_controls(init, t_max, dt)
    if len(z0) != co.dim:
        raise ValueError(f"initial state needs {co.dim} coordinates")
    n = _n_steps(t_max, dt) if t_max > 0 else 0
    states, lo, hi, draws = _simulate(co, z0, list(range(n + 1)), n, dt, stream.seed,
                                      [stream.index], coarsen)
    return Path(times=np.arange(n + 1) * dt, states=states[0], stream=stream, dt=dt,
                hit_index=np.stack([lo[0], hi[0]], axis=1), noise_draws=draws)


def simulate_path(p: ModelParams, init, t_max: float, dt: float, stream: Stream | int,
                  coarsen: int = 1) -> Path:
    return _path(_Coefficients.two_dim(p), init, t_max, dt, stream, coarsen)


def simulate_path_k(p: ModelParams, init, t_max: float, dt: float, stream: Stream | int,
                    coarsen: int = 1) -> Path:
    """Path of the active coordinate plus k noiseless seed banks."""
    return _path(_Coefficients.banks(p), init, t_max, dt, stream, coarsen)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    std_error: float
    n_paths: int
    dt: float

    def as_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_paths": self.n_paths, "dt": self.dt}


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    # np.mean / np.var use pairwise summation in replicate order: thread-count independent
    mean = float(np.mean(samples))
    se = float(np.sqrt(np.var(samples, ddof=1) / len(samples))) if len(samples) > 1 else 0.0
    return mean, se


def estimate_moments(p: ModelParams, init, exponents: Sequence[tuple[int, int]],
                     times: Sequence[float], dt: float = DEFAULT_DT, n_paths: int = DEFAULT_N_PATHS,
                     seed: int = 0, n_workers: int = 1) -> dict:
    """Monte Carlo E[X(t)^n Y(t)^m] for every exponent pair and time, from one ensemble."""
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    x0, y0 = _check_controls(init, max(times), dt)[:2]
    sim_times = [t for t in times if t > 0]
    ens = simulate_ensemble(p, (x0, y0), sim_times, dt, n_paths, seed, n_workers=n_workers) if sim_times else None
    out = {}
    for t in times:
        for n, m in exponents:
            if n < 0 or m < 0:
                raise ValueError("exponents must be nonnegative")
            if (n, m) == (0, 0):
                out[(n, m, t)] = MomentEstimate(1.0, 0.0, n_paths, dt)
            elif t == 0:
                out[(n, m, t)] = MomentEstimate(float(x0**n * y0**m), 0.0, n_paths, dt)
            else:
                s = ens.at(t)
                value, se = _mean_se(s[:, 0] ** n * s[:, 1] ** m)
                out[(n, m, t)] = MomentEstimate(value, se, n_paths, dt)
    return out


def estimate_moment(p: ModelParams, init, n: int, m: int, t: float, dt: float = DEFAULT_DT,
                    n_paths: int = DEFAULT_N_PATHS, seed: int = 0, n_workers: int = 1) -> MomentEstimate:
    return estimate_moments(p, init, [(n, m)], [t], dt, n_paths, seed, n_workers)[(n, m, t)]


@dataclass(frozen=True)
class HitEstimate:
    boundary: str
    frequency: float
    std_error: float
    n_paths: int
    dt: float

    def as_dict(self) -> dict:
        return {"boundary": self.boundary, "frequency": self.frequency,
                "std_error": self.std_error, "n_paths": self.n_paths, "dt": self.dt}


def _parse_boundary(which: str) -> tuple[int, int]:
    key = which.replace("->", "").replace("→", "").replace("=", "").replace(" ", "").upper()
    if key not in BOUNDARIES:
        raise ValueError(f"unknown boundary {which!r}; expected one of {BOUNDARIES}")
    return (0 if key[0] == "X" else 1), int(key[1])


def hitting_experiment(p: ModelParams, init, which: str, t_max: float, dt: float = DEFAULT_DT,
                       n_paths: int = DEFAULT_N_PATHS, seed: int = 0, n_workers: int = 1) -> HitEstimate:
    """Fraction of replicates whose raw Euler update crosses ``which`` before ``t_max``.

    The pre-clamp criterion over-counts true hits for finite dt.
    """
    z = _check_controls(init, t_max, dt)
    if np.any(z <= 0) or np.any(z >= 1):
        raise ValueError("hitting experiments start strictly inside the unit square")
    coord, side = _parse_boundary(which)
    ens = simulate_ensemble(p, z, [t_max], dt, n_paths, seed, n_workers=n_workers)
    flags = (ens.hit_hi if side else ens.hit_lo)[:, coord] >= 0
    f = float(np.mean(flags))
    se = math.sqrt(f * (1 - f) / n_paths)
    name = BOUNDARIES[2 * coord + side]
    return HitEstimate(name, f, se, n_paths, dt)


def hitting_sequence(p: ModelParams, init, which: str, t_max: float, dts: Sequence[float],
                     n_paths: int, seed: int, n_workers: int = 1) -> list[HitEstimate]:
    return [hitting_experiment(p, init, which, t_max, dt, n_paths, seed, n_workers) for dt in dts]
