"""Delay-equation form of the seed bank model.

Each bank's frequency is an exponentially weighted average of the active
frequency's past,

    Y_i(t) = y_i exp(-lam_i t) + int_0^t exp(-lam_i (t - s)) (u2_i + K_i c_i X(s)) ds,
    lam_i  = u1_i + u2_i + K_i c_i,

so the active coordinate solves a one-dimensional SDE with memory.  Two
integrators are provided: ``simulate_sdde_lift`` carries the integral as an
auxiliary state (O(1) memory), ``simulate_sdde_quadrature`` re-evaluates it
from the stored history with the trapezoidal rule at every step.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import ModelParams
from .sde import Path, _check_controls, _n_steps
from .streams import Stream

__all__ = [
    "DelayKernelState",
    "simulate_sdde_lift",
    "simulate_sdde_quadrature",
    "delay_integral_trapezoid",
    "pathwise_deviation",
    "deviation_report",
    "GridMismatchError",
    "UncoupledComparisonWarning",
    "DEFAULT_HISTORY_CAP",
]

DEFAULT_HISTORY_CAP = 2_000_000


class GridMismatchError(ValueError):
    pass


class UncoupledComparisonWarning(UserWarning):
    """The two paths were driven by different noise streams."""


@dataclass(frozen=True)
class DelayKernelState:
    """Running delay integrals I_i(t) and their decay rates lam_i."""

    integrals: np.ndarray
    decay: np.ndarray
    source: np.ndarray  # u2_i
    gain: np.ndarray  # K_i c_i

    @classmethod
    def initial(cls, p: ModelParams) -> "DelayKernelState":
        banks = p.banks()
        return cls(np.zeros(len(banks)), np.array([b.decay for b in banks]),
                   np.array([b.u2 for b in banks]), np.array([b.backflow for b in banks]))

    def bound(self) -> np.ndarray:
        """Upper bound (u2_i + K_i c_i) / lam_i valid at all times."""
        return (self.source + self.gain) / self.decay

    def advance(self, x: float, dt: float) -> "DelayKernelState":
        """One step with X frozen at ``x`` over [t, t + dt] (exact for constant X)."""
        e = np.exp(-self.decay * dt)
        new = self.integrals * e + (self.source + self.gain * x) * (-np.expm1(-self.decay * dt)) / self.decay
        return DelayKernelState(new, self.decay, self.source, self.gain)

    def banks_at(self, y0: np.ndarray, t: float) -> np.ndarray:
        return y0 * np.exp(-self.decay * t) + self.integrals


@njit(cache=True)
def _lift_kernel(x0, y0, n, dt, u1, u2, alpha, mig, decay, source, gain, z, xs, integ, hits):
    k = len(mig)
    sqdt = math.sqrt(dt)
    shrink = np.exp(-decay * dt)
    frac = -np.expm1(-decay * dt) / decay
    x = x0
    xs[0] = x0
    for i in range(k):
        integ[0, i] = 0.0
    for j in range(n):
        t = j * dt
        f = -u1 * x + u2 * (1.0 - x)
        for i in range(k):
            yi = y0[i] * math.exp(-decay[i] * t) + integ[j, i]
            f += mig[i] * (yi - x)
        v = x * (1.0 - x)
        if v < 0.0:
            v = 0.0
        r = x + f * dt + alpha * math.sqrt(v) * sqdt * z[j]
        for i in range(k):
            integ[j + 1, i] = integ[j, i] * shrink[i] + (source[i] + gain[i] * x) * frac[i]
        if r <= 0.0:
            if hits[0] < 0:
                hits[0] = j + 1
            r = 0.0
        elif r >= 1.0:
            if hits[1] < 0:
                hits[1] = j + 1
            r = 1.0
        x = r
        xs[j + 1] = x


@njit(cache=True)
def _quadrature_kernel(x0, n, dt, u1, u2, alpha, mig, y0, decay, source, gain, z, xs, ys, hits):
    k = len(mig)
    sqdt = math.sqrt(dt)
    xs[0] = x0
    for i in range(k):
        ys[0, i] = y0[i]
    # kernel weights exp(-lam_i * l * dt) for lag l
    w = np.empty((k, n + 1))
    for i in range(k):
        for l in range(n + 1):
            w[i, l] = math.exp(-decay[i] * l * dt)
    for j in range(n):
        x = xs[j]
        f = -u1 * x + u2 * (1.0 - x)
        for i in range(k):
            yi = ys[j, i]
            f += mig[i] * (yi - x)
        v = x * (1.0 - x)
        if v < 0.0:
            v = 0.0
        r = x + f * dt + alpha * math.sqrt(v) * sqdt * z[j]
        if r <= 0.0:
            if hits[0] < 0:
                hits[0] = j + 1
            r = 0.0
        elif r >= 1.0:
            if hits[1] < 0:
                hits[1] = j + 1
            r = 1.0
        xs[j + 1] = r
        m = j + 1
        for i in range(k):
            acc = 0.5 * (w[i, m] * (source[i] + gain[i] * xs[0]) + source[i] + gain[i] * xs[m])
            for l in range(1, m):
                acc += w[i, m - l] * (source[i] + gain[i] * xs[l])
            yi = y0[i] * w[i, m] + acc * dt
            if yi < 0.0:
                yi = 0.0
            elif yi > 1.0:
                yi = 1.0
            ys[m, i] = yi


def delay_integral_trapezoid(xs: np.ndarray, dt: float, decay: float, source: float, gain: float) -> float:
    """Trapezoidal value of int_0^t exp(-decay (t - s)) (source + gain X(s)) ds over a sampled history."""
    xs = np.asarray(xs, dtype=float)
    if len(xs) < 2:
        return 0.0
    lags = np.arange(len(xs) - 1, -1, -1) * dt
    return float(np.trapezoid(np.exp(-decay * lags) * (source + gain * xs), dx=dt))


def _prepare(p: ModelParams, init, t_max, dt, stream):
    if not isinstance(stream, Stream):
        stream = Stream(int(stream))
    z0 = _check_controls(init, t_max, dt)
    banks = p.banks()
    if len(z0) != len(banks) + 1:
        raise ValueError(f"initial state needs {len(banks) + 1} coordinates")
    n = _n_steps(t_max, dt) if t_max > 0 else 0
    # same substream and consumption order as the Euler scheme for the active coordinate
    noise = stream.generator(0).standard_normal(n) if p.alpha != 0 and n else np.zeros(n)
    kern = DelayKernelState.initial(p)
    mig = np.array([b.c for b in banks])
    return stream, z0, n, noise, kern, mig


def _hit_table(xs_hits, ys):
    d = ys.shape[1] + 1
    table = np.full((d, 2), -1, dtype=np.int64)
    table[0] = xs_hits
    for i in range(1, d):
        lo = np.flatnonzero(ys[:, i - 1] <= 0)
        hi = np.flatnonzero(ys[:, i - 1] >= 1)
        table[i, 0] = lo[0] if len(lo) else -1
        table[i, 1] = hi[0] if len(hi) else -1
    return table


def simulate_sdde_lift(p: ModelParams, init, t_max: float, dt: float, stream: Stream | int) -> Path:
    """Integrate the delay equation carrying each bank's integral as a state.

    Between grid points X is frozen, which makes the integral update exact;
    bank frequencies are rebuilt as y_i exp(-lam_i t) + I_i(t).  The returned
    path carries the integrals in ``Path.integrals``.
    """
    stream, z0, n, noise, kern, mig = _prepare(p, init, t_max, dt, stream)
    xs = np.empty(n + 1)
    integ = np.empty((n + 1, len(mig)))
    hits = np.full(2, -1, dtype=np.int64)
    x0 = float(z0[0])
    if x0 <= 0:
        hits[0] = 0
    if x0 >= 1:
        hits[1] = 0
    _lift_kernel(x0, z0[1:], n, dt, p.u1, p.u2, p.alpha, mig, kern.decay, kern.source,
                 kern.gain, noise, xs, integ, hits)
    times = np.arange(n + 1) * dt
    # rounding can push a full bank a few ulps past 1
    ys = np.clip(z0[1:] * np.exp(-np.outer(times, kern.decay)) + integ, 0.0, 1.0)
    states = np.column_stack([xs, ys])
    draws = np.zeros(len(z0), dtype=np.int64)
    draws[0] = len(noise) if p.alpha != 0 else 0
    return Path(times=times, states=states, stream=stream, dt=dt, hit_index=_hit_table(hits, ys),
                noise_draws=draws, integrals=integ)


def simulate_sdde_quadrature(p: ModelParams, init, t_max: float, dt: float, stream: Stream | int,
                             history_cap: int = DEFAULT_HISTORY_CAP) -> Path:
    """Integrate the delay equation re-evaluating the memory integral by trapezoidal quadrature.

    Cost is quadratic in the number of steps; memory is linear.
    """
    n_hist = _n_steps(t_max, dt) + 1 if t_max > 0 else 1
    if n_hist > history_cap:
        raise MemoryError(f"history of {n_hist} points exceeds the cap of {history_cap}")
    stream, z0, n, noise, kern, mig = _prepare(p, init, t_max, dt, stream)
    xs = np.empty(n + 1)
    ys = np.empty((n + 1, len(mig)))
    hits = np.full(2, -1, dtype=np.int64)
    x0 = float(z0[0])
    if x0 <= 0:
        hits[0] = 0
    if x0 >= 1:
        hits[1] = 0
    _quadrature_kernel(x0, n, dt, p.u1, p.u2, p.alpha, mig, z0[1:], kern.decay, kern.source,
                       kern.gain, noise, xs, ys, hits)
    draws = np.zeros(len(z0), dtype=np.int64)
    draws[0] = len(noise) if p.alpha != 0 else 0
    return Path(times=np.arange(n + 1) * dt, states=np.column_stack([xs, ys]), stream=stream,
                dt=dt, hit_index=_hit_table(hits, ys), noise_draws=draws)


def pathwise_deviation(a: Path, b: Path) -> float:
    """Sup over the grid and all coordinates of |a - b|."""
    if a.states.shape != b.states.shape or a.times.shape != b.times.shape or not np.allclose(
            a.times, b.times, rtol=0, atol=1e-12):
        raise GridMismatchError("paths live on different time grids")
    if a.stream != b.stream:
        warnings.warn("paths come from different noise streams; the deviation is not a coupling test",
                      UncoupledComparisonWarning, stacklevel=2)
    return float(np.max(np.abs(a.states - b.states)))


def deviation_report(a: Path, b: Path, integrator_pair: tuple[str, str]) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncoupledComparisonWarning)
        dev = pathwise_deviation(a, b)
    return {"dt": a.dt, "t_max": float(a.times[-1]), "sup_deviation": dev,
            "integrator_pair": list(integrator_pair), "coupled": a.stream == b.stream}
