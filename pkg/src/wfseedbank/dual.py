"""The killed block-counting chain dual to the diffusion.

States are pairs (n, m) of lines in the active and the second coordinate, plus
a single cemetery state ``DEAD``.  From (n, m) the chain jumps to

    (n-1, m)    at alpha^2 C(n,2) + n u2
    (n, m-1)    at alphap^2 C(m,2) + m u2p
    DEAD        at n u1 + m u1p
    (n-1, m+1)  at c n
    (n+1, m-1)  at cp m

so n + m never increases and a chain started at level N lives on the finite
set {(i, j): i + j <= N} plus DEAD.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

from .model import ModelParams, binom2
from .streams import Stream

__all__ = [
    "DEAD",
    "DualGenerator",
    "DualTrajectory",
    "DegenerateDualWarning",
    "dual_rates",
    "build_truncated_generator",
    "simulate_dual",
    "sample_dual_states",
    "absorption_probability",
    "transient_dual_expectation",
    "transient_dual_expectations",
    "transient_dual_distribution",
    "uniformized_apply",
    "DEFAULT_LEVEL_CAP",
    "POISSON_TAIL",
]

DEFAULT_LEVEL_CAP = 200
POISSON_TAIL = 1e-12


class _Dead:
    """Cemetery state of the dual chain."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DEAD"

    def __reduce__(self):
        return "DEAD"


DEAD = _Dead()


class DegenerateDualWarning(UserWarning):
    """All mutation rates vanish, so the chain is never absorbed at (0, 0)."""


def _check_state(s):
    if s is DEAD:
        return s
    n, m = s
    if int(n) != n or int(m) != m or n < 0 or m < 0:
        raise ValueError(f"invalid dual state {s!r}")
    return (int(n), int(m))


def dual_rates(p: ModelParams, s) -> list[tuple[object, float]]:
    """Nonzero outgoing jumps from ``s`` as (target, rate) pairs."""
    s = _check_state(s)
    if s is DEAD:
        return []
    n, m = s
    candidates = (
        ((n - 1, m), p.alpha**2 * binom2(n) + n * p.u2),
        ((n, m - 1), p.alphap**2 * binom2(m) + m * p.u2p),
        (DEAD, n * p.u1 + m * p.u1p),
        ((n - 1, m + 1), p.c * n),
        ((n + 1, m - 1), p.cp * m),
    )
    return [(target, rate) for target, rate in candidates if rate > 0]


@dataclass(frozen=True)
class DualGenerator:
    level: int
    states: tuple
    index: dict = field(repr=False)
    Q: sp.csr_matrix = field(repr=False)
    exit_rates: np.ndarray = field(repr=False)

    @property
    def uniformization_rate(self) -> float:
        return float(self.exit_rates.max(initial=0.0))

    @property
    def size(self) -> int:
        return len(self.states)

    def monomial_vector(self, x: float, y: float) -> np.ndarray:
        """v[(i, j)] = x^i y^j (0^0 = 1), v[DEAD] = 0."""
        v = np.zeros(self.size)
        for k, s in enumerate(self.states):
            if s is not DEAD:
                v[k] = x ** s[0] * y ** s[1]
        return v


def build_truncated_generator(p: ModelParams, N: int, cap: int = DEFAULT_LEVEL_CAP) -> DualGenerator:
    if N < 1:
        raise ValueError("truncation level must be at least 1")
    if N > cap:
        raise MemoryError(f"truncation level {N} exceeds the configured cap {cap}")
    states = [(n, lvl - n) for lvl in range(N + 1) for n in range(lvl + 1)]
    states.append(DEAD)
    index = {s: k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    exits = np.zeros(len(states))
    for k, s in enumerate(states):
        for target, rate in dual_rates(p, s):
            rows.append(k)
            cols.append(index[target])
            vals.append(rate)
            exits[k] += rate
    rows.extend(range(len(states)))
    cols.extend(range(len(states)))
    vals.extend(-exits)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return DualGenerator(level=N, states=tuple(states), index=index, Q=Q, exit_rates=exits)


@dataclass
class DualTrajectory:
    """Jump times and the states entered at them; the first entry is (0, start)."""

    times: list[float]
    states: list
    t_max: float
    stream: Stream

    @property
    def absorbed(self) -> bool:
        last = self.states[-1]
        return last is DEAD or last == (0, 0)

    def state_at(self, t: float):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[max(k, 0)]

    def to_csv(self, fh: TextIO, header_comments: Sequence[str] = ()) -> None:
        for line in header_comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "n", "m", "dead"])
        for t, s in zip(self.times, self.states):
            if s is DEAD:
                w.writerow([repr(float(t)), "", "", 1])
            else:
                w.writerow([repr(float(t)), s[0], s[1], 0])


def simulate_dual(p: ModelParams, start, t_max: float, stream: Stream | int) -> DualTrajectory:
    """Event-driven simulation up to absorption or ``t_max``."""
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if not isinstance(stream, Stream):
        stream = Stream(int(stream))
    rng = stream.generator(0)
    s = _check_state(start)
    t = 0.0
    times, states = [0.0], [s]
    cache: dict = {}
    while True:
        if s not in cache:
            jumps = dual_rates(p, s)
            total = sum(r for _, r in jumps)
            cache[s] = (jumps, total, np.cumsum([r for _, r in jumps]))
        jumps, total, cum = cache[s]
        if total == 0:
            break
        t += rng.exponential(1.0 / total)
        if t > t_max:
            break
        k = int(np.searchsorted(cum, rng.random() * total, side="right"))
        s = jumps[min(k, len(jumps) - 1)][0]
        times.append(t)
        states.append(s)
    return DualTrajectory(times=times, states=states, t_max=t_max, stream=stream)


def sample_dual_states(p: ModelParams, start, t: float, n_runs: int, seed: int) -> dict:
    """Empirical counts of the dual state at time ``t`` over independent replicates."""
    counts: dict = {}
    for i in range(n_runs):
        s = simulate_dual(p, start, t, Stream(seed, i)).states[-1]
        counts[s] = counts.get(s, 0) + 1
    return counts


def absorption_probability(p: ModelParams, start) -> float:
    """Probability that the dual started at ``start`` is absorbed at (0, 0).

    Solves the first-step equations on the transient states of level n + m
    with boundary values h(0, 0) = 1 and h(DEAD) = 0.
    """
    s = _check_state(start)
    if s is DEAD:
        return 0.0
    if s == (0, 0):
        return 1.0
    if p.total_mutation == 0:
        warnings.warn("no mutation: the dual never reaches (0, 0) from a nonempty sample",
                      DegenerateDualWarning, stacklevel=2)
        return 0.0
    gen = build_truncated_generator(p, s[0] + s[1], cap=max(DEFAULT_LEVEL_CAP, s[0] + s[1]))
    transient = [k for k, st in enumerate(gen.states) if st is not DEAD and st != (0, 0)]
    Q = gen.Q.tocsc()
    A = (-Q[transient][:, transient]).tocsc()
    b = np.asarray(Q[transient][:, [gen.index[(0, 0)]]].todense()).ravel()
    h = spsolve(A, b)
    if not np.all(np.isfinite(h)):
        raise np.linalg.LinAlgError("singular first-step system")
    scale = max(1.0, abs(A).max())
    resid = A @ h - b
    if np.abs(resid).max() > 1e-12 * scale:
        h = h + spsolve(A, -resid)
        resid = A @ h - b
        if np.abs(resid).max() > 1e-12 * scale:
            raise np.linalg.LinAlgError(f"first-step residual {np.abs(resid).max():.3e} too large")
    pos = transient.index(gen.index[s])
    return float(min(max(h[pos], 0.0), 1.0))


def uniformized_apply(gen: DualGenerator, v: np.ndarray, t: float, transpose: bool = False,
                      tail: float = POISSON_TAIL) -> np.ndarray:
    """exp(t Q) v (or v^T exp(t Q) with ``transpose``) by uniformization."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = np.asarray(v, dtype=float)
    lam = gen.uniformization_rate
    if t == 0 or lam == 0:
        return v.copy()
    P = sp.identity(gen.size, format="csr") + gen.Q / lam
    if transpose:
        P = P.T.tocsr()
    mu = lam * t
    k_max = int(poisson.isf(tail, mu)) + 1
    weights = poisson.pmf(np.arange(k_max + 1), mu)
    acc = weights[0] * v
    w = v
    for k in range(1, k_max + 1):
        w = P @ w
        acc = acc + weights[k] * w
    return acc


def transient_dual_expectations(p: ModelParams, level: int, x: float, y: float, t: float):
    """E_{(n,m)}[x^N(t) y^M(t); not dead] for every (n, m) with n + m <= level."""
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise ValueError("(x, y) must lie in the unit square")
    gen = build_truncated_generator(p, max(level, 1))
    out = uniformized_apply(gen, gen.monomial_vector(x, y), t)
    return {s: float(out[k]) for k, s in enumerate(gen.states) if s is not DEAD and s[0] + s[1] <= level}


def transient_dual_expectation(p: ModelParams, start, x: float, y: float, t: float) -> float:
    s = _check_state(start)
    if s is DEAD:
        return 0.0
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise ValueError("(x, y) must lie in the unit square")
    if s == (0, 0):
        return 1.0
    if t == 0:
        return float(x ** s[0] * y ** s[1])
    return transient_dual_expectations(p, s[0] + s[1], x, y, t)[s]


def transient_dual_distribution(p: ModelParams, start, t: float) -> dict:
    """Law of the dual state at time ``t`` (forward equation by uniformization)."""
    s = _check_state(start)
    if s is DEAD or s == (0, 0):
        return {s: 1.0}
    gen = build_truncated_generator(p, s[0] + s[1])
    e = np.zeros(gen.size)
    e[gen.index[s]] = 1.0
    pi = uniformized_apply(gen, e, t, transpose=True)
    return {st: float(pi[k]) for k, st in enumerate(gen.states)}
