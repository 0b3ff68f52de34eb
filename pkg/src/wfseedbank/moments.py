"""Mixed moments of the diffusion: stationary, finite-time, and diagnostics built on them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
from scipy.linalg import solve_banded

from .dual import absorption_probability, transient_dual_expectations
from .model import ModelParams, binom2, generator_on_monomial
from .sde import simulate_ensemble

__all__ = [
    "MomentTable",
    "stationary_moments",
    "stationary_moments_oracle",
    "finite_time_moments",
    "reversibility_defect",
    "stationarity_residual",
    "boundary_atom_estimate",
    "stationary_proxy_time",
    "MutationFreeError",
]


class MutationFreeError(ValueError):
    """Stationary moments need at least one positive mutation rate."""


@dataclass(frozen=True)
class MomentTable:
    level: int
    values: dict

    def __getitem__(self, key) -> float:
        return self.values[key]

    def keys(self):
        return self.values.keys()

    def sup_distance(self, other: "MomentTable") -> float:
        return max(abs(v - other.values[k]) for k, v in self.values.items())

    def violations(self, tol: float = 1e-12) -> list[str]:
        """Broken table invariants: unit mass, range, and decrease in each exponent."""
        out = []
        if abs(self.values.get((0, 0), 1.0) - 1.0) > tol:
            out.append("M(0,0) != 1")
        for (n, m), v in self.values.items():
            if not (-tol <= v <= 1 + tol):
                out.append(f"M({n},{m})={v} outside [0,1]")
            for nxt in ((n + 1, m), (n, m + 1)):
                if nxt in self.values and self.values[nxt] > v + tol:
                    out.append(f"M{nxt} > M({n},{m})")
        return out

    def moment_matrix(self) -> np.ndarray:
        """Level-2 moment matrix for the basis (1, x, y)."""
        M = self.values
        return np.array([[1.0, M[(1, 0)], M[(0, 1)]],
                         [M[(1, 0)], M[(2, 0)], M[(1, 1)]],
                         [M[(0, 1)], M[(1, 1)], M[(0, 2)]]])

    def to_csv(self, fh: TextIO, header_comments: Sequence[str] = ()) -> None:
        for line in header_comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "value"])
        for (n, m), v in sorted(self.values.items(), key=lambda kv: (sum(kv[0]), -kv[0][1])):
            w.writerow([n, m, repr(float(v))])


def _require_mutation(p: ModelParams):
    if not p.total_mutation > 0:
        raise MutationFreeError("u1 + u2 + u1p + u2p must be positive")


def stationary_moments(p: ModelParams, N: int) -> MomentTable:
    """Stationary moments M_{n,m}, n + m <= N, by the level-by-level recursion.

    For each level l the l + 1 unknowns M_{n, l-n} satisfy

        D M_{n,m} - c n M_{n-1,m+1} - cp m M_{n+1,m-1} = a_n M_{n-1,m} + a'_m M_{n,m-1}

    with a_n = alpha^2 C(n,2) + n u2, a'_m = alphap^2 C(m,2) + m u2p and
    D = a_n + a'_m + u1 n + u1p m + c n + cp m; the right side only involves
    level l - 1 so every level is one tridiagonal solve.
    """
    _require_mutation(p)
    if N < 0:
        raise ValueError("level must be nonnegative")
    M = {(0, 0): 1.0}
    for lvl in range(1, N + 1):
        ns = np.arange(lvl + 1)
        ms = lvl - ns
        a = np.array([p.alpha**2 * binom2(n) + n * p.u2 for n in ns])
        ap = np.array([p.alphap**2 * binom2(m) + m * p.u2p for m in ms])
        D = a + ap + p.u1 * ns + p.u1p * ms + p.c * ns + p.cp * ms
        rhs = np.array([(a[i] * M[(n - 1, m)] if n > 0 else 0.0) + (ap[i] * M[(n, m - 1)] if m > 0 else 0.0)
                        for i, (n, m) in enumerate(zip(ns, ms))])
        # unknown index = n; (n-1, m+1) is the left neighbour, (n+1, m-1) the right one
        ab = np.zeros((3, lvl + 1))
        ab[0, 1:] = -p.cp * ms[:-1]  # row n, column n+1
        ab[1] = D
        ab[2, :-1] = -p.c * ns[1:]  # row n, column n-1
        sol = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError(f"singular level-{lvl} system")
        for n, m, v in zip(ns, ms, sol):
            M[(int(n), int(m))] = float(v)
    return MomentTable(N, M)


def stationary_moments_oracle(p: ModelParams, N: int) -> MomentTable:
    """Same table from absorption probabilities of the dual, one full linear solve per entry."""
    _require_mutation(p)
    return MomentTable(N, {(n, lvl - n): absorption_probability(p, (n, lvl - n))
                           for lvl in range(N + 1) for n in range(lvl + 1)})


def finite_time_moments(p: ModelParams, x: float, y: float, N: int, t: float) -> MomentTable:
    """E^{x,y}[X(t)^n Y(t)^m] for n + m <= N through the dual chain."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return MomentTable(N, {(n, lvl - n): float(x**n * y ** (lvl - n))
                               for lvl in range(N + 1) for n in range(lvl + 1)})
    return MomentTable(N, transient_dual_expectations(p, N, x, y, t))


def _cross_terms(p: ModelParams, M) -> tuple[float, float]:
    f_ag = p.u2p * M[(1, 0)] - (p.u1p + p.u2p) * M[(1, 1)] + p.cp * (M[(2, 0)] - M[(1, 1)])
    g_af = p.u2 * M[(0, 1)] - (p.u1 + p.u2) * M[(1, 1)] + p.c * (M[(0, 2)] - M[(1, 1)])
    return f_ag, g_af


def reversibility_defect(p: ModelParams) -> float:
    """E[x * A y] - E[y * A x] under the stationary law; zero for a reversible diffusion."""
    f_ag, g_af = _cross_terms(p, stationary_moments(p, 2).values)
    return f_ag - g_af


def stationarity_residual(p: ModelParams) -> dict:
    """Both cross terms, their sum, and E[A(xy)] taken from the generator directly.

    E[x A y] + E[y A x] = E[A(xy)] = 0 because the diffusion matrix is diagonal.
    """
    M = stationary_moments(p, 2).values
    f_ag, g_af = _cross_terms(p, M)
    return {"f_Ag": f_ag, "g_Af": g_af, "sum": f_ag + g_af,
            "generator_xy": generator_on_monomial(p, 1, 1).expectation(M)}


def stationary_proxy_time(p: ModelParams) -> float:
    """Heuristic time after which the law is treated as stationary: 50 / smallest positive rate."""
    rates = [r for r in (p.u1, p.u2, p.u1p, p.u2p, p.c, p.cp) if r > 0]
    return 50.0 / min(rates)


def boundary_atom_estimate(p: ModelParams, t: float | None = None, dt: float = 1e-3,
                           n_paths: int = 100_000, epsilons: Sequence[float] = (1e-1, 1e-2, 1e-3),
                           seed: int = 0, init=(0.5, 0.5), n_workers: int = 1) -> dict:
    """Share of replicates within epsilon of a boundary at a large time, for each epsilon.

    Returns {"t", "dt", "n_paths", "epsilon", "fraction", "std_error",
    "x_fraction", "y_fraction", "x_std_error", "y_std_error"}, one entry per
    epsilon in the order given; "fraction" counts a replicate when either
    coordinate is within epsilon of {0, 1}.
    """
    if t is None:
        t = stationary_proxy_time(p)
    t = round(t / dt) * dt
    ens = simulate_ensemble(p, init, [t], dt, n_paths, seed, n_workers=n_workers)
    s = ens.at(t)
    dist = np.minimum(s, 1.0 - s)
    out = {"t": t, "dt": dt, "n_paths": n_paths, "epsilon": [float(e) for e in epsilons],
           "fraction": [], "std_error": [],
           "x_fraction": [], "y_fraction": [], "x_std_error": [], "y_std_error": []}
    for eps in epsilons:
        f = float(np.mean(np.any(dist < eps, axis=1)))
        out["fraction"].append(f)
        out["std_error"].append(math.sqrt(f * (1 - f) / n_paths))
        for name, col in (("x", 0), ("y", 1)):
            f = float(np.mean(dist[:, col] < eps))
            out[f"{name}_fraction"].append(f)
            out[f"{name}_std_error"].append(math.sqrt(f * (1 - f) / n_paths))
    return out
