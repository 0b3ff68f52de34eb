"""Parameters, states, drift/diffusion coefficients and the generator on monomials.

Covers the general two-dimensional diffusion

    dX = [-u1 X + u2 (1 - X) + c (Y - X)] dt + alpha sqrt(X (1 - X)) dB
    dY = [-u1p Y + u2p (1 - Y) + cp (X - Y)] dt + alphap sqrt(Y (1 - Y)) dB'

(seed bank: alpha = 1, alphap = 0, cp = c K; two-island: alphap > 0) and the
variant with k noiseless seed banks attached to the active coordinate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

__all__ = [
    "SeedBank",
    "ModelParams",
    "DiffusionState",
    "MonomialCombo",
    "validate_params",
    "drift",
    "diffusion_amplitude",
    "drift_k",
    "generator_on_monomial",
    "generator_terms",
    "binom2",
    "params_from_mapping",
    "params_to_mapping",
    "load_params",
    "dump_params",
]

_SCALAR_KEYS = ("u1", "u2", "u1p", "u2p", "c", "cp", "alpha", "alphap")
_BANK_KEYS = ("c", "K", "u1", "u2")


def binom2(n):
    """n choose 2 with the convention C(0,2) = C(1,2) = 0."""
    return n * (n - 1) // 2 if n >= 2 else 0


@dataclass(frozen=True)
class SeedBank:
    """One dormant compartment: exchange rate c, relative size K, mutation u1, u2."""

    c: float
    K: float
    u1: float = 0.0
    u2: float = 0.0

    @property
    def decay(self) -> float:
        """Rate at which the bank forgets its initial state, u1 + u2 + K c."""
        return self.u1 + self.u2 + self.K * self.c

    @property
    def backflow(self) -> float:
        # the bank-side migration rate; kept as K * c so k=1 matches cp = c * K bit for bit
        return self.K * self.c


@dataclass(frozen=True)
class ModelParams:
    u1: float = 0.0
    u2: float = 0.0
    u1p: float = 0.0
    u2p: float = 0.0
    c: float = 1.0
    cp: float = 1.0
    alpha: float = 1.0
    alphap: float = 0.0
    seedbanks: tuple[SeedBank, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "seedbanks", tuple(self.seedbanks))
        validate_params(self)

    @classmethod
    def seed_bank(cls, u1=0.0, u2=0.0, u1p=0.0, u2p=0.0, c=1.0, K=1.0) -> "ModelParams":
        """The seed bank diffusion: unit noise on X, none on Y, cp = c K."""
        if not (math.isfinite(K) and K > 0):
            raise ValueError("seed bank size K must be positive")
        return cls(u1=u1, u2=u2, u1p=u1p, u2p=u2p, c=c, cp=c * K, alpha=1.0, alphap=0.0)

    @classmethod
    def two_island(cls, u1=0.0, u2=0.0, u1p=0.0, u2p=0.0, c=1.0, cp=1.0,
                   alpha=1.0, alphap=1.0) -> "ModelParams":
        return cls(u1=u1, u2=u2, u1p=u1p, u2p=u2p, c=c, cp=cp, alpha=alpha, alphap=alphap)

    @classmethod
    def multi_seed_bank(cls, banks: Sequence[SeedBank], u1=0.0, u2=0.0, alpha=1.0) -> "ModelParams":
        """Active population with k >= 1 seed banks.

        The scalar pair fields (c, cp, u1p, u2p) mirror the first bank so the
        object still describes a valid two-dimensional instance.
        """
        banks = tuple(banks)
        if not banks:
            raise ValueError("at least one seed bank is required")
        b = banks[0]
        return cls(u1=u1, u2=u2, u1p=b.u1, u2p=b.u2, c=b.c, cp=b.c * b.K,
                   alpha=alpha, alphap=0.0, seedbanks=banks)

    @property
    def k(self) -> int:
        return len(self.seedbanks)

    @property
    def total_mutation(self) -> float:
        return self.u1 + self.u2 + self.u1p + self.u2p

    def banks(self) -> tuple[SeedBank, ...]:
        """Seed banks of the k-bank model.

        Without an explicit list the Y coordinate is read as a single bank
        (c, K = cp / c, u1p, u2p); that reading ignores alphap.
        """
        if self.seedbanks:
            return self.seedbanks
        return (SeedBank(c=self.c, K=self.cp / self.c, u1=self.u1p, u2=self.u2p),)

    def swapped(self) -> "ModelParams":
        """Relabel the coordinates (x <-> y)."""
        return ModelParams(u1=self.u1p, u2=self.u2p, u1p=self.u1, u2p=self.u2,
                           c=self.cp, cp=self.c, alpha=self.alphap, alphap=self.alpha)

    def replace(self, **changes) -> "ModelParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ModelParams(**values)


def validate_params(raw: ModelParams) -> ModelParams:
    """Return ``raw`` unchanged if every rate is finite and admissible, else raise ValueError."""
    for key in _SCALAR_KEYS:
        v = getattr(raw, key)
        if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
            raise ValueError(f"{key} must be a real number, got {v!r}")
        if not math.isfinite(v):
            raise ValueError(f"{key} must be finite, got {v!r}")
        if v < 0:
            raise ValueError(f"{key} must be nonnegative, got {v!r}")
    if raw.c <= 0 or raw.cp <= 0:
        raise ValueError("migration rate must be positive")
    for i, b in enumerate(raw.seedbanks):
        if not isinstance(b, SeedBank):
            raise ValueError(f"seedbank {i} is not a SeedBank record")
        for key in _BANK_KEYS:
            v = getattr(b, key)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"seedbank {i}: {key} must be finite and nonnegative, got {v!r}")
        if b.c <= 0:
            raise ValueError(f"seedbank {i}: migration rate must be positive")
        if b.K <= 0:
            raise ValueError(f"seedbank {i}: seed bank size K must be positive")
    return raw


@dataclass(frozen=True)
class DiffusionState:
    x: float
    y: float | tuple[float, ...]

    def __post_init__(self):
        ys = self.y if isinstance(self.y, tuple) else (self.y,)
        for v in (self.x, *ys):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"state coordinate {v!r} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        ys = self.y if isinstance(self.y, tuple) else (self.y,)
        return np.array((self.x, *ys), dtype=float)


def _coords(s):
    if isinstance(s, DiffusionState):
        return s.as_array()
    return np.asarray(s, dtype=float)


def drift(p: ModelParams, s) -> tuple[float, float]:
    x, y = _coords(s)[:2]
    return (-p.u1 * x + p.u2 * (1 - x) + p.c * (y - x),
            -p.u1p * y + p.u2p * (1 - y) + p.cp * (x - y))


def diffusion_amplitude(p: ModelParams, s) -> tuple[float, float]:
    x, y = _coords(s)[:2]
    return (p.alpha * math.sqrt(max(x * (1 - x), 0.0)),
            p.alphap * math.sqrt(max(y * (1 - y), 0.0)))


def drift_k(p: ModelParams, s) -> tuple[float, ...]:
    """Drift of the active coordinate and each seed bank coordinate."""
    z = _coords(s)
    banks = p.banks()
    if len(z) != len(banks) + 1:
        raise ValueError(f"state has {len(z)} coordinates, model needs {len(banks) + 1}")
    x = z[0]
    fx = -p.u1 * x + p.u2 * (1 - x)
    out = []
    for b, y in zip(banks, z[1:]):
        fx += b.c * (y - x)
        out.append(-b.u1 * y + b.u2 * (1 - y) + b.backflow * (x - y))
    return (fx, *out)


class MonomialCombo:
    """A real polynomial in (x, y) stored as {(i, j): coefficient}.

    Terms are kept in canonical order (total degree, then i); zero
    coefficients are dropped.
    """

    def __init__(self, terms: Mapping[tuple[int, int], float] | Iterable = ()):
        acc: dict[tuple[int, int], float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for (i, j), coef in items:
            if i < 0 or j < 0:
                raise ValueError(f"negative exponent in {(i, j)}")
            acc[(i, j)] = acc.get((i, j), 0) + coef
        for key, coef in acc.items():
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient at {key}")
        self._terms = {k: acc[k] for k in sorted(acc, key=lambda e: (e[0] + e[1], e[0])) if acc[k] != 0}

    @property
    def terms(self) -> dict[tuple[int, int], float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if not isinstance(other, MonomialCombo):
            return NotImplemented
        return self._terms == other._terms

    def __add__(self, other: "MonomialCombo") -> "MonomialCombo":
        return MonomialCombo(list(self.items()) + list(other.items()))

    def scale(self, a) -> "MonomialCombo":
        return MonomialCombo({k: a * v for k, v in self.items()})

    def degree(self) -> int:
        return max((i + j for i, j in self._terms), default=0)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for (i, j), coef in self.items():
            out = out + float(coef) * x**i * y**j
        return out[()] if out.ndim == 0 else out

    def expectation(self, moments: Mapping[tuple[int, int], float]) -> float:
        """Replace each monomial x^i y^j by moments[(i, j)]."""
        return float(sum(float(coef) * moments[key] for key, coef in self.items()))

    def __repr__(self):
        body = " + ".join(f"{c!r}*x^{i}y^{j}" for (i, j), c in self.items())
        return f"MonomialCombo({body or '0'})"


def generator_terms(u1, u2, u1p, u2p, c, cp, alpha, alphap, n: int, m: int) -> MonomialCombo:
    """Generator applied to x^n y^m for arbitrary numeric parameter types.

    Accepting plain numbers lets callers pass ``fractions.Fraction`` for exact
    coefficient arithmetic.
    """
    if n < 0 or m < 0:
        raise ValueError("exponents must be nonnegative")
    terms = []
    here = (n, m)

    def jump(target, rate):
        if rate:
            terms.append((target, rate))
            terms.append((here, -rate))

    jump((n - 1, m), alpha**2 * binom2(n) + n * u2)
    jump((n, m - 1), alphap**2 * binom2(m) + m * u2p)
    jump((n - 1, m + 1), c * n)
    jump((n + 1, m - 1), cp * m)
    kill = n * u1 + m * u1p
    if kill:
        terms.append((here, -kill))
    return MonomialCombo(terms)


def generator_on_monomial(p: ModelParams, n: int, m: int) -> MonomialCombo:
    return generator_terms(p.u1, p.u2, p.u1p, p.u2p, p.c, p.cp, p.alpha, p.alphap, n, m)


def params_to_mapping(p: ModelParams) -> dict:
    out = {key: float(getattr(p, key)) for key in _SCALAR_KEYS}
    if p.seedbanks:
        out["seedbank"] = [{key: float(getattr(b, key)) for key in _BANK_KEYS} for b in p.seedbanks]
    return out


def params_from_mapping(raw: Mapping) -> ModelParams:
    unknown = set(raw) - set(_SCALAR_KEYS) - {"seedbank"}
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    banks = []
    for i, block in enumerate(raw.get("seedbank", ())):
        bad = set(block) - set(_BANK_KEYS)
        if bad:
            raise ValueError(f"seedbank {i}: unknown keys {sorted(bad)}")
        if "c" not in block or "K" not in block:
            raise ValueError(f"seedbank {i}: c and K are required")
        banks.append(SeedBank(**{k: float(v) for k, v in block.items()}))
    scalars = {k: float(raw[k]) for k in _SCALAR_KEYS if k in raw}
    return ModelParams(**scalars, seedbanks=tuple(banks))


def load_params(path: str | Path) -> ModelParams:
    """Read a TOML parameter document (flat keys plus optional [[seedbank]] blocks)."""
    with open(path, "rb") as fh:
        return params_from_mapping(tomllib.load(fh))


def dump_params(p: ModelParams) -> str:
    return tomli_w.dumps(params_to_mapping(p))
