"""Which faces of the unit square the diffusion can reach from the interior.

X reaches 0 iff 2 u2 < alpha^2 and reaches 1 iff 2 u1 < alpha^2 (primed
analogues for Y).  Attainable faces come with the corner values used by the
polynomial-diffusion hitting criterion; unattainable ones with a constant
kappa > 0 such that

    2 A p - h_p . grad p >= -2 kappa p   on [0, 1]^2,

where p is the facet polynomial and a grad p = h_p p.  The left side minus
the right side is affine in (x, y), so checking it at the four corners in
exact rational arithmetic certifies the inequality.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import ModelParams, MonomialCombo, generator_terms, params_to_mapping
from .sde import BOUNDARIES, hitting_sequence

__all__ = [
    "BoundaryVerdict",
    "McKeanCertificate",
    "NoCertificateError",
    "EmpiricalConfig",
    "classify_boundaries",
    "fl16_corner_check",
    "mckean_certificate",
    "h_identity_residual",
    "classification_report",
    "facet_polynomial",
]

_CORNER = {"X0": (0.0, 0.0), "X1": (1.0, 1.0), "Y0": (0.0, 0.0), "Y1": (1.0, 1.0)}
_UNIT_CORNERS = ((0, 0), (1, 0), (0, 1), (1, 1))


class NoCertificateError(ValueError):
    """The face is attainable, so no kappa certificate exists."""


def _key(boundary: str) -> str:
    key = boundary.replace("=", "").replace("->", "").replace(" ", "").upper()
    if key not in BOUNDARIES:
        raise ValueError(f"unknown boundary {boundary!r}; expected one of {BOUNDARIES}")
    return key


def _margin(p: ModelParams, key: str) -> Fraction:
    """Exact 2 u - alpha^2 for the face; floats are binary rationals, so no rounding enters."""
    q = _exact(p)
    return {
        "X0": 2 * q["u2"] - q["alpha"] ** 2,
        "X1": 2 * q["u1"] - q["alpha"] ** 2,
        "Y0": 2 * q["u2p"] - q["alphap"] ** 2,
        "Y1": 2 * q["u1p"] - q["alphap"] ** 2,
    }[key]


def facet_polynomial(boundary: str) -> MonomialCombo:
    return {
        "X0": MonomialCombo({(1, 0): 1}),
        "X1": MonomialCombo({(0, 0): 1, (1, 0): -1}),
        "Y0": MonomialCombo({(0, 1): 1}),
        "Y1": MonomialCombo({(0, 0): 1, (0, 1): -1}),
    }[_key(boundary)]


def _gradient(key: str) -> tuple[int, int]:
    return {"X0": (1, 0), "X1": (-1, 0), "Y0": (0, 1), "Y1": (0, -1)}[key]


def _h_vector(key: str, alpha, alphap) -> tuple[MonomialCombo, MonomialCombo]:
    zero = MonomialCombo()
    return {
        "X0": (MonomialCombo({(0, 0): alpha**2, (1, 0): -alpha**2}), zero),
        "X1": (MonomialCombo({(1, 0): -alpha**2}), zero),
        "Y0": (zero, MonomialCombo({(0, 0): alphap**2, (0, 1): -alphap**2})),
        "Y1": (zero, MonomialCombo({(0, 1): -alphap**2})),
    }[key]


def _exact(p: ModelParams) -> dict:
    return {k: Fraction(getattr(p, k)) for k in ("u1", "u2", "u1p", "u2p", "c", "cp", "alpha", "alphap")}


def _apply_generator(q: dict, poly: MonomialCombo) -> MonomialCombo:
    out = MonomialCombo()
    for (i, j), coef in poly.items():
        out = out + generator_terms(q["u1"], q["u2"], q["u1p"], q["u2p"], q["c"], q["cp"],
                                    q["alpha"], q["alphap"], i, j).scale(coef)
    return out


def _criterion_polynomial(q: dict, key: str) -> MonomialCombo:
    """2 A p - h_p . grad p with exact coefficients."""
    p = facet_polynomial(key)
    hx, hy = _h_vector(key, q["alpha"], q["alphap"])
    gx, gy = _gradient(key)
    return _apply_generator(q, p).scale(2) + hx.scale(-gx) + hy.scale(-gy)


def _eval(poly: MonomialCombo, x, y):
    return sum(coef * x**i * y**j for (i, j), coef in poly.items())


def fl16_corner_check(p: ModelParams, boundary: str, exact: bool = False):
    """(A p(z), 2 A p(z) - h_p(z) . grad p(z)) at the corner z on the face.

    A first entry >= 0 with a negative second entry means the face is hit
    with positive probability from near z.  ``exact=True`` returns Fractions.
    """
    key = _key(boundary)
    q = _exact(p)
    z = tuple(Fraction(v) for v in _CORNER[key])
    ap = _eval(_apply_generator(q, facet_polynomial(key)), *z)
    crit = _eval(_criterion_polynomial(q, key), *z)
    return (ap, crit) if exact else (float(ap), float(crit))


def h_identity_residual(p: ModelParams, boundary: str, points: np.ndarray) -> float:
    """max |a grad p - h_p p| over ``points`` (shape (n, 2))."""
    key = _key(boundary)
    x, y = np.asarray(points, dtype=float).T
    gx, gy = _gradient(key)
    poly = facet_polynomial(key)
    hx, hy = _h_vector(key, p.alpha, p.alphap)
    pv = poly(x, y)
    rx = p.alpha**2 * x * (1 - x) * gx - hx(x, y) * pv
    ry = p.alphap**2 * y * (1 - y) * gy - hy(x, y) * pv
    return float(max(np.max(np.abs(rx)), np.max(np.abs(ry))))


def _kappa(q: dict, key: str) -> Fraction:
    return {
        "X0": q["u1"] + q["u2"] + q["c"] - q["alpha"] ** 2 / 2,
        "X1": q["u2"] + q["c"],
        "Y0": q["u1p"] + q["u2p"] + q["cp"] - q["alphap"] ** 2 / 2,
        "Y1": q["u2p"] + q["cp"],
    }[key]


@dataclass(frozen=True)
class McKeanCertificate:
    boundary: str
    kappa: float
    grid_min_slack: float
    exact: bool
    corner_values: tuple[float, float, float, float]

    @property
    def valid(self) -> bool:
        return self.exact and self.grid_min_slack >= -1e-12


def mckean_certificate(p: ModelParams, boundary: str, grid: int = 101) -> McKeanCertificate:
    """kappa for an unattainable face, with grid and exact checks of the kappa inequality."""
    key = _key(boundary)
    margin = _margin(p, key)
    if margin < 0:
        raise NoCertificateError(
            f"{key} is attainable (margin {float(margin):g} < 0); no kappa certificate exists")
    q = _exact(p)
    kappa = _kappa(q, key)
    if kappa <= 0:
        raise ValueError(f"kappa = {float(kappa)} is not positive")
    slack = _criterion_polynomial(q, key) + facet_polynomial(key).scale(2 * kappa)
    affine = slack.degree() <= 1
    corners = tuple(_eval(slack, Fraction(a), Fraction(b)) for a, b in _UNIT_CORNERS)
    exact_ok = affine and all(v >= 0 for v in corners)
    g = np.linspace(0.0, 1.0, grid)
    X, Y = np.meshgrid(g, g)
    fslack = MonomialCombo({k: float(v) for k, v in slack.items()})
    grid_min = float(np.min(fslack(X, Y))) if len(fslack) else 0.0
    return McKeanCertificate(key, float(kappa), grid_min, exact_ok, tuple(float(v) for v in corners))


@dataclass(frozen=True)
class BoundaryVerdict:
    boundary: str
    attainable: bool
    critical: bool
    margin: float
    certificate: dict

    def as_dict(self) -> dict:
        return {"boundary": self.boundary, "attainable": self.attainable, "critical": self.critical,
                "margin": self.margin, "certificate": self.certificate}


def classify_boundaries(p: ModelParams) -> list[BoundaryVerdict]:
    """Verdicts for X=0, X=1, Y=0, Y=1; a zero margin counts as unattainable and is marked critical."""
    out = []
    for key in BOUNDARIES:
        margin = _margin(p, key)
        attainable = margin < 0
        if attainable:
            ap, crit = fl16_corner_check(p, key)
            cert = {"kind": "corner", "corner_pair": [ap, crit]}
        else:
            c = mckean_certificate(p, key)
            cert = {"kind": "kappa", "kappa": c.kappa, "exact": c.exact, "grid_min_slack": c.grid_min_slack}
        out.append(BoundaryVerdict(key, attainable, margin == 0, float(margin), cert))
    return out


@dataclass(frozen=True)
class EmpiricalConfig:
    """Monte Carlo corroboration settings for ``classification_report``."""

    dt_sequence: Sequence[float] = (1e-3, 1e-4)
    t_max: float = 2.0
    n_paths: int = 10_000
    seed: int = 0
    offset: float = 0.01
    n_workers: int = 1
    boundaries: Sequence[str] = field(default=BOUNDARIES)


def _start_near(key: str, offset: float) -> tuple[float, float]:
    return (offset, offset) if key[1] == "0" else (1 - offset, 1 - offset)


def classification_report(p: ModelParams, config: EmpiricalConfig | None = None) -> dict:
    """Analytic verdicts, certificates and (optionally) hit frequencies over a dt sequence.

    Disagreements flagged: an attainable face never hit, or an unattainable
    face hit more often at the finest dt than at the coarsest.
    """
    records = []
    flags = []
    for v in classify_boundaries(p):
        rec = v.as_dict()
        rec["empirical"] = None
        if config is not None and v.boundary in config.boundaries:
            dts = sorted(config.dt_sequence, reverse=True)
            hits = hitting_sequence(p, _start_near(v.boundary, config.offset), v.boundary,
                                    config.t_max, dts, config.n_paths, config.seed, config.n_workers)
            freq = [h.frequency for h in hits]
            rec["empirical"] = {"init": list(_start_near(v.boundary, config.offset)),
                                "t_max": config.t_max, "n_paths": config.n_paths,
                                "dt_sequence": dts, "hit_freq": freq,
                                "std_err": [h.std_error for h in hits]}
            if v.attainable and max(freq) == 0:
                flags.append(f"{v.boundary}: attainable but no hits observed")
            if not v.attainable and not v.critical and freq[-1] > freq[0]:
                flags.append(f"{v.boundary}: unattainable but hit frequency grows as dt shrinks")
        records.append(rec)
    return {"params": params_to_mapping(p), "boundaries": records, "disagreements": flags}
