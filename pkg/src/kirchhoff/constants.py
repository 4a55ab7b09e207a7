"""Sharp regime constants of the critical Kirchhoff energy and the
classification of coefficient pairs (a, b).

Everything here is closed form: the unit-ball volume, the best Sobolev
embedding constant on H^1_0, and the three thresholds that the product
a^{(d-4)/2} b is compared against to decide lower semicontinuity,
Palais-Smale compactness, and convexity of the energy.  All functions are
pure and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _as_integer_dimension(d) -> int:
    """Validate an integer dimension >= 4.

    Real-valued dimensions are rejected here on purpose: the real extension
    of the threshold formulas has its own explicit entry points
    (:func:`sharp_constants_real`, :func:`limit_check_d_to_4`).
    """
    if isinstance(d, bool):
        raise ValueError("dimension must be an integer >= 4")
    if isinstance(d, float):
        if not d.is_integer():
            raise ValueError(
                f"dimension must be an integer (got {d}); use the explicit "
                "real-extension entry points for non-integer dimensions"
            )
        d = int(d)
    d = int(d)
    if d < 4:
        raise ValueError(f"dimension must be >= 4 (got {d})")
    return d


def _as_real_dimension(d: float) -> float:
    d = float(d)
    if not math.isfinite(d) or d < 4.0:
        raise ValueError(f"dimension must be a real number >= 4 (got {d})")
    return d


def critical_exponent(d) -> float:
    """The critical Sobolev exponent 2d/(d-2); lies in (2, 4] for d >= 4."""
    d = _as_real_dimension(d)
    return 2.0 * d / (d - 2.0)


def unit_ball_volume(d) -> float:
    """Volume of the unit ball in R^d: pi^{d/2} / Gamma(d/2 + 1).

    Accepts the real extension d >= 4 (the Gamma function handles
    half-integer and non-integer arguments alike).
    """
    d = _as_real_dimension(d)
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def sobolev_constant(d) -> float:
    """Best constant of the embedding H^1_0 into L^{2*}: d(d-2)/4 * omega_d^{2/d}."""
    d = _as_real_dimension(d)
    return d * (d - 2.0) / 4.0 * unit_ball_volume(d) ** (2.0 / d)


@dataclass(frozen=True)
class KirchhoffParams:
    """Coefficients of the nonlocal operator: a (initial tension) and b
    (stiffness of the nonlocal term), both positive."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0.0 and math.isfinite(self.a)):
            raise ValueError(f"a must be positive and finite (got {self.a})")
        if not (self.b > 0.0 and math.isfinite(self.b)):
            raise ValueError(f"b must be positive and finite (got {self.b})")


@dataclass(frozen=True)
class SharpConstants:
    """The closed-form constants of dimension d: unit-ball volume, Sobolev
    constant, and the three regime thresholds (ordered L <= PS <= C)."""

    omega_d: float
    S_d: float
    L_d: float
    PS_d: float
    C_d: float

    def to_dict(self) -> dict:
        return {
            "omega_d": self.omega_d,
            "S_d": self.S_d,
            "L_d": self.L_d,
            "PS_d": self.PS_d,
            "C_d": self.C_d,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SharpConstants":
        return cls(
            omega_d=float(data["omega_d"]),
            S_d=float(data["S_d"]),
            L_d=float(data["L_d"]),
            PS_d=float(data["PS_d"]),
            C_d=float(data["C_d"]),
        )


def _thresholds_above_4(d: float, S: float) -> tuple[float, float, float]:
    """The d > 4 branch of the three thresholds, valid for real d."""
    half = (d - 4.0) / 2.0
    L = 4.0 * (d - 4.0) ** half / (d ** ((d - 2.0) / 2.0) * S ** (d / 2.0))
    PS = 2.0 * (d - 4.0) ** half / ((d - 2.0) ** ((d - 2.0) / 2.0) * S ** (d / 2.0))
    C = (
        2.0
        * (d - 4.0) ** half
        * (d + 2.0) ** ((d - 2.0) / 2.0)
        / ((d - 2.0) ** (d - 2.0) * S ** (d / 2.0))
    )
    return L, PS, C


def sharp_constants(d) -> SharpConstants:
    """Evaluate omega_d, S_d and the thresholds L_d, PS_d, C_d for integer d >= 4.

    At d = 4 the case split gives L_4 = PS_4 = 1/S_4^2 and C_4 = 3/S_4^2.
    """
    d = _as_integer_dimension(d)
    omega = unit_ball_volume(d)
    S = sobolev_constant(d)
    if d == 4:
        L = PS = 1.0 / S**2
        C = 3.0 / S**2
    else:
        L, PS, C = _thresholds_above_4(float(d), S)
    return SharpConstants(omega_d=omega, S_d=S, L_d=L, PS_d=PS, C_d=C)


def sharp_constants_real(d_real: float) -> SharpConstants:
    """Real-dimension extension of the d > 4 threshold formulas.

    Exists for limit studies d -> 4+ only; d_real must be strictly above 4
    (the d = 4 values come from the case split in :func:`sharp_constants`).
    """
    d = _as_real_dimension(d_real)
    if d <= 4.0:
        raise ValueError(
            f"real-extension formulas require d > 4 (got {d}); "
            "use sharp_constants(4) for the d = 4 branch"
        )
    omega = unit_ball_volume(d)
    S = sobolev_constant(d)
    L, PS, C = _thresholds_above_4(d, S)
    return SharpConstants(omega_d=omega, S_d=S, L_d=L, PS_d=PS, C_d=C)


def regime_key(d, params: KirchhoffParams) -> float:
    """The product a^{(d-4)/2} * b that all three thresholds are compared with."""
    d = _as_integer_dimension(d)
    return params.a ** ((d - 4.0) / 2.0) * params.b


@dataclass(frozen=True)
class RegimeReport:
    """Classification of (d, a, b): which regularity regimes the sufficient
    (and for swlsc, sharp) threshold conditions certify.

    Inequality semantics follow the statements exactly: swlsc and convex use
    >=, Palais-Smale and strict convexity use strict >.  At the Palais-Smale
    boundary key == PS_d the flag is False (the sufficient condition is
    strict and the boundary case is not settled).
    """

    key: float
    swlsc: bool
    palais_smale: bool
    convex: bool
    strictly_convex: bool
    thresholds: SharpConstants

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "swlsc": self.swlsc,
            "palais_smale": self.palais_smale,
            "convex": self.convex,
            "strictly_convex": self.strictly_convex,
            "thresholds": self.thresholds.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegimeReport":
        return cls(
            key=float(data["key"]),
            swlsc=bool(data["swlsc"]),
            palais_smale=bool(data["palais_smale"]),
            convex=bool(data["convex"]),
            strictly_convex=bool(data["strictly_convex"]),
            thresholds=SharpConstants.from_dict(data["thresholds"]),
        )


def classify(d, params: KirchhoffParams, boundary_tol: float = 0.0) -> RegimeReport:
    """Compare the regime key against L_d, PS_d, C_d.

    The default is exact floating comparison (boundary_tol = 0), so the
    >= / > distinction of the theorem is representable.  A positive
    boundary_tol widens the non-strict flags by tol and narrows the strict
    ones, for studies near a threshold:

        swlsc            key >= L_d  - tol
        palais_smale     key >  PS_d + tol
        convex           key >= C_d  - tol
        strictly_convex  key >  C_d  + tol
    """
    d = _as_integer_dimension(d)
    if boundary_tol < 0.0:
        raise ValueError("boundary_tol must be >= 0")
    consts = sharp_constants(d)
    key = regime_key(d, params)
    return RegimeReport(
        key=key,
        swlsc=key >= consts.L_d - boundary_tol,
        palais_smale=key > consts.PS_d + boundary_tol,
        convex=key >= consts.C_d - boundary_tol,
        strictly_convex=key > consts.C_d + boundary_tol,
        thresholds=consts,
    )


@dataclass(frozen=True)
class LimitRow:
    """One row of the d -> 4+ limit table."""

    d_real: float
    L: float
    PS: float
    C: float


def limit_check_d_to_4(eps_sequence) -> list[LimitRow]:
    """Evaluate the d > 4 formulas at d = 4 + eps for each positive eps.

    The values converge to the d = 4 branch as eps -> 0 (a formal
    observation; eps = 0 itself is disallowed, use sharp_constants(4)).
    """
    eps_sequence = [float(e) for e in eps_sequence]
    if any(e <= 0.0 for e in eps_sequence):
        raise ValueError("all eps values must be positive (eps = 0 is the d = 4 branch)")
    rows = []
    for eps in eps_sequence:
        c = sharp_constants_real(4.0 + eps)
        rows.append(LimitRow(d_real=4.0 + eps, L=c.L_d, PS=c.PS_d, C=c.C_d))
    return rows
