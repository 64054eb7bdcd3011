"""Tire friction curve: force fraction vs slip as a two-piece cubic spline.

Segment 0 rises from (0, 0) with initial slope k0 to the grip extremum
(s_e, f_e); segment 1 falls from the extremum to the sliding asymptote
(s_a, f_a) with zero slope at both ends. Beyond s_a the curve holds f_a.
Negative slip evaluates by odd symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import VehicleConfig


@dataclass(frozen=True)
class FrictionCurve:
    s_extremum: float
    f_extremum: float
    s_asymptote: float
    f_asymptote: float
    k0: float
    coeffs: np.ndarray  # (2, 4): [a, b, c, d] per segment, f(s) = a s^3 + b s^2 + c s + d

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(2, 4)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)


def _solve_cubic(s0: float, f0: float, df0: float, s1: float, f1: float, df1: float) -> np.ndarray:
    # Hermite data at both ends -> 4x4 linear system in (a, b, c, d).
    a = np.array(
        [
            [s0**3, s0**2, s0, 1.0],
            [3.0 * s0**2, 2.0 * s0, 1.0, 0.0],
            [s1**3, s1**2, s1, 1.0],
            [3.0 * s1**2, 2.0 * s1, 1.0, 0.0],
        ]
    )
    rhs = np.array([f0, df0, f1, df1])
    return np.linalg.solve(a, rhs)


def build_friction_curve(
    s_extremum: float, f_extremum: float, s_asymptote: float, f_asymptote: float, k0: float
) -> FrictionCurve:
    if not 0.0 < s_extremum < s_asymptote:
        raise ValueError(f"need 0 < s_extremum < s_asymptote, got {s_extremum}, {s_asymptote}")
    if not f_extremum >= f_asymptote > 0.0:
        raise ValueError(f"need f_extremum >= f_asymptote > 0, got {f_extremum}, {f_asymptote}")
    if k0 <= 0.0:
        raise ValueError(f"initial slope k0 must be positive, got {k0}")
    try:
        seg0 = _solve_cubic(0.0, 0.0, k0, s_extremum, f_extremum, 0.0)
        seg1 = _solve_cubic(s_extremum, f_extremum, 0.0, s_asymptote, f_asymptote, 0.0)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate friction-curve geometry: {exc}") from exc
    return FrictionCurve(s_extremum, f_extremum, s_asymptote, f_asymptote, k0, np.vstack([seg0, seg1]))


def default_friction_curve(cfg: VehicleConfig) -> FrictionCurve:
    return build_friction_curve(
        cfg.friction_s_extremum,
        cfg.friction_f_extremum,
        cfg.friction_s_asymptote,
        cfg.friction_f_asymptote,
        cfg.friction_k0,
    )


def eval_friction(curve: FrictionCurve, slip: float) -> float:
    if slip < 0.0:
        return -eval_friction(curve, -slip)
    if slip >= curve.s_asymptote:
        return curve.f_asymptote
    seg = curve.coeffs[0] if slip < curve.s_extremum else curve.coeffs[1]
    a, b, c, d = seg
    return float(((a * slip + b) * slip + c) * slip + d)


def eval_friction_derivative(curve: FrictionCurve, slip: float) -> float:
    if slip < 0.0:
        return eval_friction_derivative(curve, -slip)
    if slip >= curve.s_asymptote:
        return 0.0
    seg = curve.coeffs[0] if slip < curve.s_extremum else curve.coeffs[1]
    a, b, c, _ = seg
    return float((3.0 * a * slip + 2.0 * b) * slip + c)
