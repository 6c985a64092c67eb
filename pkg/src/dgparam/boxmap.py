"""Smooth reparameterizations that map unconstrained beta onto bounded theta.

Three transform kinds cover the bound shapes that occur in practice:

* interval  lo <= theta <= hi   theta = (hi-lo)/2 * sin(pi*beta/2) + (hi+lo)/2
* lower     theta >= lo         theta = lo - 1 + sqrt(beta^2 + 1)
* upper     theta <= hi         theta = hi + 1 - sqrt(beta^2 + 1)

Fixed parameters are excluded from beta entirely. Inverses use the
principal branch (beta in [-1, 1] for intervals, beta >= 0 otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadBounds, OutOfBounds


@dataclass(frozen=True)
class BoundSpec:
    lo: float = -math.inf
    hi: float = math.inf
    fixed: bool = False
    sample_cap: float = 100.0  # width of the sampling window on semi-infinite ranges

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise BadBounds("bounds must not be NaN")
        if math.isfinite(self.lo) and math.isfinite(self.hi) and not self.lo < self.hi:
            raise BadBounds(f"lower bound {self.lo} must be below upper bound {self.hi}")
        if not self.sample_cap > 0.0:
            raise BadBounds("sample_cap must be positive")

    @property
    def kind(self):
        if self.fixed:
            return "fixed"
        lo_fin = math.isfinite(self.lo)
        hi_fin = math.isfinite(self.hi)
        if lo_fin and hi_fin:
            return "interval"
        if lo_fin:
            return "lower"
        if hi_fin:
            return "upper"
        return "unbounded"

    def contains(self, value):
        return self.lo <= value <= self.hi

    @classmethod
    def interval(cls, lo, hi, sample_cap=100.0):
        return cls(lo=float(lo), hi=float(hi), sample_cap=sample_cap)

    @classmethod
    def at_least(cls, lo, sample_cap=100.0):
        return cls(lo=float(lo), sample_cap=sample_cap)

    @classmethod
    def at_most(cls, hi, sample_cap=100.0):
        return cls(hi=float(hi), sample_cap=sample_cap)


def _check_specs(specs):
    for spec in specs:
        if spec.kind in ("fixed", "unbounded"):
            raise BadBounds(
                f"{spec.kind} parameters have no beta coordinate; "
                "pass only free, bounded specs"
            )


def _reduce_interval(beta):
    # sin(pi*beta/2) has period 4 in beta; reducing first keeps forward
    # exactly periodic and accurate for huge beta
    return beta - 4.0 * round(beta / 4.0)


def _fwd_one(beta, spec):
    kind = spec.kind
    if kind == "interval":
        b = _reduce_interval(beta)
        theta = 0.5 * (spec.hi - spec.lo) * math.sin(0.5 * math.pi * b) \
            + 0.5 * (spec.hi + spec.lo)
        return min(max(theta, spec.lo), spec.hi)
    if kind == "lower":
        return spec.lo + (math.sqrt(beta * beta + 1.0) - 1.0)
    return spec.hi - (math.sqrt(beta * beta + 1.0) - 1.0)


def _inv_one(theta, spec, name):
    kind = spec.kind
    if kind == "interval":
        if theta < spec.lo or theta > spec.hi:
            raise OutOfBounds(name, theta, spec.lo, spec.hi)
        arg = (2.0 * theta - (spec.hi + spec.lo)) / (spec.hi - spec.lo)
        arg = min(max(arg, -1.0), 1.0)
        return (2.0 / math.pi) * math.asin(arg)
    if kind == "lower":
        if theta < spec.lo:
            raise OutOfBounds(name, theta, spec.lo, spec.hi)
        d = theta - spec.lo
        return math.sqrt(d * (d + 2.0))
    if theta > spec.hi:
        raise OutOfBounds(name, theta, spec.lo, spec.hi)
    d = spec.hi - theta
    return math.sqrt(d * (d + 2.0))


def _jac_one(beta, spec):
    kind = spec.kind
    if kind == "interval":
        b = _reduce_interval(beta)
        return 0.5 * (spec.hi - spec.lo) * 0.5 * math.pi * math.cos(0.5 * math.pi * b)
    if kind == "lower":
        return beta / math.sqrt(beta * beta + 1.0)
    return -beta / math.sqrt(beta * beta + 1.0)


def forward(beta, specs):
    """Map unconstrained beta to theta; output always satisfies the bounds."""
    _check_specs(specs)
    beta = np.asarray(beta, dtype=np.float64)
    return np.array([_fwd_one(b, s) for b, s in zip(beta, specs)])


def inverse(theta, specs, names=None):
    """Principal-branch beta for an in-bounds theta; raises OutOfBounds otherwise."""
    _check_specs(specs)
    theta = np.asarray(theta, dtype=np.float64)
    if names is None:
        names = [f"theta[{i}]" for i in range(len(specs))]
    return np.array([_inv_one(t, s, n) for t, s, n in zip(theta, specs, names)])


def mapping_jacobian(beta, specs):
    """Diagonal d(theta)/d(beta) as a vector aligned with beta."""
    _check_specs(specs)
    beta = np.asarray(beta, dtype=np.float64)
    return np.array([_jac_one(b, s) for b, s in zip(beta, specs)])


def beta_sensitivity(s_theta, jac):
    """Chain rule: scale each theta-space sensitivity column by d(theta_j)/d(beta_j)."""
    s_theta = np.asarray(s_theta, dtype=np.float64)
    jac = np.asarray(jac, dtype=np.float64)
    return s_theta * jac[np.newaxis, :]
