"""Piecewise-C^2 coefficient with a single kink.

The coefficient is assembled from a lower branch valid on (-inf, kink] and an
upper branch valid on [kink, inf).  All evaluators are vectorized over numpy
arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial


@dataclass(frozen=True)
class Branch:
    """A scalar C^2 function given by its value and first two derivatives."""

    f: Callable
    df: Callable
    d2f: Callable
    name: str = "analytic"

    @classmethod
    def poly(cls, coeffs: Sequence[float]) -> "Branch":
        # coefficients in increasing degree: c0 + c1 t + c2 t^2 + ...
        p = Polynomial(np.asarray(coeffs, dtype=float))
        dp, d2p = p.deriv(1), p.deriv(2)
        return cls(p, dp, d2p, name=f"poly{list(coeffs)}")

    @classmethod
    def constant(cls, c: float) -> "Branch":
        return cls.poly([c])

    @classmethod
    def affine(cls, slope: float, intercept: float = 0.0) -> "Branch":
        return cls.poly([intercept, slope])


class PC1Coeff:
    """Continuous coefficient a(t) = a0(t) for t <= kink, a1(t) for t > kink.

    Parameters
    ----------
    lo, hi : Branch
        Lower and upper branches.
    kink : float
        The switching point.
    coercive : bool
        If set, nonnegativity of ``a`` is checked on a sample grid around the kink.
    """

    def __init__(self, lo: Branch, hi: Branch, kink: float, coercive: bool = False,
                 check_range: float = 10.0):
        self.lo = lo
        self.hi = hi
        self.kink = float(kink)
        gap = abs(float(lo.f(self.kink)) - float(hi.f(self.kink)))
        scale = max(1.0, abs(float(lo.f(self.kink))))
        if gap > 1e-12 * scale:
            raise ValueError(f"branches do not meet at the kink (gap {gap:.3e})")
        if coercive:
            t = np.linspace(self.kink - check_range, self.kink + check_range, 2001)
            if np.any(self.eval(t) < 0):
                raise ValueError("coefficient is negative on the sample grid")

    @classmethod
    def max_type(cls, shift: float = 1.0) -> "PC1Coeff":
        """a(t) = max(t - shift, 0)."""
        return cls(Branch.constant(0.0), Branch.affine(1.0, -shift), shift, coercive=True)

    @classmethod
    def zero(cls) -> "PC1Coeff":
        # both branches vanish, so the kink location has no effect
        return cls(Branch.constant(0.0), Branch.constant(0.0), 0.0)

    @classmethod
    def constant(cls, c: float) -> "PC1Coeff":
        return cls(Branch.constant(c), Branch.constant(c), 0.0)

    @classmethod
    def from_config(cls, cfg: dict) -> "PC1Coeff":
        kind = cfg.get("kind", "max")
        if kind == "max":
            return cls.max_type(float(cfg.get("shift", 1.0)))
        if kind == "zero":
            return cls.zero()
        if kind == "pc1":
            return cls(Branch.poly(cfg["lo"]), Branch.poly(cfg["hi"]), float(cfg["kink"]))
        raise ValueError(f"unknown coefficient kind {kind!r}")

    def __repr__(self):
        return f"PC1Coeff(lo={self.lo.name}, hi={self.hi.name}, kink={self.kink})"

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= self.kink, self.lo.f(t), self.hi.f(t))
        return out if out.ndim else float(out)

    def deriv(self, t):
        """Branch derivative; the upper branch is used at the kink itself."""
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.kink, self.lo.df(t), self.hi.df(t))
        return out if out.ndim else float(out)

    def eval_dir(self, t, s):
        """Directional derivative a'(t; s)."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        at_kink = t == self.kink
        # at the kink the side is picked by the sign of s; s == 0 gives 0 either way
        lo_side = (t < self.kink) | (at_kink & (s < 0))
        slope = np.where(lo_side, self.lo.df(t), self.hi.df(t))
        out = slope * s
        return out if out.ndim else float(out)

    def eval_second(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t == self.kink):
            raise ValueError("second derivative is undefined at the kink")
        return self.second_branchwise(t)

    def second_branchwise(self, t):
        """Like eval_second but takes the upper branch at the kink instead of raising."""
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.kink, self.lo.d2f(t), self.hi.d2f(t))
        return out if out.ndim else float(out)

    @property
    def slope_jump(self) -> float:
        """a0'(kink) - a1'(kink) (signed)."""
        return float(self.lo.df(self.kink)) - float(self.hi.df(self.kink))

    @property
    def sigma0(self) -> float:
        return abs(self.slope_jump)
