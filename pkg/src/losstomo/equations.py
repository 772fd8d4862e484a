"""Likelihood equations as sums over exclusive components, and their root.

Every tree-node equation handled here has the form

    h(u) = sum_j [ (1 - t_j u) - prod_{i in j} (1 - g_i u)
                   + sum_{p in removed_j} (-u)^{|p|} prod_{l in p} g_l ] = 0

with ``u = 1/A``, ``t_j`` the rate at which component ``j`` observes a
probe and ``g_i`` the member rates.  One perfect component gives the
classic polynomial; removed terms give the chained form; several
components give the partitioned forms.  A singleton component
contributes exactly zero.  With ``t_j = 1`` and ``g_i = alpha_i`` the same
code solves for the pass rate ``x`` of a shared subtree directly.

``h(0) = 0`` and ``h'(0) = sum g - sum t``; the admissible root is the
first positive sign change, searched on ``(0, upper]``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError

__all__ = ["ComponentTerm", "LikelihoodEquation", "RootResult", "search_bound", "solve_equation"]

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ComponentTerm:
    total: float
    members: tuple[float, ...]
    removed: tuple[tuple[int, ...], ...] = ()

    def removed_by_degree(self) -> np.ndarray:
        """Sum of the removed products, indexed by subset size."""
        w = np.zeros(len(self.members) + 1)
        for p in self.removed:
            w[len(p)] += math.prod(self.members[i] for i in p)
        return w


@dataclass(frozen=True)
class RootResult:
    root: float
    residual: float
    iterations: int


class LikelihoodEquation:
    """``h(u)`` for a sequence of :class:`ComponentTerm`."""

    def __init__(self, terms: Sequence[ComponentTerm]):
        self.terms = tuple(terms)
        # a lone member with nothing removed contributes exactly zero
        self._compiled = [
            (t.total, np.asarray(t.members, dtype=float), t.removed_by_degree())
            for t in self.terms
            if not (len(t.members) == 1 and not t.removed and t.total == t.members[0])
        ]

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        with np.errstate(divide="ignore"):
            for total, members, removed in self._compiled:
                # 1 - prod(1 - g u) without cancellation when u is small;
                # factors may turn negative beyond the search bound
                log_prod = np.zeros_like(u)
                negative = np.zeros(u.shape, dtype=bool)
                for g in members:
                    f = g * u
                    log_prod = log_prod + np.where(f <= 1, np.log1p(-np.minimum(f, 1)), np.log(np.abs(f - 1)))
                    negative ^= f > 1
                one_minus = np.where(negative, 1 + np.exp(log_prod), -np.expm1(log_prod))
                out = out + (one_minus - total * u + _alternating(removed, u))
        return out if out.ndim else float(out)

    def polynomial(self) -> np.ndarray:
        """Ascending coefficients of ``h``."""
        degree = max((len(m) for _, m, _ in self._compiled), default=1)
        coef = np.zeros(max(degree, 1) + 1)
        for total, members, removed in self._compiled:
            prod = np.array([1.0])
            for g in members:
                prod = np.convolve(prod, [1.0, -g])
            signed = removed * (-1.0) ** np.arange(len(removed))
            coef[0] += 1.0
            coef[1] -= total
            coef[: len(prod)] -= prod
            coef[: len(signed)] += signed
        return coef

    def derivative(self, u):
        coef = self.polynomial()
        return np.polynomial.polynomial.polyval(u, coef[1:] * np.arange(1, len(coef)))

    def slope_at_zero(self) -> float:
        return float(sum(m.sum() - total for total, m, _ in self._compiled))


def _alternating(weights: np.ndarray, u):
    if not weights.any():
        return 0.0
    acc = np.zeros_like(u)
    for k in range(len(weights) - 1, 0, -1):
        acc = (acc + weights[k] * (-1.0) ** k) * u
    return acc


def search_bound(terms: Sequence[ComponentTerm]) -> float:
    """Largest admissible ``u``.

    One nontrivial component: ``u <= 1/t``.  Several: ``u <= 1/max g_i``
    over members of multi-member components, so every factor stays
    nonnegative.
    """
    multi = [t for t in terms if len(t.members) > 1] or list(terms)
    if len(multi) == 1:
        return 1.0 / multi[0].total
    return 1.0 / max(g for t in multi for g in t.members)


def solve_equation(
    eq: LikelihoodEquation, upper: float, tol: float = 1e-10, max_iter: int = 200
) -> RootResult:
    """Root of ``eq`` on ``(0, upper]`` by safeguarded Newton-bisection.

    The bracket's lower end is found by halving from ``upper`` until ``h``
    turns positive, which skips the trivial root at zero.  Iteration stops
    once the bracket or Newton step reaches machine precision, so repeated
    solves of numerically identical equations return identical roots.

    Raises
    ------
    DegenerateDataError
        No sign change in ``(0, upper]``, or the final residual exceeds
        ``tol``.
    """
    if not (upper > 0 and math.isfinite(upper)):
        raise DegenerateDataError(f"invalid search bound {upper!r}")
    h_hi = eq(upper)
    if 0.0 <= h_hi <= tol:
        # root on the bound (some alpha_j = 1), up to rounding
        return RootResult(upper, h_hi, 0)
    if h_hi > 0:
        raise DegenerateDataError(
            f"likelihood equation has no root below the bound: h({upper:.6g}) = {h_hi:.3g} > 0"
        )
    if eq.slope_at_zero() <= 0:
        raise DegenerateDataError("likelihood equation is not increasing at zero")

    lo, h_lo, iterations = upper, h_hi, 0
    while h_lo <= 0:
        lo *= 0.5
        h_lo = eq(lo)
        iterations += 1
        if iterations > 1100 or lo == 0.0:
            raise DegenerateDataError("no positive value of the likelihood equation near zero")
    hi = upper

    x = 0.5 * (lo + hi)
    dx_old = dx = hi - lo
    fx, dfx = eq(x), eq.derivative(x)
    for _ in range(max_iter):
        iterations += 1
        if fx == 0.0:
            break
        if fx > 0:
            lo = x
        else:
            hi = x
        newton_ok = dfx != 0 and lo < x - fx / dfx < hi and abs(2.0 * fx) < abs(dx_old * dfx)
        dx_old = dx
        if newton_ok:
            dx = fx / dfx
            x_new = x - dx
        else:
            dx = 0.5 * (hi - lo)
            x_new = lo + dx
        if x_new == x or abs(dx) <= 2 * EPS * abs(x):
            x = x_new
            fx = eq(x)
            break
        x = x_new
        fx, dfx = eq(x), eq.derivative(x)
    residual = abs(fx)
    if residual > tol:
        raise DegenerateDataError(f"root finder stalled with residual {residual:.3g}")
    return RootResult(float(x), float(residual), iterations)
