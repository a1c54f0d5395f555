"""Discrete differential operators, weighted norms, and Hölder quotients.

Gradients are forward-difference tensors composed per coordinate.  With the
zero-extension policy the stencils run over a lattice padded with virtual
zeros, so boundary jumps of compactly supported functions contribute to the
energy; with policy "none" only anchors whose full stencil stays inside the
grid are evaluated.  The pointwise gradient magnitude |grad^j u| is the
Euclidean length over all j-fold coordinate combinations (multinomial
multiplicities on distinct multi-indices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .grids import GridDomain


@dataclass
class DiscreteFunction:
    """Grid function tied to a domain raster.

    boundary_policy "zero-extension" models the compactly supported class:
    values are forced to zero on outside cells and the function continues by
    zero beyond the box.
    """

    domain: GridDomain
    values: np.ndarray
    boundary_policy: str = "zero-extension"

    def __post_init__(self):
        if self.values.shape != self.domain.shape:
            raise ValueError("values shape does not match domain grid")
        if self.boundary_policy not in ("zero-extension", "none"):
            raise ValueError("boundary_policy must be zero-extension or none")
        self.values = np.asarray(self.values, dtype=float)
        if self.boundary_policy == "zero-extension":
            self.values = np.where(self.domain.inside, self.values, 0.0)

    @staticmethod
    def from_callable(domain: GridDomain, fn, boundary_policy="zero-extension"):
        grids = domain.center_grid()
        return DiscreteFunction(domain, np.asarray(fn(*grids), dtype=float),
                                boundary_policy)


@dataclass
class WeightSpec:
    """Weight delta^s with the distance clamped below, times an optional
    per-cell multiplier field (piecewise-constant capacities in practice).

    clamp=None resolves to half a cell width of the domain it is applied to.
    """

    exponent: float = 0.0
    clamp: float | None = None
    multiplier: np.ndarray | None = None

    def resolve_clamp(self, domain: GridDomain) -> float:
        return 0.5 * domain.h if self.clamp is None else self.clamp

    def field(self, domain: GridDomain) -> np.ndarray:
        clamp = self.resolve_clamp(domain)
        if clamp <= 0:
            raise ValueError("clamp must be positive")
        base = np.maximum(domain.distance, clamp) ** self.exponent
        if self.multiplier is not None:
            if (np.asarray(self.multiplier) < 0).any():
                raise ValueError("multiplier must be nonnegative")
            base = base * self.multiplier
        return base


UNIT_WEIGHT = WeightSpec(exponent=0.0, clamp=1.0)


def multi_indices(dim: int, order: int) -> list[tuple[int, ...]]:
    """Distinct multi-indices of the given total order."""
    if order == 0:
        return [(0,) * dim]
    out = []
    for combo in product(range(order + 1), repeat=dim):
        if sum(combo) == order:
            out.append(combo)
    return out


def multinomial(alpha: tuple[int, ...]) -> int:
    j = sum(alpha)
    c = math.factorial(j)
    for a in alpha:
        c //= math.factorial(a)
    return c


def difference_fields(u: DiscreteFunction, order: int):
    """All distinct order-j forward-difference fields on a common anchor
    lattice, scaled by h^-j.

    Returns (fields dict alpha -> array, weight_index) where weight_index
    gives, per axis, the original-cell index each anchor reads its weight
    from (clipped at the box for virtual anchors).
    """
    dom = u.domain
    n = dom.shape[0]
    h = dom.h
    j = order
    if j == 0:
        idx = [np.arange(n) for _ in range(dom.dim)]
        return {(0,) * dom.dim: u.values.copy()}, idx
    if u.boundary_policy == "zero-extension":
        base = np.pad(u.values, j, mode="constant")
        out_n = n + j
        offset = -j
    else:
        base = u.values
        out_n = n - j
        offset = 0
    fields = {}
    for alpha in multi_indices(dom.dim, j):
        f = base
        for ax, a in enumerate(alpha):
            for _ in range(a):
                f = np.diff(f, axis=ax)
        f = f[tuple(slice(0, out_n) for _ in range(dom.dim))]
        fields[alpha] = f / h**j
    widx = [np.clip(np.arange(out_n) + offset, 0, n - 1) for _ in range(dom.dim)]
    return fields, widx


def _weight_on_anchors(w: np.ndarray, widx) -> np.ndarray:
    out = w
    for ax, idx in enumerate(widx):
        out = np.take(out, idx, axis=ax)
    return out


def gradient_magnitude(u: DiscreteFunction, order: int):
    """Pointwise |grad^j u| field and its anchor weight index."""
    fields, widx = difference_fields(u, order)
    acc = None
    for alpha, f in fields.items():
        term = multinomial(alpha) * f * f
        acc = term if acc is None else acc + term
    return np.sqrt(acc), widx


def gradient_seminorm(u: DiscreteFunction, order: int, p: float,
                      w: WeightSpec = UNIT_WEIGHT) -> float:
    """(sum |grad^j u|^p * weight * dx)^(1/p); order 0 is the weighted L^p norm."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if order < 0:
        raise ValueError("order must be >= 0")
    dom = u.domain
    mag, widx = gradient_magnitude(u, order)
    wfield = _weight_on_anchors(w.field(dom), widx)
    hN = dom.h**dom.dim
    return float((mag**p * wfield).sum() * hN) ** (1.0 / p)


def sobolev_norm(u: DiscreteFunction, m: int, p: float,
                 convention: str = "lp-of-gradients",
                 w: WeightSpec = UNIT_WEIGHT) -> float:
    """Sum over orders k <= m of the k-th gradient norm.

    "lp-of-gradients" aggregates multi-indices pointwise in l2 before the
    L^p integral; "sum-of-seminorms" sums the individual L^p seminorms of
    every distinct multi-index.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if convention not in ("lp-of-gradients", "sum-of-seminorms"):
        raise ValueError("unknown norm convention")
    dom = u.domain
    hN = dom.h**dom.dim
    total = 0.0
    for k in range(m + 1):
        if convention == "lp-of-gradients":
            total += gradient_seminorm(u, k, p, w)
        else:
            fields, widx = difference_fields(u, k)
            wfield = _weight_on_anchors(w.field(dom), widx)
            for alpha, f in fields.items():
                total += float((np.abs(f) ** p * wfield).sum() * hN) ** (1.0 / p)
    return total


def holder_quotient(u: DiscreteFunction, h_order: int, lam: float,
                    w: WeightSpec = UNIT_WEIGHT, radius: float | None = None,
                    distance_unit: str = "physical") -> float:
    """Pointwise Hölder quotient, grid form.

    sup over inside anchors x, distinct |alpha| = h_order, and offsets y with
    0 < |x-y| <= radius of |D^a u(x) - D^a u(y)| / |x-y|^lam * weight(x).
    The limsup of the continuum definition is replaced by this finite-
    neighborhood sup; radius defaults to two cells and must be at least one
    cell.  distance_unit "cells" measures |x-y| in cell units (used by the
    lambda-monotonicity property).
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError("lambda must lie in (0, 1]")
    dom = u.domain
    h = dom.h
    if radius is None:
        radius = 2.0 * h
    if radius < h - 1e-12 * h:
        raise ValueError("radius must be at least one cell")
    rc = int(math.floor(radius / h + 1e-9))
    fields, widx = difference_fields(u, h_order)
    wfield = _weight_on_anchors(w.field(dom), widx)
    inside_anchor = _weight_on_anchors(dom.inside.astype(float), widx) > 0.5

    offsets = []
    for off in product(range(-rc, rc + 1), repeat=dom.dim):
        if any(off) and math.sqrt(sum(o * o for o in off)) <= rc + 1e-9:
            offsets.append(off)
    best = 0.0
    for f in fields.values():
        for off in offsets:
            dist_cells = math.sqrt(sum(o * o for o in off))
            dist = dist_cells if distance_unit == "cells" else dist_cells * h
            dst, src = _pair_views(f, off)
            wloc, _ = _pair_views(wfield, off)
            mask, _ = _pair_views(inside_anchor, off)
            if not mask.any():
                continue
            q = np.abs(dst - src) / dist**lam * wloc
            best = max(best, float(q[mask].max()))
    return best


def _pair_views(arr: np.ndarray, off):
    """Views (arr at x, arr at x+off) over the common valid anchor window."""
    dst_sl, src_sl = [], []
    for ax, o in enumerate(off):
        n = arr.shape[ax]
        dst_sl.append(slice(max(0, -o), n - max(0, o)))
        src_sl.append(slice(max(0, o), n - max(0, -o)))
    return arr[tuple(dst_sl)], arr[tuple(src_sl)]


def elementary_sum_inequalities(a, r: float):
    """The two elementary comparisons between sum |a_n|^r and (sum |a_n|)^r.

    Returns (lhs, rhs, direction): for r >= 1 the direction is "<=", for
    r <= 1 it is ">=" (at r = 1 both hold with equality).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    a = np.abs(np.asarray(a, dtype=float))
    lhs = float((a**r).sum())
    rhs = float(a.sum() ** r)
    return lhs, rhs, ("<=" if r >= 1 else ">=")


def quasinorm_constant(r: float) -> float:
    """A(r) with (a^r + b^r)^(1/r) <= A(r) (a + b): max(1, 2^(1/r - 1))."""
    if r <= 0:
        raise ValueError("r must be positive")
    return max(1.0, 2.0 ** (1.0 / r - 1.0))
