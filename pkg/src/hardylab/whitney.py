"""Whitney decompositions of raster domains, enlarged cubes, and summation.

A cube at dyadic level k has side 2^-k and occupies a block of grid cells.
The two Whitney size conditions are enforced at grid resolution with the
complement measured center-to-center by the distance field:

    sqrt(N) * (side - h) <= min_{cells c in Q} distance(c)   (lower bound)
    min_{cells c in Q} distance(c) <= 4 * sqrt(N) * side     (upper bound)

The lower bound is the continuum condition diam Q <= dist(complement, Q)
with both sides resolved on the cell-center lattice: the grid can locate the
complement only to within one cell diagonal, and the corresponding slack is
exactly what lets single-cell cubes tile the boundary skin so the cover is
exact.  Construction is top-down and deterministic: a cube is accepted at
the coarsest level where it is all-inside and satisfies the lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .grids import GridDomain
from ._util import fixed_order_sum


class WhitneyError(RuntimeError):
    """Degenerate raster: no admissible cube exists."""


@dataclass(frozen=True)
class DyadicCube:
    level: int
    coords: tuple[int, ...]

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def diam(self) -> float:
        return math.sqrt(len(self.coords)) * self.side


class WhitneyDecomposition:
    """Set of accepted dyadic cubes with enlarged cubes and rescaling maps.

    Cube data is stored columnar: ``levels[i]``, ``coords[i]`` describe cube
    i; ``rq_center[i]``/``rq_side[i]`` its enlarged cube (centered at the
    nearest outside cell center, smallest side covering the cube).
    """

    def __init__(self, domain: GridDomain, levels: np.ndarray, coords: np.ndarray):
        self.domain = domain
        self.levels = levels
        self.coords = coords
        self.n_cubes = len(levels)
        self._build_owner_map()
        self._build_enlarged()
        self._neighbors = None
        self._touch_pairs = None

    # -- construction helpers ------------------------------------------------

    def _build_owner_map(self):
        dom = self.domain
        owner = np.full(dom.shape, -1, dtype=np.int64)
        for i in range(self.n_cubes):
            sl = self.cell_slice(i)
            if (owner[sl] != -1).any():
                raise WhitneyError("overlapping cubes in decomposition")
            owner[sl] = i
        self.owner = owner

    def _build_enlarged(self):
        from scipy import ndimage

        dom = self.domain
        h = dom.h
        padded = dom.padded_inside()
        _, feat = ndimage.distance_transform_edt(
            padded, sampling=h, return_indices=True
        )
        # feat[:, idx] is the nearest outside cell (padded indices).
        centers = np.zeros((self.n_cubes, dom.dim))
        sides = np.zeros(self.n_cubes)
        dist = dom.distance
        for i in range(self.n_cubes):
            sl = self.cell_slice(i)
            block = dist[sl]
            flat = int(np.argmin(block))  # C-order: lexicographic tie-break
            local = np.unravel_index(flat, block.shape)
            cell = tuple(s.start + off for s, off in zip(sl, local))
            pidx = tuple(c + 1 for c in cell)
            near = tuple(int(feat[a][pidx]) for a in range(dom.dim))
            x0 = np.array([(near[a] - 1 + 0.5) * h for a in range(dom.dim)])
            side_q = 2.0 ** (-int(self.levels[i]))
            lo = np.array([c * side_q for c in self.coords[i]], dtype=float)
            hi = lo + side_q
            reach = np.maximum(np.abs(lo - x0), np.abs(hi - x0)).max()
            centers[i] = x0
            sides[i] = 2.0 * reach
        self.rq_center = centers
        self.rq_side = sides

    # -- per-cube accessors ----------------------------------------------------

    def cube(self, i: int) -> DyadicCube:
        return DyadicCube(int(self.levels[i]), tuple(int(c) for c in self.coords[i]))

    def cell_slice(self, i: int):
        """Grid-cell block occupied by cube i."""
        L = self.domain.level
        k = int(self.levels[i])
        m = 2 ** (L - k)
        return tuple(slice(c * m, (c + 1) * m) for c in self.coords[i])

    def side(self, i: int) -> float:
        return 2.0 ** (-int(self.levels[i]))

    def diam(self, i: int) -> float:
        return math.sqrt(self.domain.dim) * self.side(i)

    def min_distance(self, i: int) -> float:
        return float(self.domain.distance[self.cell_slice(i)].min())

    def max_distance(self, i: int) -> float:
        return float(self.domain.distance[self.cell_slice(i)].max())

    def rq_cell_range(self, i: int):
        """Index ranges (per axis) of cells whose centers lie in closed R_Q,
        clipped to the box."""
        dom = self.domain
        h = dom.h
        n = 2**dom.level
        lo = self.rq_center[i] - self.rq_side[i] / 2.0
        hi = self.rq_center[i] + self.rq_side[i] / 2.0
        eps = 1e-9 * h
        ranges = []
        for a in range(dom.dim):
            i0 = int(math.ceil((lo[a] + eps) / h - 0.5))
            i1 = int(math.floor((hi[a] - eps) / h - 0.5))
            i0 = max(i0, 0)
            i1 = min(i1, n - 1)
            ranges.append((i0, i1 + 1))
        return ranges

    def rq_slice(self, i: int):
        return tuple(slice(a, b) for a, b in self.rq_cell_range(i))

    def rescale_map(self, i: int) -> "RescaleMap":
        lo = self.rq_center[i] - self.rq_side[i] / 2.0
        return RescaleMap(origin=lo, scale=float(self.rq_side[i]))

    # -- index structures -------------------------------------------------------

    def neighbors(self, i: int) -> np.ndarray:
        """Indices of cubes Q' with a cell center in closed R_Q(i)."""
        if self._neighbors is None:
            self._neighbors = [None] * self.n_cubes
        if self._neighbors[i] is None:
            ids = np.unique(self.owner[self.rq_slice(i)])
            self._neighbors[i] = ids[ids >= 0]
        return self._neighbors[i]

    def touching_pairs(self) -> np.ndarray:
        """Pairs (i, j), i<j, of cubes whose closed cubes intersect."""
        if self._touch_pairs is not None:
            return self._touch_pairs
        L = self.domain.level
        n = 2**L
        pairs = set()
        for i in range(self.n_cubes):
            sl = self.cell_slice(i)
            ext = tuple(
                slice(max(s.start - 1, 0), min(s.stop + 1, n)) for s in sl
            )
            ids = np.unique(self.owner[ext])
            for j in ids:
                j = int(j)
                if j >= 0 and j != i:
                    pairs.add((min(i, j), max(i, j)))
        self._touch_pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        return self._touch_pairs

    def populated_levels(self) -> list[int]:
        return sorted(set(int(k) for k in self.levels))

    def cubes_at_level(self, k: int) -> np.ndarray:
        return np.nonzero(self.levels == k)[0]

    def __len__(self):
        return self.n_cubes


@dataclass(frozen=True)
class RescaleMap:
    """Affine map taking the enlarged cube onto the unit cube [0,1]^N."""

    origin: np.ndarray
    scale: float

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) / self.scale

    def from_unit(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.scale + self.origin


def decompose(domain: GridDomain) -> WhitneyDecomposition:
    """Deterministic top-down Whitney decomposition of a raster domain.

    Raises WhitneyError when the raster admits no cube at any level (e.g. an
    inside mask with no cells).
    """
    if domain.distance is None:
        raise WhitneyError("domain needs a distance field (run distance_transform)")
    if not domain.inside.any():
        raise WhitneyError("degenerate raster: no inside cells")
    dim, L = domain.dim, domain.level
    h = domain.h
    root_n = math.sqrt(dim)

    # Min-pyramids over delta and inside flags, indexed by cube level.
    dmin = {L: domain.distance}
    iall = {L: domain.inside}
    iany = {L: domain.inside}
    for k in range(L - 1, -1, -1):
        dmin[k] = _pool(dmin[k + 1], np.minimum)
        iall[k] = _pool(iall[k + 1], np.logical_and)
        iany[k] = _pool(iany[k + 1], np.logical_or)

    levels_out: list[np.ndarray] = []
    coords_out: list[np.ndarray] = []
    cand = np.zeros((1, dim), dtype=np.int64)
    for k in range(0, L + 1):
        if len(cand) == 0:
            break
        idx = tuple(cand[:, a] for a in range(dim))
        has_any = iany[k][idx]
        cand = cand[has_any]
        if len(cand) == 0:
            break
        idx = tuple(cand[:, a] for a in range(dim))
        side = 2.0 ** (-k)
        ok = iall[k][idx] & (dmin[k][idx] >= root_n * (side - h) - 1e-12 * h)
        accepted = cand[ok]
        if len(accepted):
            levels_out.append(np.full(len(accepted), k, dtype=np.int64))
            coords_out.append(accepted)
        rest = cand[~ok]
        if k == L or len(rest) == 0:
            cand = np.zeros((0, dim), dtype=np.int64)
            continue
        # children of every non-accepted cube
        offs = np.stack(
            np.meshgrid(*([np.arange(2)] * dim), indexing="ij"), axis=-1
        ).reshape(-1, dim)
        cand = (rest[:, None, :] * 2 + offs[None, :, :]).reshape(-1, dim)

    if not levels_out:
        raise WhitneyError("no cube at any admissible level satisfies (6.1)")
    levels = np.concatenate(levels_out)
    coords = np.concatenate(coords_out)
    order = np.lexsort(tuple(coords[:, a] for a in range(dim - 1, -1, -1)) + (levels,))
    return WhitneyDecomposition(domain, levels[order], coords[order])


def _pool(arr: np.ndarray, op) -> np.ndarray:
    out = arr
    for ax in range(arr.ndim):
        n = out.shape[ax]
        shape = out.shape[:ax] + (n // 2, 2) + out.shape[ax + 1 :]
        view = out.reshape(shape)
        out = op(np.take(view, 0, axis=ax + 1), np.take(view, 1, axis=ax + 1))
    return out


def intersection_cutoff(dim: int) -> float:
    """Largest diameter ratio an enlarged-cube intersection allows: 5*sqrt(N)."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    return 5.0 * math.sqrt(dim)


@lru_cache(maxsize=None)
def packing_constant(dim: int) -> int:
    """Count of same-level lattice cubes whose enlarged cube can meet a fixed
    cube: lattice cells of side 1 meeting the ball of radius (10 + 5/2)*sqrt(N).

    Computed by enumeration from the radius bound in the summation lemma's
    volume argument, not hard-coded.
    """
    radius = (10.0 + 2.5) * math.sqrt(dim)
    reach = int(math.ceil(radius)) + 1
    rng = range(-reach, reach)
    grids = np.meshgrid(*([np.array(list(rng))] * dim), indexing="ij")
    d2 = sum(np.maximum(np.abs(g + 0.5) - 0.5, 0.0) ** 2 for g in grids)
    return int((d2 <= radius**2).sum())


def summation_lemma_ratio(decomp: WhitneyDecomposition, f, s: float):
    """Both sides of the Whitney summation bound for a nonnegative function.

    lhs = sum_Q (diam Q)^-s * integral_{R_Q} f * delta^s dx  (cell sums)
    rhs_bound = packing_constant(N) / (1 - 2^-s) * integral f dx

    Returns (lhs, rhs_bound).  Requires s > 0, f >= 0, and f = 0 outside.
    """
    if s <= 0:
        raise ValueError("the summation lemma requires s > 0")
    values = np.asarray(getattr(f, "values", f), dtype=float)
    dom = decomp.domain
    if values.shape != dom.shape:
        raise ValueError("function shape does not match the domain grid")
    if (values < 0).any():
        raise ValueError("f must be nonnegative")
    if (values[~dom.inside] != 0).any():
        raise ValueError("f must vanish on the complement")
    hN = dom.h**dom.dim
    delta_s = np.where(dom.inside, dom.distance, 0.0) ** s
    g = values * delta_s
    terms = []
    for i in range(decomp.n_cubes):
        sl = decomp.rq_slice(i)
        terms.append(decomp.diam(i) ** (-s) * float(g[sl].sum()) * hN)
    lhs = fixed_order_sum(terms)
    total = float(values.sum()) * hN
    rhs = packing_constant(dom.dim) / (1.0 - 2.0 ** (-s)) * total
    return lhs, rhs


def check_decomposition(decomp: WhitneyDecomposition) -> dict:
    """Exhaustive verification of the grid forms of the Whitney conditions.

    Returns per-condition booleans plus the measured extremes; used by the
    acceptance suite and the property tests.
    """
    dom = decomp.domain
    h = dom.h
    root_n = math.sqrt(dom.dim)
    covered = decomp.owner >= 0
    cover_exact = bool((covered == dom.inside).all())

    lower_ok = True
    upper_ok = True
    rq_ok = True
    worst_ratio = 0.0
    for i in range(decomp.n_cubes):
        side = decomp.side(i)
        dmin = decomp.min_distance(i)
        if dmin < root_n * (side - h) - 1e-9 * h:
            lower_ok = False
        if dmin > 4.0 * root_n * side + 1e-9 * h:
            upper_ok = False
        if decomp.rq_side[i] > 10.0 * decomp.diam(i) + 2.0 * root_n * h + 1e-9 * h:
            rq_ok = False

    pairs = decomp.touching_pairs()
    if len(pairs):
        d_i = np.array([decomp.diam(int(i)) for i in pairs[:, 0]])
        d_j = np.array([decomp.diam(int(j)) for j in pairs[:, 1]])
        ratios = np.maximum(d_i / d_j, d_j / d_i)
        worst_ratio = float(ratios.max())
    ratio_ok = worst_ratio <= 4.0 + 1e-12

    cutoff = intersection_cutoff(dom.dim)
    worst_nbr = 0.0
    for i in range(decomp.n_cubes):
        for j in decomp.neighbors(i):
            r = decomp.diam(int(j)) / decomp.diam(i)
            worst_nbr = max(worst_nbr, r)
    nbr_ok = worst_nbr <= cutoff + 1e-12

    return {
        "cover_exact": cover_exact,
        "lower_bound_ok": lower_ok,
        "upper_bound_ok": upper_ok,
        "ratio_ok": ratio_ok,
        "worst_touch_ratio": worst_ratio,
        "enlarged_side_ok": rq_ok,
        "neighbor_cutoff_ok": nbr_ok,
        "worst_neighbor_ratio": worst_nbr,
        "n_cubes": decomp.n_cubes,
    }


def to_svg(decomp: WhitneyDecomposition, path, show_enlarged: bool = False) -> None:
    """Write an SVG of a 2-D decomposition (cubes, optional R_Q overlays)."""
    if decomp.domain.dim != 2:
        raise ValueError("SVG export requires a 2-D domain")
    size = 640.0
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 1 1">',
        '<rect x="0" y="0" width="1" height="1" fill="#f5f5f5"/>',
    ]
    kmax = max(int(k) for k in decomp.levels)
    for i in range(decomp.n_cubes):
        side = decomp.side(i)
        x = decomp.coords[i][0] * side
        y = decomp.coords[i][1] * side
        shade = 230 - int(150 * decomp.levels[i] / max(kmax, 1))
        lines.append(
            f'<rect x="{x:.6f}" y="{1 - y - side:.6f}" width="{side:.6f}" '
            f'height="{side:.6f}" fill="rgb({shade},{shade},255)" '
            f'stroke="#333" stroke-width="0.0008"/>'
        )
    if show_enlarged:
        for i in range(decomp.n_cubes):
            s = decomp.rq_side[i]
            cx, cy = decomp.rq_center[i]
            lines.append(
                f'<rect x="{cx - s / 2:.6f}" y="{1 - cy - s / 2:.6f}" '
                f'width="{s:.6f}" height="{s:.6f}" fill="none" '
                f'stroke="#c04040" stroke-width="0.0008"/>'
            )
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
