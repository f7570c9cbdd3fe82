"""Product BMO, rectangular BMO, and BMO_{-1} estimation from wavelet
coefficients, plus the Journe-style enlargement and damped projection.

The product BMO supremum over open sets is combinatorial; estimators here
return certified lower bounds (every candidate open set is admissible), with
an exhaustive small-union oracle for cross-checking at toy sizes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import ProductLattice, StructureError
from .wavelets import DyadicRectangle, WaveletCoefficients, all_rectangles, _apply_along

__all__ = [
    "RectangleCollection",
    "EnlargementResult",
    "BmoLowerResult",
    "MinusOneResult",
    "coefficient_mass",
    "rectangular_bmo",
    "bmo_minus_one",
    "product_bmo_lower",
    "product_bmo_exhaustive",
    "journe_enlarge",
    "damped_projection",
    "dilated_cells",
]


@dataclass
class RectangleCollection:
    """A finite collection of dyadic rectangles with its cached shadow."""

    lattice: ProductLattice
    rectangles: tuple

    def __post_init__(self):
        self.rectangles = tuple(dict.fromkeys(self.rectangles))  # dedupe, keep order
        self._shadow = None

    def shadow(self) -> np.ndarray:
        if self._shadow is None:
            mask = np.zeros(self.lattice.shape, dtype=bool)
            for r in self.rectangles:
                mask[r.axis_slices(self.lattice)] = True
            self._shadow = mask
        return self._shadow

    def shadow_measure(self) -> float:
        return float(self.shadow().sum()) * self.lattice.cell_volume

    @property
    def is_single_rectangle(self) -> bool:
        return len(self.rectangles) == 1

    def t_minus_1_parameters(self):
        """(s, (k_s, pos_s)) if all rectangles share coordinate s, else None."""
        if not self.rectangles:
            return None
        for s in range(self.lattice.t):
            first = (self.rectangles[0].scales[s], self.rectangles[0].positions[s])
            if all((r.scales[s], r.positions[s]) == first for r in self.rectangles):
                return s, first
        return None


# ---------------------------------------------------------------------------
# scale-combo machinery: everything here works on aligned dyadic blocks
# ---------------------------------------------------------------------------

def _block_sums(arr: np.ndarray, blocks) -> np.ndarray:
    """Sum over aligned dyadic blocks: axis a collapses to blocks[a] entries."""
    out = arr
    for ax, b in enumerate(blocks):
        n = out.shape[ax]
        w = n // b
        out = out.reshape(out.shape[:ax] + (b, w) + out.shape[ax + 1:]).sum(axis=ax + 1)
    return out


def _expand_blocks(arr: np.ndarray, reps) -> np.ndarray:
    out = arr
    for ax, r in enumerate(reps):
        out = np.repeat(out, r, axis=ax)
    return out


class _MassIndex:
    """Per-scale-combo view of the rectangle mass of a coefficient tensor."""

    def __init__(self, lattice: ProductLattice, bases, rect_mass: np.ndarray):
        self.lattice = lattice
        self.bases = bases
        self.levels = [b.levels for b in bases]
        self.dims = lattice.dims
        self.mass = {}
        offsets = []
        for b in bases:
            off, offs = 0, {}
            for k in range(b.levels):
                offs[k] = (off, off + 2 ** (k * b.d))
                off += 2 ** (k * b.d)
            offsets.append(offs)
        for combo in itertools.product(*[range(lv) for lv in self.levels]):
            ranges = [range(*offsets[s][k]) for s, k in enumerate(combo)]
            block = rect_mass[np.ix_(*ranges)]
            shape = []
            for s, k in enumerate(combo):
                shape.extend([2 ** k] * self.dims[s])
            self.mass[combo] = block.reshape(shape)

    def combos(self):
        return self.mass.keys()

    def axis_blocks(self, combo):
        blocks = []
        for s, k in enumerate(combo):
            blocks.extend([2 ** k] * self.dims[s])
        return blocks

    def rect_cells(self, combo):
        """Cells per axis of one rectangle at this scale combo."""
        cells = []
        for s, k in enumerate(combo):
            for a in self.lattice.param_axes(s):
                cells.append(self.lattice.n_axis[a] >> k)
        return cells

    def mass_in(self, shadow: np.ndarray) -> float:
        """Total mass of rectangles entirely contained in the shadow."""
        total = 0.0
        sh = shadow.astype(np.int64)
        for combo, mass in self.mass.items():
            blocks = self.axis_blocks(combo)
            counts = _block_sums(sh, blocks)
            full = int(np.prod(self.rect_cells(combo)))
            total += float(mass[counts == full].sum())
        return total

    def make_rect(self, combo, pos_flat):
        scales, positions, i = [], [], 0
        for s, k in enumerate(combo):
            scales.append(k)
            positions.append(tuple(pos_flat[i:i + self.dims[s]]))
            i += self.dims[s]
        return DyadicRectangle(tuple(scales), tuple(positions))


def _mass_index(coeffs: WaveletCoefficients) -> _MassIndex:
    return _MassIndex(coeffs.lattice, coeffs.bases, coeffs.rect_mass_tensor())


def coefficient_mass(coeffs: WaveletCoefficients, U: RectangleCollection) -> float:
    """Sum over the collection's rectangles, all signatures, of |coefficient|^2."""
    mass = coeffs.rect_mass_tensor()
    total = 0.0
    for r in U.rectangles:
        idx = []
        for s, b in enumerate(coeffs.bases):
            if r.scales[s] >= b.levels:
                raise StructureError(
                    f"rectangle scale {r.scales[s]} beyond finest wavelet scale"
                )
            idx.append(b.cube_index[(r.scales[s], r.positions[s])])
        total += float(mass[tuple(idx)])
    return total


def _rect_value_tensor(coeffs: WaveletCoefficients):
    """sqrt(cumulative mass / volume) for every rectangle, plus the volumes."""
    cum = coeffs.rect_cumulative_mass_tensor()
    vols = np.ones(cum.shape)
    for s, b in enumerate(coeffs.bases):
        v = np.array([b.cube_volume(i) for i in range(b.ncubes)])
        shape = [1] * cum.ndim
        shape[s] = -1
        vols = vols * v.reshape(shape)
    return np.sqrt(cum / vols), cum, vols


def rectangular_bmo(coeffs: WaveletCoefficients) -> float:
    """Exact rectangular BMO: max over single rectangles of sqrt(mass inside / volume)."""
    vals, _, _ = _rect_value_tensor(coeffs)
    return float(vals.max()) if vals.size else 0.0


def _argmax_rectangle(coeffs: WaveletCoefficients):
    vals, _, _ = _rect_value_tensor(coeffs)
    flat = int(np.argmax(vals))
    idx = np.unravel_index(flat, vals.shape)
    scales, positions = [], []
    for s, b in enumerate(coeffs.bases):
        k, pos = b.cubes[idx[s]]
        scales.append(k)
        positions.append(pos)
    return DyadicRectangle(tuple(scales), tuple(positions)), float(vals[idx])


# ---------------------------------------------------------------------------
# greedy open-set growth (shared by product BMO and BMO_{-1})
# ---------------------------------------------------------------------------

def _greedy_open_set(lattice, index: _MassIndex, cum_by_combo, budget, seed,
                     max_rects=None):
    """Grow unions of rectangles by mass/shadow-increment; returns the best
    ratio mass_in(V)/measure(V), the chosen rectangles, and a nestedness flag.

    Every evaluated union certifies a lower bound, so the maximum over the
    search path is itself certified.  Ties break by mass, then smaller
    volume, then lexicographic index.
    """
    combos = list(index.combos())
    npts = lattice.npoints
    cells_of = {c: int(np.prod(index.rect_cells(c))) for c in combos}
    have_any = any(cum_by_combo[c].max() > 0 for c in combos)
    if not have_any:
        return 0.0, [], True

    def rect_slices(combo, pos_flat):
        slices = []
        cells = index.rect_cells(combo)
        for a, w in enumerate(cells):
            slices.append(slice(pos_flat[a] * w, (pos_flat[a] + 1) * w))
        return tuple(slices)

    def pick_next(V_int):
        """Highest mass/uncovered-cells candidate not yet inside V."""
        best_key, best_item = None, None
        for combo in combos:
            cum = cum_by_combo[combo]
            if cum.max() <= 0:
                continue
            counts = _block_sums(V_int, index.axis_blocks(combo))
            uncovered = cells_of[combo] - counts
            valid = (cum > 0) & (uncovered > 0)
            if not valid.any():
                continue
            score = np.where(valid, cum / np.maximum(uncovered, 1), -1.0)
            top = score.max()
            ties = np.argwhere(score >= top - 1e-15 * max(top, 1.0))
            pos = min(
                (tuple(int(x) for x in p) for p in ties),
                key=lambda p: (-float(cum[p]), p),
            )
            key = (float(top), float(cum[pos]), -cells_of[combo], combo, pos)
            if best_key is None or key > best_key:
                best_key, best_item = key, (combo, pos)
        return best_item

    best_ratio, best_rects = 0.0, []
    steps_cap = max_rects if max_rects is not None else 12

    starts = []
    flat_best, flat_key = None, None
    for combo in combos:
        cum = cum_by_combo[combo]
        if cum.max() <= 0:
            continue
        per_cell = cum / cells_of[combo]
        pos = np.unravel_index(int(np.argmax(per_cell)), per_cell.shape)
        key = (float(per_cell[pos]), float(cum[pos]), -cells_of[combo], combo)
        if flat_key is None or key > flat_key:
            flat_key, flat_best = key, (combo, tuple(int(x) for x in pos))
    starts.append(flat_best)
    rng = np.random.default_rng([seed, 1])
    for restart in range(1, max(1, budget)):
        combo = combos[int(rng.integers(len(combos)))]
        cum = cum_by_combo[combo]
        if cum.max() <= 0:
            continue
        flat = np.argwhere(cum > 0)
        pos = tuple(int(x) for x in flat[int(rng.integers(len(flat)))])
        starts.append((combo, pos))

    nested_overall = True
    for start in starts:
        V = np.zeros(lattice.shape, dtype=bool)
        chosen = []
        current = start
        nested = True
        for _ in range(steps_cap):
            combo, pos = current
            rect = index.make_rect(combo, pos)
            if chosen and not (chosen[-1].contains(rect) or rect.contains(chosen[-1])):
                nested = False
            V[rect_slices(combo, pos)] = True
            chosen.append(rect)
            ratio = index.mass_in(V) / (V.sum() / npts)
            if ratio > best_ratio:
                best_ratio, best_rects = ratio, list(chosen)
                nested_overall = nested
            current = pick_next(V.astype(np.int64))
            if current is None:
                break
    return best_ratio, best_rects, nested_overall


@dataclass
class BmoLowerResult:
    value: float
    collection: RectangleCollection
    diagnostics: dict = field(default_factory=dict)


def product_bmo_lower(coeffs: WaveletCoefficients, budget: int = 8, seed: int = 0,
                      max_rects: int | None = None,
                      extra_collections=None) -> BmoLowerResult:
    """Certified lower bound for the product BMO norm with the achieving union.

    Any union of dyadic rectangles is an admissible open set, so the best
    value found (which always includes every single rectangle, plus any
    caller-supplied candidate collections) is a valid lower bound; with a
    matching budget it dominates rectangular_bmo and the BMO_{-1} estimate.
    """
    index = _mass_index(coeffs)
    cum = coeffs.rect_cumulative_mass_tensor()
    cum_by_combo = _MassIndex(coeffs.lattice, coeffs.bases, cum).mass
    ratio, rects, nested = _greedy_open_set(
        coeffs.lattice, index, cum_by_combo, budget, seed, max_rects
    )
    rect_val = rectangular_bmo(coeffs)
    value = math.sqrt(max(ratio, 0.0))
    if value < rect_val:  # single rectangles are part of the budget
        best_rect, rect_val = _argmax_rectangle(coeffs)
        value = rect_val
        rects = [best_rect]
    for cand in extra_collections or ():
        sh = cand.shadow()
        if not sh.any():
            continue
        cval = math.sqrt(index.mass_in(sh) / (sh.sum() / coeffs.lattice.npoints))
        if cval > value:
            value, rects = cval, list(cand.rectangles)
    return BmoLowerResult(
        value,
        RectangleCollection(coeffs.lattice, tuple(rects)),
        {"nested": nested, "budget": budget, "seed": seed},
    )


def product_bmo_exhaustive(coeffs: WaveletCoefficients, max_rects: int = 3) -> BmoLowerResult:
    """Exhaustive supremum over unions of at most max_rects rectangles.

    Oracle for toy lattices; cost grows as (number of rectangles)^max_rects.
    """
    lattice = coeffs.lattice
    rects = all_rectangles(lattice)
    if lattice.npoints > 4096:
        raise ValueError("exhaustive oracle is meant for toy lattices")
    mass = coeffs.rect_mass_tensor()
    masks, masses = [], []
    for r in rects:
        bits = np.packbits(r.point_mask(lattice).ravel()).tobytes()
        masks.append(int.from_bytes(bits, "big"))
        idx = tuple(
            b.cube_index[(r.scales[s], r.positions[s])] for s, b in enumerate(coeffs.bases)
        )
        masses.append(float(mass[idx]))
    npts = lattice.npoints
    best, best_set = 0.0, ()
    order = range(len(rects))
    for size in range(1, max_rects + 1):
        for combo in itertools.combinations(order, size):
            V = 0
            for i in combo:
                V |= masks[i]
            area = bin(V).count("1") / npts
            inside = sum(m for mk, m in zip(masks, masses) if mk & ~V == 0)
            ratio = inside / area
            if ratio > best:
                best, best_set = ratio, combo
    return BmoLowerResult(
        math.sqrt(best),
        RectangleCollection(lattice, tuple(rects[i] for i in best_set)),
        {"exhaustive": True, "max_rects": max_rects},
    )


@dataclass
class MinusOneResult:
    value: float
    coordinate: int
    cube: tuple
    collection: RectangleCollection
    exact: bool
    diagnostics: dict = field(default_factory=dict)


def bmo_minus_one(coeffs: WaveletCoefficients, budget: int = 4, seed: int = 0) -> MinusOneResult:
    """Certified lower bound for BMO_{-1}: collections sharing one coordinate cube.

    For each coordinate s and cube Q_s the inner maximization over reduced
    collections runs the greedy mass/shadow-increment rule (exact when the
    chosen shadows are nested, flagged heuristic otherwise).
    """
    lattice = coeffs.lattice
    if lattice.t < 2:
        raise ValueError("BMO_{-1} needs at least two parameters")
    full_mass = coeffs.rect_mass_tensor()
    best = None
    for s in range(lattice.t):
        other = [p for p in range(lattice.t) if p != s]
        red_dims = tuple(lattice.dims[p] for p in other)
        red_axes = tuple(a for p in other for a in lattice.param_axes(p))
        red_lat = ProductLattice(red_dims, tuple(lattice.n_axis[a] for a in red_axes))
        red_bases = tuple(coeffs.bases[p] for p in other)
        base_s = coeffs.bases[s]
        for ci, (k, pos) in enumerate(base_s.cubes):
            red_mass = np.take(full_mass, ci, axis=s)
            if red_mass.max() <= 0:
                continue
            index = _MassIndex(red_lat, red_bases, red_mass)
            red_cum = red_mass
            for rs, rb in enumerate(red_bases):
                red_cum = _apply_along(red_cum, rb.containment, rs)
            cum_by_combo = _MassIndex(red_lat, red_bases, red_cum).mass
            ratio, red_rects, nested = _greedy_open_set(
                red_lat, index, cum_by_combo, budget, seed + ci, None
            )
            if ratio <= 0:
                continue
            qvol = base_s.cube_volume(ci)
            value = math.sqrt(ratio / qvol)
            if best is None or value > best[0]:
                full_rects = []
                for rr in red_rects:
                    scales = list(rr.scales)
                    positions = list(rr.positions)
                    scales.insert(s, k)
                    positions.insert(s, pos)
                    full_rects.append(DyadicRectangle(tuple(scales), tuple(positions)))
                best = (value, s, (k, pos), tuple(full_rects), nested)
    if best is None:
        return MinusOneResult(
            0.0, 0, (0, ()), RectangleCollection(lattice, ()), True, {"empty": True}
        )
    value, s, cube, rects, nested = best
    return MinusOneResult(
        value, s, cube, RectangleCollection(lattice, rects), nested,
        {"budget": budget, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Journe enlargement
# ---------------------------------------------------------------------------

def _strong_maximal(lattice: ProductLattice, mask: np.ndarray) -> np.ndarray:
    """Strong dyadic maximal function of an indicator, over all dyadic rectangles."""
    levels = []
    for s in range(lattice.t):
        n = min(lattice.param_shape(s))
        levels.append(int(math.log2(n)) + 1)  # scales down to single cells
    m = np.zeros(lattice.shape)
    ind = mask.astype(np.float64)
    for combo in itertools.product(*[range(lv) for lv in levels]):
        blocks, reps = [], []
        for s, k in enumerate(combo):
            for a in lattice.param_axes(s):
                n = lattice.n_axis[a]
                blocks.append(2 ** k)
                reps.append(n >> k)
        size = int(np.prod(reps))
        avg = _block_sums(ind, blocks) / size
        np.maximum(m, _expand_blocks(avg, reps), out=m)
    return m


def dilated_cells(rect: DyadicRectangle, lattice: ProductLattice, mu: float):
    """Per-axis covered cell indices of the mu-dilation about the rectangle center.

    A cell is covered iff its open interval meets the open dilated interval;
    at mu = 1 this is exactly the rectangle's own cells.
    """
    out = []
    for s in range(lattice.t):
        k = rect.scales[s]
        for a, j in zip(lattice.param_axes(s), rect.positions[s]):
            n = lattice.n_axis[a]
            w = n >> k
            c2 = 2 * j * w + w          # doubled center
            e2 = mu * w                 # doubled half-extent
            cells = set()
            for i in range(c2 // 2 - n, c2 // 2 + n + 1):
                gl = c2 - 2 * i - 2
                gr = 2 * i - c2
                if max(gl, gr) < e2:
                    cells.add(i % n)
            out.append(sorted(cells))
    return out


def _embeddedness(rect: DyadicRectangle, lattice: ProductLattice, V: np.ndarray) -> float:
    """E(R) = sup{mu >= 1 : mu R inside V} via the exact coverage thresholds."""
    naxes = len(lattice.n_axis)
    widths, centers2, ns = [], [], []
    for s in range(lattice.t):
        k = rect.scales[s]
        for a, j in zip(lattice.param_axes(s), rect.positions[s]):
            n = lattice.n_axis[a]
            w = n >> k
            widths.append(w)
            centers2.append(2 * j * w + w)
            ns.append(n)
    covered = [set() for _ in range(naxes)]
    events = []  # (mu, axis, cell)
    for ax in range(naxes):
        n, w, c2 = ns[ax], widths[ax], centers2[ax]
        for i in range(c2 // 2 - n, c2 // 2 + n + 1):
            g = max(c2 - 2 * i - 2, 2 * i - c2)
            cell = i % n
            mu = g / w
            if mu < 1.0:
                covered[ax].add(cell)
            elif mu <= 2 * n:  # beyond this the axis is fully wrapped anyway
                events.append((mu, ax, cell))
    if not V[np.ix_(*[sorted(c) for c in covered])].all():
        return 1.0  # should not happen: R inside sh(U) inside V
    events.sort()
    current = 1.0
    i = 0
    while i < len(events):
        mu = events[i][0]
        batch = []
        while i < len(events) and events[i][0] == mu:
            batch.append(events[i])
            i += 1
        current = mu  # strict threshold: valid up to and including mu
        ok = True
        for _, ax, cell in batch:
            if cell in covered[ax]:
                continue
            idx = [sorted(c) for c in covered]
            idx[ax] = [cell]
            if not V[np.ix_(*idx)].all():
                ok = False
            covered[ax].add(cell)
        if not ok:
            return current
        # cross terms between cells added on different axes in the same batch
        if len({b[1] for b in batch}) > 1:
            if not V[np.ix_(*[sorted(c) for c in covered])].all():
                return current
    if all(len(covered[ax]) == ns[ax] for ax in range(naxes)) and V.all():
        return math.inf
    return current


@dataclass
class EnlargementResult:
    V: np.ndarray
    E: dict
    a: float
    threshold: float
    degenerate: bool

    def measure(self, lattice: ProductLattice) -> float:
        return float(self.V.sum()) * lattice.cell_volume


def journe_enlarge(U: RectangleCollection, a: float) -> EnlargementResult:
    """Open set V slightly larger than sh(U) plus embeddedness factors E(R).

    V is a sublevel set {strong maximal function of 1_sh > lambda}; the
    maximal function attains finitely many values on the lattice, so the
    threshold is found by exact scan rather than bisection, making V as large
    as the strict bound |V| < (1+a)|sh(U)| allows.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    lattice = U.lattice
    if not U.rectangles:
        return EnlargementResult(np.zeros(lattice.shape, dtype=bool), {}, a, 1.0, False)
    sh = U.shadow()
    sh_count = int(sh.sum())
    bound = (1.0 + a) * sh_count
    m = _strong_maximal(lattice, sh)
    candidates = np.unique(m[m < 1.0])
    V, lam = sh.copy(), 1.0
    for v in candidates:
        count = int((m > v).sum())
        if count < bound:
            V, lam = m > v, float(v)
            break
    degenerate = int(V.sum()) == sh_count
    E = {r: _embeddedness(r, lattice, V) for r in U.rectangles}
    return EnlargementResult(V, E, a, lam, degenerate)


def damped_projection(coeffs: WaveletCoefficients, U: RectangleCollection,
                      E: dict, cexp: float) -> WaveletCoefficients:
    """Coefficients scaled by E(R)^{-cexp} on U, zero elsewhere."""
    out = np.zeros_like(coeffs.array)
    for r in U.rectangles:
        if r not in E:
            raise StructureError(f"no embeddedness value for rectangle {r}")
        ix = []
        for s, b in enumerate(coeffs.bases):
            ci = b.cube_index[(r.scales[s], r.positions[s])]
            ix.append(range(1 + ci * b.nsig, 1 + (ci + 1) * b.nsig))
        factor = float(E[r]) ** (-cexp) if cexp != 0 else 1.0
        out[np.ix_(*ix)] = coeffs.array[np.ix_(*ix)] * factor
    return coeffs.with_array(out)
