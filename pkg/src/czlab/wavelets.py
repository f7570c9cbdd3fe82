"""Dyadic rectangles, signatures, and the exact product Haar transform.

Within one parameter the decomposition is the usual multiresolution one
(isotropic cubes, 2^d - 1 signatures per cube); across parameters scales are
independent, so basis elements live on rectangles.  On the torus the basis is
t-fold tensor: per parameter either the constant function or a wavelet.  Pure
wavelet coefficients (every parameter a wavelet) are "the" coefficients; the
rest is the stored scaling part.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import GridFunction, ProductLattice, StructureError

__all__ = [
    "DyadicRectangle",
    "Signature",
    "WaveletCoefficients",
    "haar_transform",
    "haar_inverse",
    "project_onto_collection",
    "scaling_projection",
    "signatures",
    "all_rectangles",
    "wavelet_function",
    "dump_coefficients",
]


def signatures(d: int):
    """All of {0,1}^d except the all-ones vector, in lexicographic order."""
    return tuple(e for e in itertools.product((0, 1), repeat=d) if e != (1,) * d)


@dataclass(frozen=True)
class DyadicRectangle:
    """Product of per-parameter dyadic cubes: scale k_s, position j_s in {0..2^k_s-1}^{d_s}."""

    scales: tuple[int, ...]
    positions: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(k) for k in self.scales))
        object.__setattr__(
            self, "positions", tuple(tuple(int(j) for j in p) for p in self.positions)
        )
        if len(self.scales) != len(self.positions):
            raise StructureError("scales and positions disagree on parameter count")
        for k, pos in zip(self.scales, self.positions):
            if k < 0:
                raise StructureError(f"negative scale {k}")
            for j in pos:
                if not (0 <= j < 2 ** k):
                    raise StructureError(f"position {j} out of range at scale {k}")

    @property
    def t(self) -> int:
        return len(self.scales)

    def volume(self) -> float:
        return math.prod(2.0 ** (-k * len(pos)) for k, pos in zip(self.scales, self.positions))

    def axis_slices(self, lattice: ProductLattice):
        """One slice per lattice axis covering this rectangle's cells."""
        slices = []
        for s in range(lattice.t):
            k = self.scales[s]
            for a, j in zip(lattice.param_axes(s), self.positions[s]):
                n = lattice.n_axis[a]
                w = n >> k
                if w < 1:
                    raise StructureError(f"scale {k} finer than lattice axis {n}")
                slices.append(slice(j * w, (j + 1) * w))
        return tuple(slices)

    def point_mask(self, lattice: ProductLattice) -> np.ndarray:
        mask = np.zeros(lattice.shape, dtype=bool)
        mask[self.axis_slices(lattice)] = True
        return mask

    def contains(self, other: "DyadicRectangle") -> bool:
        """Dyadic containment: other subset of self, parameter by parameter."""
        for s in range(self.t):
            dk = other.scales[s] - self.scales[s]
            if dk < 0:
                return False
            for jo, js in zip(other.positions[s], self.positions[s]):
                if jo >> dk != js:
                    return False
        return True


@dataclass(frozen=True)
class Signature:
    """Per-parameter vectors in {0,1}^{d_s} minus the all-ones vector."""

    parts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(tuple(int(e) for e in p) for p in self.parts))
        for p in self.parts:
            if not p:
                raise StructureError("empty signature component")
            if any(e not in (0, 1) for e in p):
                raise StructureError("signature entries must be 0 or 1")
            if all(e == 1 for e in p):
                raise StructureError("signature component must not be all ones")


def _haar_axis_vector(n: int, k: int, j: int, eps: int) -> np.ndarray:
    """One-dimensional factor sampled on n points: eps=0 mean-zero Haar, eps=1 indicator."""
    w = n >> k
    out = np.zeros(n)
    scale = math.sqrt(2.0 ** k)
    if eps == 1:
        out[j * w:(j + 1) * w] = scale
    else:
        half = w >> 1
        out[j * w:j * w + half] = -scale
        out[j * w + half:(j + 1) * w] = scale
    return out


class _ParamBasis:
    """Orthonormal multiresolution basis for one parameter (d axes of n points)."""

    def __init__(self, d: int, n: int):
        self.d = d
        self.n = n
        self.m = n ** d
        self.levels = int(math.log2(n))          # wavelet scales 0 .. levels-1
        self.sigs = signatures(d)
        self.nsig = len(self.sigs)

        self.cubes = []                          # (k, pos) in catalog order
        for k in range(self.levels):
            for pos in itertools.product(range(2 ** k), repeat=d):
                self.cubes.append((k, pos))
        self.cube_index = {c: i for i, c in enumerate(self.cubes)}
        self.ncubes = len(self.cubes)

        # labels: 0 = constant, then nsig consecutive labels per cube
        V = np.empty((self.m, self.m))
        V[:, 0] = 1.0
        col = 1
        for (k, pos) in self.cubes:
            for eps in self.sigs:
                vec = np.ones(1)
                for j, e in zip(pos, eps):
                    vec = np.kron(vec, _haar_axis_vector(n, k, j, e))
                V[:, col] = vec
                col += 1
        assert col == self.m
        self.synth = V
        self.analysis = V.T / self.m

        # containment: cont[q, q2] = 1 iff cube q2 is a subset of cube q
        cont = np.zeros((self.ncubes, self.ncubes))
        for i, (k, pos) in enumerate(self.cubes):
            for i2, (k2, pos2) in enumerate(self.cubes):
                if k2 >= k and all((p2 >> (k2 - k)) == p for p2, p in zip(pos2, pos)):
                    cont[i, i2] = 1.0
        self.containment = cont

        # grouping matrix: rows cubes, cols labels; sums signature mass per cube
        G = np.zeros((self.ncubes, self.m))
        for i in range(self.ncubes):
            G[i, 1 + i * self.nsig: 1 + (i + 1) * self.nsig] = 1.0
        self.group = G

    def label_index(self, k: int, pos: tuple, eps: tuple) -> int:
        ci = self.cube_index[(k, pos)]
        return 1 + ci * self.nsig + self.sigs.index(eps)

    def cube_volume(self, i: int) -> float:
        k = self.cubes[i][0]
        return 2.0 ** (-k * self.d)


@lru_cache(maxsize=None)
def _param_basis(d: int, n: int) -> _ParamBasis:
    return _ParamBasis(d, n)


def _bases_for(lattice: ProductLattice):
    bases = []
    for s in range(lattice.t):
        ns = set(lattice.param_shape(s))
        if len(ns) != 1:
            raise StructureError(
                f"parameter {s} axes have unequal sizes {sorted(ns)}; cubes need one side"
            )
        bases.append(_param_basis(lattice.dims[s], ns.pop()))
    return tuple(bases)


def _apply_along(arr: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, 0)
    out = (mat @ moved.reshape(mat.shape[1], -1)).reshape((mat.shape[0],) + moved.shape[1:])
    return np.moveaxis(out, 0, axis)


class WaveletCoefficients:
    """Product Haar coefficients of a grid function.

    The full orthonormal coefficient tensor is kept (one axis per parameter,
    label 0 = per-parameter constant); the map view exposes the pure wavelet
    entries keyed by (DyadicRectangle, Signature), everything else being the
    scaling part.
    """

    def __init__(self, lattice: ProductLattice, array: np.ndarray, bases=None):
        self.lattice = lattice
        self.bases = bases if bases is not None else _bases_for(lattice)
        shape = tuple(b.m for b in self.bases)
        if array.shape != shape:
            raise StructureError(f"coefficient tensor shape {array.shape}, expected {shape}")
        self.array = array

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, lattice: ProductLattice) -> "WaveletCoefficients":
        bases = _bases_for(lattice)
        return cls(lattice, np.zeros(tuple(b.m for b in bases), dtype=np.complex128), bases)

    @classmethod
    def from_dict(cls, lattice: ProductLattice, entries: dict) -> "WaveletCoefficients":
        """Build from {(DyadicRectangle, Signature): coefficient}; scaling part zero."""
        out = cls.zeros(lattice)
        for (rect, sig), c in entries.items():
            out.array[out._label_tuple(rect, sig)] = c
        return out

    def with_array(self, array: np.ndarray) -> "WaveletCoefficients":
        return WaveletCoefficients(self.lattice, array, self.bases)

    # -- indexing ----------------------------------------------------------

    def _label_tuple(self, rect: DyadicRectangle, sig: Signature):
        if rect.t != self.lattice.t or len(sig.parts) != self.lattice.t:
            raise StructureError("parameter count mismatch")
        idx = []
        for s, b in enumerate(self.bases):
            k = rect.scales[s]
            if k >= b.levels:
                raise StructureError(
                    f"scale {k} finer than the finest wavelet scale {b.levels - 1}"
                )
            if len(rect.positions[s]) != b.d or len(sig.parts[s]) != b.d:
                raise StructureError("dimension mismatch in parameter {s}")
            idx.append(b.label_index(k, rect.positions[s], sig.parts[s]))
        return tuple(idx)

    def coefficient(self, rect: DyadicRectangle, sig: Signature) -> complex:
        return complex(self.array[self._label_tuple(rect, sig)])

    def items(self):
        """Iterate pure wavelet entries as ((rect, sig), coefficient)."""
        for idx in itertools.product(*[range(1, b.m) for b in self.bases]):
            scales, positions, parts = [], [], []
            for s, b in enumerate(self.bases):
                ci, si = divmod(idx[s] - 1, b.nsig)
                k, pos = b.cubes[ci]
                scales.append(k)
                positions.append(pos)
                parts.append(b.sigs[si])
            yield (
                DyadicRectangle(tuple(scales), tuple(positions)),
                Signature(tuple(parts)),
            ), complex(self.array[idx])

    # -- masses ------------------------------------------------------------

    def _pure_mask_slices(self):
        return tuple(slice(1, b.m) for b in self.bases)

    def wavelet_mass(self) -> float:
        """Sum of |coefficient|^2 over pure wavelet entries."""
        return float(np.sum(np.abs(self.array[self._pure_mask_slices()]) ** 2))

    def scaling_mass(self) -> float:
        return float(np.sum(np.abs(self.array) ** 2)) - self.wavelet_mass()

    def rect_mass_tensor(self) -> np.ndarray:
        """Mass per rectangle, all signatures summed; axes are per-parameter cube indices."""
        mass = np.abs(self.array) ** 2
        for s, b in enumerate(self.bases):
            mass = _apply_along(mass, b.group, s)
        return mass

    def rect_cumulative_mass_tensor(self) -> np.ndarray:
        """For each rectangle R, the mass of all rectangles contained in R."""
        cum = self.rect_mass_tensor()
        for s, b in enumerate(self.bases):
            cum = _apply_along(cum, b.containment, s)
        return cum


def haar_transform(f: GridFunction) -> WaveletCoefficients:
    """Exact orthonormal product Haar expansion of a grid function."""
    bases = _bases_for(f.lattice)
    arr = f.values.reshape(tuple(b.m for b in bases)).astype(np.complex128)
    for s, b in enumerate(bases):
        arr = _apply_along(arr, b.analysis, s)
    return WaveletCoefficients(f.lattice, arr, bases)


def haar_inverse(c: WaveletCoefficients) -> GridFunction:
    arr = c.array
    for s, b in enumerate(c.bases):
        arr = _apply_along(arr, b.synth, s)
    return GridFunction(c.lattice, arr.reshape(c.lattice.shape))


def wavelet_function(lattice: ProductLattice, rect: DyadicRectangle, sig: Signature) -> GridFunction:
    """The basis function w_R^eps as a grid function."""
    c = WaveletCoefficients.zeros(lattice)
    c.array[c._label_tuple(rect, sig)] = 1.0
    return haar_inverse(c)


def all_rectangles(lattice: ProductLattice):
    """All wavelet-bearing dyadic rectangles, in catalog order."""
    bases = _bases_for(lattice)
    out = []
    for combo in itertools.product(*[b.cubes for b in bases]):
        out.append(DyadicRectangle(tuple(k for k, _ in combo), tuple(p for _, p in combo)))
    return out


def project_onto_collection(b: GridFunction, rects) -> GridFunction:
    """Wavelet projection P_U b onto the rectangles in U (all signatures kept)."""
    coeffs = haar_transform(b)
    mask = np.zeros(coeffs.array.shape, dtype=bool)
    for rect in rects:
        ix = []
        for s, base in enumerate(coeffs.bases):
            k = rect.scales[s]
            if k >= base.levels:
                raise StructureError(f"rectangle scale {k} beyond lattice resolution")
            ci = base.cube_index[(k, rect.positions[s])]
            ix.append(range(1 + ci * base.nsig, 1 + (ci + 1) * base.nsig))
        mask[np.ix_(*ix)] = True
    return haar_inverse(coeffs.with_array(np.where(mask, coeffs.array, 0.0)))


def scaling_projection(f: GridFunction, J: DyadicRectangle) -> GridFunction:
    """Truncated tower sum over rectangles strictly coarser than J in every parameter.

    Per parameter the allowed factors are the constant (standing in for the
    scales coarser than the torus) and the wavelets on cubes strictly
    containing J_s.  On J this equals <f, w^1_J> w^1_J.
    """
    coeffs = haar_transform(f)
    keep = []
    for s, base in enumerate(coeffs.bases):
        k = J.scales[s]
        if k >= base.levels:
            raise StructureError(f"scale {k} beyond lattice resolution")
        allowed = np.zeros(base.m, dtype=bool)
        allowed[0] = True
        for kk in range(k):
            anc = tuple(j >> (k - kk) for j in J.positions[s])
            ci = base.cube_index[(kk, anc)]
            allowed[1 + ci * base.nsig: 1 + (ci + 1) * base.nsig] = True
        keep.append(allowed)
    mask = np.ones(coeffs.array.shape, dtype=bool)
    for s, allowed in enumerate(keep):
        shape = [1] * len(keep)
        shape[s] = -1
        mask &= allowed.reshape(shape)
    return haar_inverse(coeffs.with_array(np.where(mask, coeffs.array, 0.0)))


def dump_coefficients(c: WaveletCoefficients, fh, min_abs: float = 0.0) -> None:
    """JSON-lines dump of the pure wavelet coefficients, deterministically ordered."""
    rows = []
    for (rect, sig), val in c.items():
        if abs(val) < min_abs:
            continue
        rows.append(
            {
                "scales": list(rect.scales),
                "positions": [list(p) for p in rect.positions],
                "signature": [list(p) for p in sig.parts],
                "re": val.real,
                "im": val.imag,
            }
        )
    rows.sort(key=lambda r: (r["scales"], r["positions"], r["signature"]))
    for r in rows:
        fh.write(json.dumps(r) + "\n")
