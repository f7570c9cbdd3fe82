"""Periodic product lattices and the L^2 geometry everything else sits on.

The domain is the unit product torus [0,1)^{d_1} x ... x [0,1)^{d_t}, sampled
with a power-of-two number of points per axis.  All measures are probability
measures (Riemann sums with cell volume 1/N), so that the constant function 1
has unit norm in every L^p and Parseval is exact for the unitary FFT.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StructureError",
    "ProductLattice",
    "GridFunction",
    "fft_forward",
    "fft_inverse",
    "lp_norm",
    "inner_product",
    "read_czl1",
    "write_czl1",
]


class StructureError(ValueError):
    """Raised when two objects that must share structure (lattice, shape) do not."""


def _is_pow2(n: int) -> bool:
    return n >= 4 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ProductLattice:
    """Sampling lattice for R^{d_1} x ... x R^{d_t}, periodized to the unit torus.

    dims    -- ambient dimension d_s of each parameter
    n_axis  -- samples per axis (one entry per axis, sum(dims) axes total),
               each a power of two >= 4
    """

    dims: tuple[int, ...]
    n_axis: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "n_axis", tuple(int(n) for n in self.n_axis))
        if len(self.dims) < 1 or any(d < 1 for d in self.dims):
            raise StructureError("parameter dimensions must be positive")
        if len(self.n_axis) != sum(self.dims):
            raise StructureError(
                f"need {sum(self.dims)} axis sizes, got {len(self.n_axis)}"
            )
        for n in self.n_axis:
            if not _is_pow2(n):
                raise StructureError(f"axis size {n} is not a power of two >= 4")

    @property
    def t(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_axis

    @property
    def npoints(self) -> int:
        return int(np.prod(self.n_axis))

    @property
    def cell_volume(self) -> float:
        return 1.0 / self.npoints

    def param_axes(self, s: int) -> tuple[int, ...]:
        """Indices of the axes belonging to parameter s (0-based)."""
        off = sum(self.dims[:s])
        return tuple(range(off, off + self.dims[s]))

    def param_shape(self, s: int) -> tuple[int, ...]:
        return tuple(self.n_axis[a] for a in self.param_axes(s))

    def frequency_vectors(self, s: int) -> np.ndarray:
        """Integer frequency vectors of parameter s, shape param_shape(s) + (d_s,).

        Frequencies follow numpy's FFT layout: 0, 1, ..., n/2-1, -n/2, ..., -1.
        """
        axes_freqs = [
            np.rint(np.fft.fftfreq(n) * n).astype(np.int64)
            for n in self.param_shape(s)
        ]
        mesh = np.meshgrid(*axes_freqs, indexing="ij")
        return np.stack(mesh, axis=-1)


@dataclass(frozen=True)
class GridFunction:
    """Complex samples on a ProductLattice, row-major, last axis fastest."""

    lattice: ProductLattice
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.complex128)
        if arr.shape != self.lattice.shape:
            raise StructureError(
                f"values shape {arr.shape} does not match lattice {self.lattice.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise StructureError("grid values must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def _require_same_lattice(self, other: "GridFunction"):
        if self.lattice != other.lattice:
            raise StructureError("grid functions live on different lattices")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._require_same_lattice(other)
        return GridFunction(self.lattice, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._require_same_lattice(other)
        return GridFunction(self.lattice, self.values - other.values)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.lattice, -self.values)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._require_same_lattice(other)
            return GridFunction(self.lattice, self.values * other.values)
        return GridFunction(self.lattice, self.values * other)

    __rmul__ = __mul__

    def conj(self) -> "GridFunction":
        return GridFunction(self.lattice, np.conj(self.values))

    def abs2(self) -> "GridFunction":
        """Pointwise |f|^2 as a grid function."""
        return GridFunction(self.lattice, (self.values * np.conj(self.values)).real.astype(np.complex128))

    @staticmethod
    def zeros(lattice: ProductLattice) -> "GridFunction":
        return GridFunction(lattice, np.zeros(lattice.shape, dtype=np.complex128))


def fft_forward(f: GridFunction) -> GridFunction:
    """Unitary forward FFT over all axes; preserves the L^2 norm exactly."""
    return GridFunction(f.lattice, np.fft.fftn(f.values, norm="ortho"))


def fft_inverse(f: GridFunction) -> GridFunction:
    """Unitary inverse FFT; round trip with fft_forward is the identity."""
    return GridFunction(f.lattice, np.fft.ifftn(f.values, norm="ortho"))


def lp_norm(f: GridFunction, p: float) -> float:
    """Riemann-sum L^p norm with the torus normalized to volume one.

    ||1||_p = 1 for every p; p = inf gives the max norm.
    """
    if p != np.inf and p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    a = np.abs(f.values)
    if p == np.inf:
        return float(a.max()) if a.size else 0.0
    return float(np.mean(a ** p) ** (1.0 / p))


def inner_product(f: GridFunction, g: GridFunction) -> complex:
    """<f, g> = mean of f * conj(g); conjugate-linear in the second slot."""
    f._require_same_lattice(g)
    return complex(np.vdot(g.values, f.values) / f.lattice.npoints)


# ---------------------------------------------------------------------------
# CZL1 grid file format
#
# bytes 0-3: ASCII "CZL1"; u32 t; t x u32 d_s; sum(d_s) x u32 n_axis;
# then npoints interleaved little-endian f64 pairs (re, im), row-major.
# ---------------------------------------------------------------------------

_MAGIC = b"CZL1"


def write_czl1(f: GridFunction, path) -> None:
    lat = f.lattice
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", lat.t))
        fh.write(struct.pack(f"<{lat.t}I", *lat.dims))
        fh.write(struct.pack(f"<{len(lat.n_axis)}I", *lat.n_axis))
        flat = np.ascontiguousarray(f.values).ravel()
        inter = np.empty(2 * flat.size, dtype="<f8")
        inter[0::2] = flat.real
        inter[1::2] = flat.imag
        fh.write(inter.tobytes())


def read_czl1(path) -> GridFunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise StructureError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        (t,) = struct.unpack("<I", fh.read(4))
        if t < 1 or t > 64:
            raise StructureError(f"implausible parameter count {t}")
        dims = struct.unpack(f"<{t}I", fh.read(4 * t))
        naxes = sum(dims)
        n_axis = struct.unpack(f"<{naxes}I", fh.read(4 * naxes))
        lattice = ProductLattice(dims, n_axis)  # rejects non-powers-of-two
        raw = fh.read()
    expected = 16 * lattice.npoints
    if len(raw) != expected:
        raise StructureError(f"payload is {len(raw)} bytes, expected {expected}")
    inter = np.frombuffer(raw, dtype="<f8")
    values = (inter[0::2] + 1j * inter[1::2]).reshape(lattice.shape)
    return GridFunction(lattice, values)
