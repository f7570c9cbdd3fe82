"""Degree-0 homogeneous Fourier multipliers: Riesz transforms, half spaces,
cone projections, smoothed cone operators, rotations.

A symbol is a rule on the unit sphere.  At a parameter's zero frequency a
non-constant symbol has no continuous extension, so it takes the value 0 there
(the operator annihilates per-parameter means); constant symbols keep their
constant so the added identity really is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import GridFunction, ProductLattice, StructureError

__all__ = [
    "MultiplierSymbol",
    "Cone",
    "ConePair",
    "apply_multiplier",
    "constant_symbol",
    "riesz_symbol",
    "half_space_symbol",
    "cone_projection_symbol",
    "smoothed_cone_symbol",
    "polynomial_symbol",
    "conjugate_symbol",
    "rotate_symbol",
    "random_rotation",
    "smoothstep",
    "sphere_directions",
    "antipode_index",
    "symbol_to_dict",
    "symbol_from_dict",
]


# ---------------------------------------------------------------------------
# sphere sampling
# ---------------------------------------------------------------------------

def sphere_directions(d: int, count: int | None = None) -> np.ndarray:
    """Unit directions covering S^{d-1}, exactly closed under x -> -x.

    The second half of the array is the exact negation of the first, so the
    antipode of sample i is sample (i + count/2) % count bitwise.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if count is None:
        count = 256 if d == 2 else 2048
    if count % 2:
        count += 1
    half = count // 2
    if d == 2:
        ang = 2.0 * np.pi * np.arange(half) / count
        top = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif d == 3:
        # Fibonacci lattice on the upper hemisphere; negation supplies the rest
        i = np.arange(half)
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        z = 1.0 - (i + 0.5) / half
        phi = 2.0 * np.pi * i / golden
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        top = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        top /= np.linalg.norm(top, axis=1, keepdims=True)
    else:
        raise NotImplementedError(f"sphere sampling for d={d} is not supported")
    return np.concatenate([top, -top], axis=0)


def antipode_index(count: int) -> np.ndarray:
    half = count // 2
    return (np.arange(count) + half) % count


def sample_mesh(dirs: np.ndarray) -> float:
    """Max nearest-neighbor geodesic distance of a direction set."""
    if len(dirs) == 2:
        return float(np.pi)
    g = dirs @ dirs.T
    np.fill_diagonal(g, -1.0)
    nearest = np.arccos(np.clip(g.max(axis=1), -1.0, 1.0))
    return float(nearest.max())


def random_rotation(d: int, rng) -> np.ndarray:
    """Uniform-ish rotation: Gaussian matrix, orthonormalized, det fixed to +1."""
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        a = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s], [s, c]])
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

class MultiplierSymbol:
    """Degree-0 homogeneous multiplier for one parameter.

    rule(u) evaluates on an (M, d) array of unit directions and returns M
    complex values; evaluate() extends by homogeneity to raw frequency
    vectors, sending the zero frequency to zero_value.
    """

    def __init__(self, dim, kind, rule, zero_value=0.0, smoothness=None,
                 params=None, sample_count=None):
        self.dim = int(dim)
        self.kind = kind
        self.rule = rule
        self.zero_value = complex(zero_value)
        self.smoothness = smoothness
        self.params = dict(params or {})
        self.sample_count = sample_count
        self._lattice_cache = {}
        self._sample_cache = {}

    def __repr__(self):
        return f"MultiplierSymbol({self.kind}, d={self.dim})"

    def evaluate_dirs(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        squeeze = u.ndim == 1
        if squeeze:
            u = u[None, :]
        out = np.asarray(self.rule(u), dtype=np.complex128)
        return out[0] if squeeze else out

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """Values at raw frequency vectors xi of shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        flat = xi.reshape(-1, self.dim)
        r = np.linalg.norm(flat, axis=1)
        out = np.full(len(flat), self.zero_value, dtype=np.complex128)
        nz = r > 0
        if np.any(nz):
            out[nz] = self.evaluate_dirs(flat[nz] / r[nz, None])
        return out.reshape(xi.shape[:-1])

    def lattice_values(self, lattice: ProductLattice, s: int) -> np.ndarray:
        key = (lattice.dims, lattice.n_axis, s)
        if key not in self._lattice_cache:
            self._lattice_cache[key] = self.evaluate(lattice.frequency_vectors(s))
        return self._lattice_cache[key]

    def sphere_samples(self, count: int | None = None):
        key = count if count is not None else self.sample_count
        if key not in self._sample_cache:
            dirs = sphere_directions(self.dim, key)
            self._sample_cache[key] = (dirs, self.evaluate_dirs(dirs))
        return self._sample_cache[key]


def constant_symbol(d: int, value=1.0) -> MultiplierSymbol:
    value = complex(value)
    return MultiplierSymbol(
        d, "constant",
        lambda u, _v=value: np.full(len(u), _v, dtype=np.complex128),
        zero_value=value, smoothness=None,
        params={"re": value.real, "im": value.imag},
    )


def riesz_symbol(d: int, j: int) -> MultiplierSymbol:
    """j-th Riesz transform symbol -i xi_j / |xi| (Hilbert transform when d=1)."""
    if not (1 <= j <= d):
        raise ValueError(f"axis {j} out of range for dimension {d}")
    return MultiplierSymbol(
        d, "riesz",
        lambda u, _j=j - 1: -1j * u[:, _j],
        zero_value=0.0, smoothness=None, params={"axis": j},
    )


def _unit(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("direction must be nonzero")
    return v / n


def half_space_symbol(xi) -> MultiplierSymbol:
    """Indicator of {theta . xi > 0}; boundary frequencies get 0."""
    xi = _unit(xi)
    return MultiplierSymbol(
        len(xi), "half_space",
        lambda u, _x=xi: ((u @ _x) > 0).astype(np.complex128),
        zero_value=0.0, smoothness=0, params={"direction": xi.tolist()},
    )


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cone:
    """Frequency cone (xi, Q): direction xi, cube aperture of given full side in xi-perp.

    theta lies in the cone iff theta . xi > 0 and each aperture coordinate of
    theta-perp is within (theta . xi) * side/2.
    """

    direction: tuple[float, ...]
    aperture_side: float

    def __post_init__(self):
        v = _unit(self.direction)
        object.__setattr__(self, "direction", tuple(float(x) for x in v))
        if len(v) >= 2 and self.aperture_side <= 0:
            raise ValueError("aperture side must be positive")

    @property
    def dim(self) -> int:
        return len(self.direction)

    def frame(self) -> np.ndarray:
        """Orthonormal basis of direction-perp as rows, shape (d-1, d)."""
        d = self.dim
        xi = np.array(self.direction)
        e1 = np.zeros(d)
        e1[0] = 1.0
        v = xi - e1
        if np.linalg.norm(v) < 1e-14:
            return np.eye(d)[1:]
        H = np.eye(d) - 2.0 * np.outer(v, v) / (v @ v)
        return H[1:]

    def membership(self, theta: np.ndarray) -> np.ndarray:
        """Bool array: which rows of theta (shape (M, d)) lie in the cone."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        xi = np.array(self.direction)
        t0 = theta @ xi
        if self.dim == 1:
            return t0 > 0
        u = theta @ self.frame().T
        half = self.aperture_side / 2.0
        with np.errstate(invalid="ignore"):
            ok = np.all(np.abs(u) <= t0[:, None] * half, axis=1)
        return (t0 > 0) & ok

    def dilate(self, lam: float) -> "Cone":
        if lam < 1:
            raise ValueError("dilation factor must be >= 1")
        return Cone(self.direction, self.aperture_side * lam)


@dataclass(frozen=True)
class ConePair:
    """Inner cone D, outer cone C with D inside C, smoothing margin tau."""

    inner: Cone
    outer: Cone
    tau: float
    smoothness: int = 2

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.inner.dim != self.outer.dim:
            raise StructureError("cone dimensions differ")
        dirs = sphere_directions(self.inner.dim)
        inside = self.inner.membership(dirs)
        if not np.all(self.outer.membership(dirs[inside])):
            raise ValueError("inner cone is not contained in the outer cone (sampled check)")


def cone_projection_symbol(C: Cone) -> MultiplierSymbol:
    """Sharp Fourier projection onto the cone: indicator values in {0,1}."""
    return MultiplierSymbol(
        C.dim, "cone",
        lambda u, _c=C: _c.membership(u).astype(np.complex128),
        zero_value=0.0, smoothness=0,
        params={"direction": list(C.direction), "side": C.aperture_side},
    )


def smoothstep(m: int, x: np.ndarray) -> np.ndarray:
    """Polynomial step with m vanishing derivatives at 0 and 1; odd-symmetric about 1/2."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    acc = np.zeros_like(x)
    for k in range(m + 1):
        acc += math.comb(m + k, k) * math.comb(2 * m + 1, m - k) * (-x) ** k
    return x ** (m + 1) * acc


def smoothed_cone_symbol(D: Cone, tau: float, m: int) -> MultiplierSymbol:
    """C^m symbol with 1_D <= value <= 1_{(1+tau)D}, smoothed separably per aperture axis."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if m < 1:
        raise ValueError("smoothness order must be >= 1")
    xi = np.array(D.direction)
    half = D.aperture_side / 2.0
    frame = D.frame()

    def rule(u):
        u = np.atleast_2d(u)
        t0 = u @ xi
        out = np.zeros(len(u), dtype=np.complex128)
        pos = t0 > 0
        if D.dim == 1:
            out[pos] = 1.0
            return out
        if np.any(pos):
            r = np.abs(u[pos] @ frame.T) / (t0[pos, None] * half)
            fac = np.ones_like(r)
            band = (r > 1.0) & (r < 1.0 + tau)
            fac[band] = smoothstep(m, (1.0 + tau - r[band]) / tau)
            fac[r >= 1.0 + tau] = 0.0
            out[pos] = np.prod(fac, axis=1)
        return out

    return MultiplierSymbol(
        D.dim, "smoothed_cone", rule, zero_value=0.0, smoothness=m,
        params={"direction": list(D.direction), "side": D.aperture_side,
                "tau": tau, "order": m},
    )


# ---------------------------------------------------------------------------
# algebra on symbols
# ---------------------------------------------------------------------------

def conjugate_symbol(sym: MultiplierSymbol) -> MultiplierSymbol:
    memo = getattr(sym, "_conj_memo", None)
    if memo is not None:
        return memo
    out = MultiplierSymbol(
        sym.dim, "conjugate",
        lambda u, _s=sym: np.conj(_s.rule(u)),
        zero_value=np.conj(sym.zero_value), smoothness=sym.smoothness,
        params={"base": symbol_to_dict(sym, samples=False)},
    )
    sym._conj_memo = out  # keeps lattice-value caches warm across repeated adjoints
    return out


def polynomial_symbol(dim: int, members, monomials) -> MultiplierSymbol:
    """Realize sum_j c_j prod_i member_i^{a_{ji}} as one symbol.

    monomials: iterable of (exponent tuple over members, complex coefficient).
    """
    members = list(members)
    monomials = [(tuple(int(a) for a in e), complex(c)) for e, c in monomials]
    zero = 0.0 + 0.0j
    for exps, c in monomials:
        term = c
        for mem, a in zip(members, exps):
            if a:
                term *= mem.zero_value ** a
        zero += term

    def rule(u):
        vals = [m.evaluate_dirs(u) for m in members]
        out = np.zeros(len(np.atleast_2d(u)), dtype=np.complex128)
        for exps, c in monomials:
            term = np.full(out.shape, c, dtype=np.complex128)
            for v, a in zip(vals, exps):
                if a:
                    term *= v ** a
            out += term
        return out

    smooth = min((m.smoothness for m in members if m.smoothness is not None), default=None)
    return MultiplierSymbol(
        dim, "polynomial", rule, zero_value=zero, smoothness=smooth,
        params={
            "members": [symbol_to_dict(m, samples=False) for m in members],
            "monomials": [
                {"exponents": list(e), "re": c.real, "im": c.imag} for e, c in monomials
            ],
        },
    )


def _check_rotation(rho: np.ndarray, d: int):
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (d, d):
        raise ValueError(f"rotation must be {d}x{d}")
    if np.max(np.abs(rho @ rho.T - np.eye(d))) > 1e-12:
        raise ValueError("matrix is not orthogonal to 1e-12")
    if abs(np.linalg.det(rho) - 1.0) > 1e-12:
        raise ValueError("matrix must have determinant 1 to 1e-12")
    return rho


def _interp_rule_from_samples(dirs: np.ndarray, vals: np.ndarray, d: int):
    """Order >= 1 interpolation of sampled sphere values."""
    if d == 1:
        def rule1(u):
            u = np.atleast_2d(u)
            out = np.where(u[:, 0] > 0, vals[0], vals[1])
            return out.astype(np.complex128)
        return rule1
    if d == 2:
        count = len(dirs)
        base = math.atan2(dirs[0][1], dirs[0][0])

        def rule2(u):
            u = np.atleast_2d(u)
            ang = (np.arctan2(u[:, 1], u[:, 0]) - base) % (2.0 * np.pi)
            pos = ang / (2.0 * np.pi) * count
            i0 = np.floor(pos).astype(int) % count
            i1 = (i0 + 1) % count
            w = pos - np.floor(pos)
            return (1.0 - w) * vals[i0] + w * vals[i1]
        return rule2

    def rule_nd(u, k=6):
        u = np.atleast_2d(u)
        out = np.empty(len(u), dtype=np.complex128)
        dots = u @ dirs.T
        for i in range(len(u)):
            nb = np.argsort(dots[i])[-k:]
            X = np.concatenate([np.ones((k, 1)), dirs[nb] - u[i]], axis=1)
            coef, *_ = np.linalg.lstsq(X, vals[nb], rcond=None)
            out[i] = coef[0]
        return out
    return rule_nd


def rotate_symbol(sym: MultiplierSymbol, rho, method: str = "auto",
                  sample_count: int | None = None) -> MultiplierSymbol:
    """Symbol of the rotated operator: xi -> m(rho^{-1} xi).

    method "auto" composes the stored rule with the inverse rotation (exact);
    "interp" goes through the parent's sphere samples with order >= 1
    interpolation, as when only samples are available.
    """
    rho = _check_rotation(rho, sym.dim)
    if method == "auto":
        rule = lambda u, _s=sym, _r=rho: _s.rule(np.atleast_2d(u) @ _r)
        mesh = 0.0
    elif method == "interp":
        dirs, vals = sym.sphere_samples(sample_count)
        base = _interp_rule_from_samples(dirs, vals, sym.dim)
        rule = lambda u, _b=base, _r=rho: _b(np.atleast_2d(u) @ _r)
        mesh = sample_mesh(dirs)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MultiplierSymbol(
        sym.dim, "rotated", rule, zero_value=sym.zero_value,
        smoothness=sym.smoothness,
        params={"base": symbol_to_dict(sym, samples=False),
                "matrix": np.asarray(rho).tolist(), "method": method,
                "mesh": mesh},
    )


# ---------------------------------------------------------------------------
# application to grid functions
# ---------------------------------------------------------------------------

def apply_multiplier(symbols, f: GridFunction) -> GridFunction:
    """Apply the tensor multiplier prod_s m_s(xi_s); None means identity in that slot.

    Frequencies are the fftfreq representatives; on an even lattice the
    Nyquist planes are self-aliased, so real-input symmetry under
    m(-xi) = conj(m(xi)) holds exactly for inputs with no Nyquist mass.
    """
    lat = f.lattice
    if len(symbols) != lat.t:
        raise StructureError(f"need {lat.t} symbols, got {len(symbols)}")
    fh = np.fft.fftn(f.values, norm="ortho")
    for s, sym in enumerate(symbols):
        if sym is None:
            continue
        if sym.dim != lat.dims[s]:
            raise StructureError(
                f"symbol dimension {sym.dim} != parameter dimension {lat.dims[s]}"
            )
        vals = sym.lattice_values(lat, s)
        shape = [1] * len(lat.shape)
        for a in lat.param_axes(s):
            shape[a] = lat.n_axis[a]
        fh = fh * vals.reshape(shape)
    return GridFunction(lat, np.fft.ifftn(fh, norm="ortho"))


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def symbol_to_dict(sym: MultiplierSymbol, samples: bool = True,
                   sample_count: int | None = None) -> dict:
    out = {"d": sym.dim, "kind": sym.kind, "params": sym.params}
    if samples:
        dirs, vals = sym.sphere_samples(sample_count)
        out["sphere_samples"] = [
            {"dir": list(map(float, di)), "re": float(v.real), "im": float(v.imag)}
            for di, v in zip(dirs, vals)
        ]
    return out


def symbol_from_dict(data: dict) -> MultiplierSymbol:
    d, kind, params = int(data["d"]), data["kind"], data.get("params", {})
    if kind == "constant":
        return constant_symbol(d, complex(params["re"], params["im"]))
    if kind == "riesz":
        return riesz_symbol(d, params["axis"])
    if kind == "half_space":
        return half_space_symbol(params["direction"])
    if kind == "cone":
        return cone_projection_symbol(Cone(tuple(params["direction"]), params["side"]))
    if kind == "smoothed_cone":
        return smoothed_cone_symbol(
            Cone(tuple(params["direction"]), params["side"]), params["tau"], params["order"]
        )
    if kind == "conjugate":
        return conjugate_symbol(symbol_from_dict(params["base"]))
    if kind == "rotated":
        return rotate_symbol(
            symbol_from_dict(params["base"]), np.array(params["matrix"]),
            method=params.get("method", "auto"),
        )
    if kind == "polynomial":
        members = [symbol_from_dict(m) for m in params["members"]]
        monomials = [
            (tuple(mo["exponents"]), complex(mo["re"], mo["im"]))
            for mo in params["monomials"]
        ]
        return polynomial_symbol(d, members, monomials)
    # generic fallback: reconstruct from the stored samples
    samples = data.get("sphere_samples")
    if not samples:
        raise StructureError(f"cannot reconstruct kind {kind!r} without samples")
    dirs = np.array([s["dir"] for s in samples])
    vals = np.array([complex(s["re"], s["im"]) for s in samples])
    rule = _interp_rule_from_samples(dirs, vals, d)
    return MultiplierSymbol(d, "sampled", rule, zero_value=0.0,
                            params={"source_kind": kind})
