"""Symbol families: the separation/derivative criterion, conjugation closure,
and constructive least-squares approximation of cone symbols by polynomials in
family members.

Density arguments only promise an approximant exists; here the fit is an
explicit weighted least squares with a degree cap, and the achieved errors are
always reported, never assumed small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .multipliers import (
    ConePair,
    MultiplierSymbol,
    antipode_index,
    conjugate_symbol,
    constant_symbol,
    polynomial_symbol,
    sample_mesh,
    smoothstep,
    sphere_directions,
)

__all__ = [
    "SymbolFamily",
    "CheckResult",
    "SymbolPolynomial",
    "ApproxResult",
    "SphereFunction",
    "check_point_separation",
    "check_antipodal_separation",
    "check_tangential_derivatives",
    "close_family",
    "build_h_CD",
    "approximate_symbol",
]


def _tangent_frames(dirs: np.ndarray) -> np.ndarray:
    """Orthonormal tangent bases, shape (M, d-1, d); deterministic."""
    M, d = dirs.shape
    if d == 1:
        return np.zeros((M, 0, 1))
    if d == 2:
        t = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
        return t[:, None, :]
    frames = np.empty((M, d - 1, d))
    for i, x in enumerate(dirs):
        a = np.zeros(d)
        a[2] = 1.0
        if abs(x[2]) > 0.9:
            a = np.zeros(d)
            a[0] = 1.0
        v1 = np.cross(x, a)
        v1 /= np.linalg.norm(v1)
        frames[i, 0] = v1
        frames[i, 1] = np.cross(x, v1)
    return frames


class SymbolFamily:
    """A finite family Theta_s of multiplier symbols for one parameter."""

    def __init__(self, dim: int, members, sample_count: int | None = None):
        self.dim = int(dim)
        for m in members:
            if m.dim != self.dim:
                raise ValueError(f"member dimension {m.dim} != family dimension {self.dim}")
        self.members = tuple(members)
        self.dirs = sphere_directions(self.dim, sample_count)
        self.antipode = antipode_index(len(self.dirs))
        self.tangents = _tangent_frames(self.dirs)
        self.mesh = sample_mesh(self.dirs)
        self._values = None

    @property
    def sample_count(self) -> int:
        return len(self.dirs)

    def member_values(self) -> np.ndarray:
        """(n_members, n_samples) complex values of every member."""
        if self._values is None:
            if self.members:
                self._values = np.stack([m.evaluate_dirs(self.dirs) for m in self.members])
            else:
                self._values = np.zeros((0, len(self.dirs)), dtype=np.complex128)
        return self._values

    def contains_values(self, vals: np.ndarray) -> bool:
        """Exact membership test on sample values."""
        return any(np.array_equal(vals, row) for row in self.member_values())


@dataclass
class CheckResult:
    passed: bool
    margin: float
    witness: tuple | None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"passed": self.passed, "margin": self.margin, "detail": self.detail}
        if self.witness is not None:
            out["witness"] = [np.asarray(w).tolist() for w in self.witness]
        return out


def check_point_separation(family: SymbolFamily, tol: float) -> CheckResult:
    """Some member must separate every pair of sphere samples by more than tol.

    On failure the witness is a maximally violating pair; among ties antipodal
    pairs are preferred, then lexicographic sample order.
    """
    dirs = family.dirs
    M = len(dirs)
    vals = family.member_values()
    if len(vals) == 0:
        return CheckResult(False, 0.0, (dirs[0], dirs[1]), {"reason": "empty family"})
    if all(np.allclose(v, v[0], rtol=0.0, atol=1e-15) for v in vals):
        return CheckResult(False, 0.0, (dirs[0], dirs[1]), {"reason": "all members constant"})
    sep = np.zeros((M, M))
    for row in vals:
        np.maximum(sep, np.abs(row[:, None] - row[None, :]), out=sep)
    np.fill_diagonal(sep, np.inf)
    min_sep = float(sep.min())
    if min_sep > tol:
        return CheckResult(True, min_sep, None)
    ii, jj = np.nonzero(sep <= min_sep + 1e-12)
    pairs = [(i, j) for i, j in zip(ii, jj) if i < j]
    anti = [(i, j) for i, j in pairs if family.antipode[i] == j]
    i, j = min(anti) if anti else min(pairs)
    return CheckResult(False, min_sep, (dirs[i], dirs[j]), {"antipodal": bool(anti)})


def check_antipodal_separation(family: SymbolFamily, tol: float) -> CheckResult:
    """sum_i |theta_i(x) - theta_i(-x)| must exceed tol at every sample."""
    dirs = family.dirs
    vals = family.member_values()
    if len(vals) == 0:
        return CheckResult(False, 0.0, (dirs[0],), {"reason": "empty family"})
    s = np.sum(np.abs(vals - vals[:, family.antipode]), axis=0)
    kmin = int(np.argmin(s))
    margin = float(s[kmin])
    if margin > tol:
        return CheckResult(True, margin, None)
    return CheckResult(False, margin, (dirs[kmin],))


def _displaced(dirs, tangents, step):
    """Geodesic displacements cos(h) x +- sin(h) v, shape (M, T, 2, d)."""
    c, s = math.cos(step), math.sin(step)
    xp = c * dirs[:, None, :] + s * tangents
    xm = c * dirs[:, None, :] - s * tangents
    out = np.stack([xp, xm], axis=2)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def check_tangential_derivatives(family: SymbolFamily, tol: float,
                                 step: float = 1e-4) -> CheckResult:
    """Some member's tangential derivative must exceed tol at every (sample, direction).

    Central finite differences along geodesics with the recorded step.
    """
    dirs, tangents = family.dirs, family.tangents
    M, T = tangents.shape[:2]
    if T == 0:
        return CheckResult(True, np.inf, None, {"reason": "no tangent directions in d=1"})
    if len(family.members) == 0:
        return CheckResult(False, 0.0, (dirs[0], tangents[0, 0]), {"reason": "empty family"})
    disp = _displaced(dirs, tangents, step).reshape(-1, family.dim)
    best = np.zeros((M, T))
    for m in family.members:
        v = m.evaluate_dirs(disp).reshape(M, T, 2)
        deriv = np.abs(v[:, :, 0] - v[:, :, 1]) / (2.0 * step)
        np.maximum(best, deriv, out=best)
    flat = int(np.argmin(best))
    i, t = divmod(flat, T)
    margin = float(best[i, t])
    if margin > tol:
        return CheckResult(True, margin, None, {"step": step})
    return CheckResult(False, margin, (dirs[i], tangents[i, t]), {"step": step})


def close_family(family: SymbolFamily) -> SymbolFamily:
    """F together with the constant 1 and all conjugates; idempotent."""
    members = list(family.members)
    vals = [row for row in family.member_values()]
    one = constant_symbol(family.dim, 1.0)
    one_vals = one.evaluate_dirs(family.dirs)
    if not any(np.array_equal(one_vals, v) for v in vals):
        members.insert(0, one)
        vals.insert(0, one_vals)
    for m, v in zip(list(family.members), family.member_values()):
        cv = np.conj(v)
        if not any(np.array_equal(cv, w) for w in vals):
            members.append(conjugate_symbol(m))
            vals.append(cv)
    out = SymbolFamily(family.dim, members, sample_count=None)
    # reuse the parent's sample geometry so membership tests stay bitwise
    out.dirs = family.dirs
    out.antipode = family.antipode
    out.tangents = family.tangents
    out.mesh = family.mesh
    out._values = np.stack(vals) if vals else None
    return out


# ---------------------------------------------------------------------------
# cone targets and approximation
# ---------------------------------------------------------------------------

class SphereFunction:
    """Scalar function on the sphere, evaluated through a rule like symbols are."""

    def __init__(self, dim, rule, name="sphere_function"):
        self.dim = dim
        self.rule = rule
        self.name = name

    def evaluate_dirs(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        squeeze = u.ndim == 1
        if squeeze:
            u = u[None, :]
        out = np.asarray(self.rule(u), dtype=np.complex128)
        return out[0] if squeeze else out


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def build_h_CD(pair: ConePair, smooth_order: int | None = None) -> SphereFunction:
    """Target function: 1 on the outer cone C, 0 on both opposing half spaces,
    smoothstep transition in angular distance in between.

    Containment D inside C is enforced by ConePair construction.
    """
    C, D = pair.outer, pair.inner
    d = C.dim
    order = smooth_order if smooth_order is not None else max(d, 1)
    xi_c = np.array(C.direction)
    xi_d = np.array(D.direction)

    if d == 1:
        def rule1(u):
            u = np.atleast_2d(u)
            return (u[:, 0] > 0).astype(np.complex128)
        return SphereFunction(1, rule1, "h_CD")

    if d == 2:
        alpha = math.atan(C.aperture_side / 2.0)
        phi_c = math.atan2(xi_c[1], xi_c[0])
        phi_d = math.atan2(xi_d[1], xi_d[0])

        def rule2(u):
            u = np.atleast_2d(u)
            phi = np.arctan2(u[:, 1], u[:, 0])
            in_c = C.membership(u)
            bad = ((u @ xi_c) < 0) | ((u @ xi_d) < 0)
            dc = np.maximum(0.0, np.abs(_wrap_angle(phi - phi_c)) - alpha)
            db_c = np.maximum(0.0, np.pi / 2.0 - np.abs(_wrap_angle(phi - phi_c)))
            db_d = np.maximum(0.0, np.pi / 2.0 - np.abs(_wrap_angle(phi - phi_d)))
            db = np.minimum(db_c, db_d)
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.where(db + dc > 0, db / (db + dc), 0.0)
            out = smoothstep(order, s).astype(np.complex128)
            out[in_c] = 1.0
            out[bad] = 0.0
            return out
        return SphereFunction(2, rule2, "h_CD")

    fine = sphere_directions(d, 4096)
    good = fine[C.membership(fine)]
    bad_set = fine[((fine @ xi_c) < 0) | ((fine @ xi_d) < 0)]

    def rule_nd(u):
        u = np.atleast_2d(u)
        in_c = C.membership(u)
        bad = ((u @ xi_c) < 0) | ((u @ xi_d) < 0)
        dc = np.arccos(np.clip((u @ good.T).max(axis=1), -1.0, 1.0))
        db = np.arccos(np.clip((u @ bad_set.T).max(axis=1), -1.0, 1.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(db + dc > 0, db / (db + dc), 0.0)
        out = smoothstep(order, s).astype(np.complex128)
        out[in_c] = 1.0
        out[bad] = 0.0
        return out
    return SphereFunction(d, rule_nd, "h_CD")


@dataclass
class SymbolPolynomial:
    """Polynomial in family members with its realized multiplier."""

    monomials: tuple          # ((exponents over family members), complex coefficient)
    degree: int
    realized: MultiplierSymbol


@dataclass
class ApproxResult:
    polynomial: SymbolPolynomial
    sup_error: float                  # max over orders of weight_k * raw sup error
    errors_by_order: dict             # raw sup errors, order -> float
    weights: dict                     # order -> weight used in norm and loss
    errors_by_degree: list            # best weighted error for each cap 0..degree
    degree: int
    rank_deficient: bool
    ridge: float
    mesh: float
    step: float


def _exponent_vectors(ngen: int, total: int):
    if ngen == 0:
        yield ()
        return
    for head in range(total + 1):
        for rest in _exponent_vectors(ngen - 1, total - head):
            yield (head,) + rest


def _dedupe_generators(family: SymbolFamily):
    """Indices of members that generate all monomials: drop constants and
    exact scalar multiples of earlier generators (lossless for the span)."""
    vals = family.member_values()
    keep = []
    for i, v in enumerate(vals):
        if np.allclose(v, v[0], rtol=0.0, atol=1e-15):
            continue  # constants are the empty monomial
        redundant = False
        for j in keep:
            w = vals[j]
            k0 = int(np.argmax(np.abs(w)))
            if abs(w[k0]) > 0:
                c = v[k0] / w[k0]
                if np.max(np.abs(v - c * w)) <= 1e-13 * max(1.0, np.max(np.abs(v))):
                    redundant = True
                    break
        if not redundant:
            keep.append(i)
    return keep


def approximate_symbol(family: SymbolFamily, target, degree: int, m: int = 1,
                       step: float = 1e-4, deriv_weight: float | None = None,
                       ridge: float | None = None) -> ApproxResult:
    """Weighted least-squares fit of target by a polynomial in family members.

    The loss sums squared value errors over the samples plus weighted squared
    finite-difference derivative errors up to order m (order k carries weight
    deriv_weight^k; default 1, the plain discrete C^m sup norm).  Raw
    per-order sup errors are reported unweighted in errors_by_order.  The fit
    for a degree cap optimizes over all caps up to it, so the achieved error
    is nonincreasing in degree.  No claim is made that the error is small; the
    caller compares against its own epsilon.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if m < 0 or m > 2:
        raise ValueError("derivative order m must be 0, 1, or 2")
    one_vals = np.ones(family.sample_count, dtype=np.complex128)
    if not family.contains_values(one_vals):
        raise ValueError("family must contain the constant 1; apply close_family first")
    for v in family.member_values():
        if not family.contains_values(np.conj(v)):
            raise ValueError("family must be closed under conjugation; apply close_family first")

    dirs, tangents = family.dirs, family.tangents
    M, T = len(dirs), tangents.shape[1]
    w1 = deriv_weight if deriv_weight is not None else 1.0
    weights = {k: w1 ** k for k in range(m + 1)}

    gen_idx = _dedupe_generators(family)
    gens = [family.members[i] for i in gen_idx]
    ngen = len(gens)
    n_monos_max = math.comb(degree + ngen, ngen) if ngen else 1
    if n_monos_max > 200_000:
        raise ValueError(f"monomial count {n_monos_max} too large; reduce degree")

    use_derivs = m >= 1 and T > 0
    if use_derivs:
        disp = _displaced(dirs, tangents, step).reshape(-1, family.dim)
        gen_disp = [g.evaluate_dirs(disp).reshape(M, T, 2) for g in gens]
        tgt_disp = target.evaluate_dirs(disp).reshape(M, T, 2)
    gen_vals = [g.evaluate_dirs(dirs) for g in gens]
    tgt_vals = target.evaluate_dirs(dirs)

    def monomial_columns(exps):
        col = np.ones(M, dtype=np.complex128)
        for g, a in zip(gen_vals, exps):
            if a:
                col = col * g ** a
        if not use_derivs:
            return col, None
        dcol = np.ones((M, T, 2), dtype=np.complex128)
        for g, a in zip(gen_disp, exps):
            if a:
                dcol = dcol * g ** a
        return col, dcol

    # target rows
    y_parts = [tgt_vals]
    if use_derivs:
        t_d1 = (tgt_disp[:, :, 0] - tgt_disp[:, :, 1]) / (2.0 * step)
        y_parts.append(weights[1] * t_d1.ravel())
        if m >= 2:
            t_d2 = (tgt_disp[:, :, 0] - 2.0 * tgt_vals[:, None] + tgt_disp[:, :, 1]) / step ** 2
            y_parts.append(weights[2] * t_d2.ravel())
    y = np.concatenate(y_parts)

    by_degree = {0: [()] if ngen == 0 else [(0,) * ngen]}
    for dtot in range(1, degree + 1):
        by_degree[dtot] = [e for e in _exponent_vectors(ngen, dtot) if sum(e) == dtot] if ngen else []

    cols, col_exps = [], []
    best = None
    errors_by_degree = []
    for cap in range(degree + 1):
        for exps in by_degree.get(cap, []):
            col, dcol = monomial_columns(exps)
            parts = [col]
            if use_derivs:
                c_d1 = (dcol[:, :, 0] - dcol[:, :, 1]) / (2.0 * step)
                parts.append(weights[1] * c_d1.ravel())
                if m >= 2:
                    c_d2 = (dcol[:, :, 0] - 2.0 * col[:, None] + dcol[:, :, 1]) / step ** 2
                    parts.append(weights[2] * c_d2.ravel())
            cols.append(np.concatenate(parts))
            col_exps.append(exps)
        A = np.stack(cols, axis=1)
        coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        deficient = rank < A.shape[1]
        used_ridge = 0.0
        if deficient:
            used_ridge = ridge if ridge is not None else 1e-10
            gram = A.conj().T @ A
            coef = np.linalg.solve(gram + used_ridge * np.eye(A.shape[1]), A.conj().T @ y)
        resid = A @ coef - y
        e0 = float(np.max(np.abs(resid[:M])))
        errs = {0: e0}
        wsup = e0
        off = M
        for k in range(1, m + 1):
            if not use_derivs:
                break
            block = resid[off: off + M * T]
            raw = float(np.max(np.abs(block))) / weights[k]
            errs[k] = raw
            wsup = max(wsup, float(np.max(np.abs(block))))
            off += M * T
        if best is None or wsup < best["wsup"]:
            best = {"wsup": wsup, "errs": errs, "coef": coef.copy(),
                    "exps": list(col_exps), "cap": cap,
                    "deficient": deficient, "ridge": used_ridge}
        errors_by_degree.append(best["wsup"])

    nm = len(family.members)
    monos = []
    for exps, c in zip(best["exps"], best["coef"]):
        full = [0] * nm
        for gi, a in zip(gen_idx, exps):
            full[gi] = a
        monos.append((tuple(full), complex(c)))
    realized = polynomial_symbol(family.dim, family.members, monos)
    poly = SymbolPolynomial(tuple(monos), best["cap"], realized)
    return ApproxResult(
        polynomial=poly,
        sup_error=best["wsup"],
        errors_by_order=best["errs"],
        weights=weights,
        errors_by_degree=errors_by_degree,
        degree=best["cap"],
        rank_deficient=best["deficient"],
        ridge=best["ridge"],
        mesh=family.mesh,
        step=step,
    )
