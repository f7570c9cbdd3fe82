"""Iterated commutators [T_1,[...,[T_t, M_b]...]], their expanded form, the
unwound bilinear form, operator-norm estimation, and randomized cone selection.

Operators acting in distinct parameters commute, so the commutator expands
into 2^t signed terms (prod_{s not in S} T_s)(b . (prod_{s in S} T_s) f); the
recursive and expanded evaluations cross-check each other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .lattice import GridFunction, StructureError, lp_norm
from .multipliers import (
    Cone,
    ConePair,
    apply_multiplier,
    cone_projection_symbol,
    conjugate_symbol,
    half_space_symbol,
    random_rotation,
    smoothed_cone_symbol,
)

__all__ = [
    "OperatorChoice",
    "ConeSelection",
    "OperatorNormResult",
    "SupNormResult",
    "iterated_commutator_apply",
    "expanded_commutator_apply",
    "commutator_terms",
    "pi_form",
    "commutator_adjoint_apply",
    "operator_norm",
    "sup_commutator_norm",
    "select_cones",
]


@dataclass(frozen=True)
class OperatorChoice:
    """One multiplier per parameter (None = identity in that slot)."""

    symbols: tuple

    def validate(self, lattice):
        if len(self.symbols) != lattice.t:
            raise StructureError(f"need {lattice.t} symbols, got {len(self.symbols)}")
        for s, sym in enumerate(self.symbols):
            if sym is not None and sym.dim != lattice.dims[s]:
                raise StructureError(
                    f"symbol dim {sym.dim} != parameter dim {lattice.dims[s]} at slot {s}"
                )


def _as_symbols(ops, lattice):
    if isinstance(ops, OperatorChoice):
        ops.validate(lattice)
        return ops.symbols
    ops = tuple(ops)
    OperatorChoice(ops).validate(lattice)
    return ops


def _subset_apply(symbols, subset, f):
    chosen = [sym if s in subset else None for s, sym in enumerate(symbols)]
    if all(c is None for c in chosen):
        return f
    return apply_multiplier(chosen, f)


def iterated_commutator_apply(b: GridFunction, f: GridFunction, ops) -> GridFunction:
    """Recursive evaluation of [T_1, [..., [T_t, M_b]...]] f."""
    b._require_same_lattice(f)
    symbols = _as_symbols(ops, f.lattice)
    t = f.lattice.t

    def rec(s, g):
        if s == t:
            return b * g
        inner = rec(s + 1, g)
        ts_g = _subset_apply(symbols, {s}, g)
        return _subset_apply(symbols, {s}, inner) - rec(s + 1, ts_g)

    return rec(0, f)


def commutator_terms(b: GridFunction, f: GridFunction, ops):
    """Signed terms of the expanded commutator, one per subset S of parameters."""
    b._require_same_lattice(f)
    symbols = _as_symbols(ops, f.lattice)
    t = f.lattice.t
    for r in range(t + 1):
        for subset in itertools.combinations(range(t), r):
            S = set(subset)
            inner = _subset_apply(symbols, S, f)
            outer = _subset_apply(symbols, set(range(t)) - S, b * inner)
            yield subset, ((-1) ** len(S)) * outer


def expanded_commutator_apply(b: GridFunction, f: GridFunction, ops) -> GridFunction:
    """Sum over subsets S of (-1)^{|S|} (prod_{s not in S} T_s)(b (prod_{s in S} T_s) f)."""
    out = GridFunction.zeros(f.lattice)
    for _, term in commutator_terms(b, f, ops):
        out = out + term
    return out


def pi_form(f: GridFunction, g: GridFunction, ops) -> GridFunction:
    """The bilinear form with <C(b,f), g> = <b, Pi(f,g)> for every b."""
    f._require_same_lattice(g)
    symbols = _as_symbols(ops, f.lattice)
    adj = [conjugate_symbol(m) if m is not None else None for m in symbols]
    t = f.lattice.t
    out = GridFunction.zeros(f.lattice)
    for r in range(t + 1):
        for subset in itertools.combinations(range(t), r):
            S = set(subset)
            tsf = _subset_apply(symbols, S, f)
            tg = _subset_apply(adj, set(range(t)) - S, g)
            out = out + ((-1) ** len(S)) * (tsf.conj() * tg)
    return out


def commutator_adjoint_apply(b: GridFunction, g: GridFunction, ops) -> GridFunction:
    """Adjoint of f -> C(b, f): sum_S (-1)^{|S|} T_S^* (conj(b) T_{S^c}^* g)."""
    b._require_same_lattice(g)
    symbols = _as_symbols(ops, g.lattice)
    adj = [conjugate_symbol(m) if m is not None else None for m in symbols]
    t = g.lattice.t
    out = GridFunction.zeros(g.lattice)
    for r in range(t + 1):
        for subset in itertools.combinations(range(t), r):
            S = set(subset)
            inner = _subset_apply(adj, set(range(t)) - S, g)
            term = _subset_apply(adj, S, b.conj() * inner)
            out = out + ((-1) ** len(S)) * term
    return out


@dataclass
class OperatorNormResult:
    value: float
    iterations: int
    converged: bool
    seed: object

    def __float__(self):
        return self.value


def operator_norm(b: GridFunction, ops, tol: float = 1e-10, max_iter: int = 500,
                  seed=0) -> OperatorNormResult:
    """Largest singular value of f -> C(b, f) by power iteration on C*C.

    Stops when the singular-value estimate changes by less than tol
    relatively; hitting max_iter returns the best value flagged unconverged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lattice = b.lattice
    symbols = _as_symbols(ops, lattice)
    rng = np.random.default_rng([seed] if np.isscalar(seed) else list(seed))
    v = rng.standard_normal(lattice.shape) + 1j * rng.standard_normal(lattice.shape)
    v = GridFunction(lattice, v * (1.0 / lp_norm(GridFunction(lattice, v), 2)))
    sigma_prev = -1.0
    for it in range(1, max_iter + 1):
        cv = expanded_commutator_apply(b, v, symbols)
        sigma = lp_norm(cv, 2)
        if sigma < 1e-15:
            return OperatorNormResult(0.0, it, True, seed)
        if sigma_prev >= 0 and abs(sigma - sigma_prev) <= tol * sigma:
            return OperatorNormResult(sigma, it, True, seed)
        sigma_prev = sigma
        u = commutator_adjoint_apply(b, cv, symbols)
        nu = lp_norm(u, 2)
        if nu < 1e-30:
            return OperatorNormResult(sigma, it, True, seed)
        v = (1.0 / nu) * u
    return OperatorNormResult(sigma_prev, max_iter, False, seed)


@dataclass
class SupNormResult:
    value: float
    argmax: tuple
    per_choice: dict
    all_converged: bool


def sup_commutator_norm(b: GridFunction, families, tol: float = 1e-8,
                        seed=0, max_iter: int = 500) -> SupNormResult:
    """Max of operator_norm over all choice vectors from the per-parameter families."""
    pools = []
    for fam in families:
        members = getattr(fam, "members", fam)
        members = list(members)
        if not members:
            raise ValueError("every parameter needs a nonempty family")
        pools.append(members)
    best, best_idx = -1.0, None
    per_choice, all_conv = {}, True
    for idx in itertools.product(*[range(len(p)) for p in pools]):
        ops = tuple(pools[s][i] for s, i in enumerate(idx))
        res = operator_norm(b, ops, tol=tol, max_iter=max_iter, seed=[seed, *idx])
        per_choice[idx] = res
        all_conv &= res.converged
        if res.value > best:
            best, best_idx = res.value, idx
    return SupNormResult(best, best_idx, per_choice, all_conv)


# ---------------------------------------------------------------------------
# randomized cone selection
# ---------------------------------------------------------------------------

@dataclass
class ConeSelection:
    success: bool
    pairs: tuple            # ConePair per parameter (best attempt if failed)
    achieved: dict          # t_norm, hd_minus_td_l4, hc_minus_pc_l2, p_norm
    seed: object
    tries: int
    kappa: float
    signs: tuple
    diagnostics: dict = field(default_factory=dict)


def _cone_quantities(beta: GridFunction, pairs, tau, smooth_order):
    """The three selection quantities plus the sharp-projection norm."""
    t_d = [smoothed_cone_symbol(p.inner, tau, smooth_order) for p in pairs]
    h_d = [half_space_symbol(np.array(p.inner.direction)) for p in pairs]
    h_c = [half_space_symbol(np.array(p.outer.direction)) for p in pairs]
    p_c = [cone_projection_symbol(p.outer) for p in pairs]
    p_d = [cone_projection_symbol(p.inner) for p in pairs]
    gamma = apply_multiplier(t_d, beta)
    t_norm = lp_norm(gamma, 2)
    q2 = lp_norm(apply_multiplier(h_d, beta) - gamma, 4)
    w = gamma * gamma.conj()
    q3 = lp_norm(apply_multiplier(h_c, w) - apply_multiplier(p_c, w), 2)
    p_norm = lp_norm(apply_multiplier(p_d, beta), 2)
    return {
        "t_norm": t_norm,
        "hd_minus_td_l4": q2,
        "hc_minus_pc_l2": q3,
        "p_norm": p_norm,
    }, gamma


def select_cones(beta: GridFunction, kappa: float, apertures, seed=0,
                 max_tries: int = 100, tau: float = 0.25, smooth_order: int = 2,
                 enlarge: float = 2.0) -> ConeSelection:
    """Sample rotated cone pairs until the selection conditions hold.

    Per try one rotation per parameter is drawn; both signs of each direction
    are tested before the try counts as failed.  Conditions: |T_D beta|_2 >=
    4^{-t}, |(H_D - T_D) beta|_4 <= kappa, |(H_C - P_C)|T_D beta|^2|_2 <=
    kappa, and D_s inside C_s.  Failure after max_tries returns a result
    (success=False) carrying the least-violating attempt.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    lattice = beta.lattice
    n2 = lp_norm(beta, 2)
    if abs(n2 - 1.0) > 1e-8:
        raise ValueError(f"beta must be L2-normalized (got {n2:.3e}); normalize first")
    if len(apertures) != lattice.t:
        raise StructureError("one aperture per parameter required")
    rng = np.random.default_rng([seed] if np.isscalar(seed) else list(seed))
    floor = 4.0 ** (-lattice.t)
    best = None
    for attempt in range(1, max_tries + 1):
        base_dirs = []
        for s in range(lattice.t):
            d = lattice.dims[s]
            rho = random_rotation(d, rng)
            e1 = np.zeros(d)
            e1[0] = 1.0
            base_dirs.append(rho @ e1)
        for signs in itertools.product((1.0, -1.0), repeat=lattice.t):
            pairs = []
            for s in range(lattice.t):
                direction = tuple(signs[s] * base_dirs[s])
                D = Cone(direction, apertures[s])
                C = Cone(direction, apertures[s] * enlarge)
                pairs.append(ConePair(D, C, tau=tau, smoothness=smooth_order))
            pairs = tuple(pairs)
            achieved, _ = _cone_quantities(beta, pairs, tau, smooth_order)
            violation = (
                max(0.0, floor - achieved["t_norm"])
                + max(0.0, achieved["hd_minus_td_l4"] - kappa)
                + max(0.0, achieved["hc_minus_pc_l2"] - kappa)
            )
            if violation == 0.0:
                return ConeSelection(True, pairs, achieved, seed, attempt, kappa, signs,
                                     {"tau": tau, "smooth_order": smooth_order,
                                      "enlarge": enlarge})
            if best is None or violation < best[0]:
                best = (violation, pairs, achieved, attempt, signs)
    violation, pairs, achieved, attempt, signs = best
    return ConeSelection(False, pairs, achieved, seed, max_tries, kappa, signs,
                         {"violation": violation, "best_attempt": attempt,
                          "tau": tau, "smooth_order": smooth_order, "enlarge": enlarge})


def recompute_selection(beta: GridFunction, selection: ConeSelection) -> dict:
    """Recompute the recorded quantities from (beta, pairs); must match stored values."""
    achieved, _ = _cone_quantities(
        beta, selection.pairs,
        selection.diagnostics.get("tau", 0.25),
        selection.diagnostics.get("smooth_order", 2),
    )
    return achieved
