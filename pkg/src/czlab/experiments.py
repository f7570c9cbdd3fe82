"""Reproducible experiment harness: corpus generation, the two-sided
norm-equivalence sweep, and the cone test-function experiment.

Everything downstream of a config is a deterministic function of its master
seed; summaries are recomputable from the per-record raw values.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bmo import bmo_minus_one, product_bmo_lower, rectangular_bmo
from .commutator import select_cones, sup_commutator_norm
from .lattice import GridFunction, ProductLattice, lp_norm
from .multipliers import (
    Cone,
    apply_multiplier,
    half_space_symbol,
    random_rotation,
    riesz_symbol,
    smoothed_cone_symbol,
)
from .wavelets import (
    WaveletCoefficients,
    all_rectangles,
    haar_inverse,
    haar_transform,
    project_onto_collection,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "CorpusSymbol",
    "SweepRecord",
    "SweepResult",
    "generate_corpus",
    "equivalence_sweep",
    "test_function_experiment",
    "sweep_to_json",
    "sweep_to_csv",
    "rectangles_in_shadow",
]


@dataclass
class ExperimentConfig:
    dims: tuple = (2, 2)
    n: int = 16
    family: str = "riesz"
    n_symbols: int = 30
    kappa: float = 0.5
    epsilon: float = 0.05
    tau: float = 0.25
    apertures: tuple | None = None
    cone_enlarge: float = 2.0
    smooth_order: int = 2
    degree_cap: int = 24
    deriv_order: int = 1
    bmo_budget: int = 4
    bmo_steps: int = 8
    norm_tol: float = 1e-4
    norm_max_iter: int = 100
    cone_directions: int = 2
    cone_max_tries: int = 40
    seed: int = 2024

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if self.apertures is None:
            self.apertures = tuple(4.0 for _ in self.dims)
        else:
            self.apertures = tuple(float(a) for a in self.apertures)

    def lattice(self) -> ProductLattice:
        return ProductLattice(self.dims, tuple(self.n for _ in range(sum(self.dims))))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        clean = {}
        fields = {f for f in cls.__dataclass_fields__}
        for key, raw in mapping.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            clean[key] = raw
        return cls(**clean)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """key=value text config; lists are comma-separated."""
        mapping = {}
        int_keys = {"n", "n_symbols", "smooth_order", "degree_cap", "deriv_order",
                    "bmo_budget", "bmo_steps", "norm_max_iter", "cone_directions",
                    "cone_max_tries", "seed"}
        float_keys = {"kappa", "epsilon", "tau", "cone_enlarge", "norm_tol"}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, val = line.partition("=")
                key, val = key.strip(), val.strip()
                if key == "dims":
                    mapping[key] = tuple(int(x) for x in val.split(","))
                elif key == "apertures":
                    mapping[key] = tuple(float(x) for x in val.split(","))
                elif key in int_keys:
                    mapping[key] = int(val)
                elif key in float_keys:
                    mapping[key] = float(val)
                else:
                    mapping[key] = val
        return cls.from_mapping(mapping)


@dataclass
class CorpusSymbol:
    name: str
    kind: str
    grid: GridFunction
    info: dict = field(default_factory=dict)


def _corpus_coeffs(kind, lattice, rng) -> WaveletCoefficients:
    c = WaveletCoefficients.zeros(lattice)
    bases = c.bases
    if kind == "wavelet":
        idx = []
        for b in bases:
            k = 1 if b.levels > 1 else 0
            pos = tuple(int(rng.integers(2 ** k)) for _ in range(b.d))
            ci = b.cube_index[(k, pos)]
            idx.append(1 + ci * b.nsig)
        c.array[tuple(idx)] = 1.0
    elif kind == "cluster":
        # coefficients concentrated under one anchor rectangle, a few scales deep
        anchors = []
        for b in bases:
            pos = tuple(int(rng.integers(2)) for _ in range(b.d))
            anchors.append((1, pos))
        for combo_idx in np.ndindex(*[b.ncubes for b in bases]):
            ok = True
            for s, b in enumerate(bases):
                k, pos = b.cubes[combo_idx[s]]
                ka, pa = anchors[s]
                if k < ka or any((p >> (k - ka)) != q for p, q in zip(pos, pa)):
                    ok = False
                    break
            if not ok:
                continue
            for s_off in np.ndindex(*[b.nsig for b in bases]):
                ix = tuple(1 + combo_idx[s] * bases[s].nsig + s_off[s]
                           for s in range(len(bases)))
                c.array[ix] = rng.standard_normal() + 1j * rng.standard_normal()
    elif kind == "mixing":
        # parameter-mixing spread: complementary scales, scattered positions,
        # the BMO_{-1}-small family
        levels = [b.levels for b in bases]
        for k in range(max(levels)):
            scales = [min(k, lv - 1) for lv in levels]
            scales[-1] = min(max(levels) - 1 - k, levels[-1] - 1)
            idx = []
            for s, b in enumerate(bases):
                kk = max(0, scales[s])
                pos = tuple(int(rng.integers(2 ** kk)) for _ in range(b.d))
                ci = b.cube_index[(kk, pos)]
                idx.append(1 + ci * b.nsig)
            c.array[tuple(idx)] += 1.0
    elif kind == "random":
        shape = c.array.shape
        arr = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        arr *= rng.random(shape) < 0.05
        sl = [slice(None)] * len(shape)
        for s in range(len(shape)):
            sl_s = list(sl)
            sl_s[s] = 0
            arr[tuple(sl_s)] = 0.0
        c = c.with_array(arr)
    else:
        raise ValueError(f"unknown corpus kind {kind!r}")
    return c


def generate_corpus(config: ExperimentConfig):
    """Random and structured symbols, rescaled so product_bmo_lower(b) = 1.

    The estimator is absolutely homogeneous, so dividing by the estimate makes
    the proxy exactly one; zero draws are skipped with a log line.
    """
    lattice = config.lattice()
    kinds = ["wavelet", "cluster", "mixing"] + ["random"] * max(0, config.n_symbols - 3)
    kinds = kinds[: config.n_symbols]
    out = []
    for i, kind in enumerate(kinds):
        rng = np.random.default_rng([config.seed, 17, i])
        coeffs = _corpus_coeffs(kind, lattice, rng)
        b = haar_inverse(coeffs)
        est = product_bmo_lower(haar_transform(b), budget=config.bmo_budget,
                                seed=config.seed + i, max_rects=config.bmo_steps)
        if est.value <= 0:
            logger.warning("corpus symbol %d (%s) is zero, skipped", i, kind)
            continue
        b = (1.0 / est.value) * b
        out.append(CorpusSymbol(f"b{i:03d}", kind, b, {"scale": 1.0 / est.value}))
    return out


def _riesz_families(config: ExperimentConfig):
    return [[riesz_symbol(d, j) for j in range(1, d + 1)] for d in config.dims]


def _criterion_precheck(config: ExperimentConfig, tol: float = 1e-3) -> dict:
    """Run the separation/derivative checks on the configured families,
    per parameter; failures only flag the sweep, they do not stop it."""
    from .families import (
        SymbolFamily,
        check_antipodal_separation,
        check_point_separation,
        check_tangential_derivatives,
        close_family,
    )

    out = {"passed": True, "per_parameter": []}
    for d in config.dims:
        if d == 1:
            out["per_parameter"].append({"dim": 1, "passed": True, "note": "Hilbert case"})
            continue
        fam = close_family(SymbolFamily(d, [riesz_symbol(d, j) for j in range(1, d + 1)]))
        checks = {
            "point_separation": check_point_separation(fam, tol).passed,
            "antipodal_separation": check_antipodal_separation(fam, tol).passed,
            "tangential_derivatives": check_tangential_derivatives(fam, tol).passed,
        }
        entry = {"dim": d, "passed": all(checks.values()), **checks}
        out["per_parameter"].append(entry)
        out["passed"] &= entry["passed"]
    return out


def _cone_families(config: ExperimentConfig):
    fams = []
    for s, d in enumerate(config.dims):
        members = []
        for j in range(config.cone_directions):
            if d == 1:
                direction = (1.0,) if j % 2 == 0 else (-1.0,)
            else:
                rng = np.random.default_rng([config.seed, 29, s, j])
                e1 = np.zeros(d)
                e1[0] = 1.0
                direction = tuple(random_rotation(d, rng) @ e1)
            D = Cone(direction, config.apertures[s])
            members.append(smoothed_cone_symbol(D, config.tau, config.smooth_order))
        fams.append(members)
    return fams


def rectangles_in_shadow(lattice: ProductLattice, shadow: np.ndarray):
    """All wavelet-bearing rectangles entirely inside the shadow."""
    out = []
    for r in all_rectangles(lattice):
        sl = r.axis_slices(lattice)
        if shadow[sl].all():
            out.append(r)
    return out


@dataclass
class SweepRecord:
    name: str
    kind: str
    proxies: dict
    families: dict          # family id -> {sup, argmax, per_choice, converged}
    selection: dict
    ratios: dict
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "proxies": self.proxies,
            "families": self.families,
            "selection": self.selection,
            "ratios": self.ratios,
            "flagged": self.flagged,
        }


@dataclass
class SweepResult:
    config: dict
    records: list
    summary: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "summary": self.summary,
        }


def _family_block(b, families, config, seed):
    res = sup_commutator_norm(
        b, families, tol=config.norm_tol, seed=seed, max_iter=config.norm_max_iter
    )
    return {
        "sup": res.value,
        "argmax": list(res.argmax),
        "per_choice": {
            ",".join(map(str, k)): v.value for k, v in sorted(res.per_choice.items())
        },
        "converged": bool(res.all_converged),
    }


def equivalence_sweep(config: ExperimentConfig) -> SweepResult:
    """Per corpus symbol: BMO proxies and sup commutator norms for the
    configured family and for fixed-aperture cone operators, plus ratios.

    The product-BMO proxy is a certified lower bound, so the reported
    c1, c2 bracket the measured two-sided comparison, not sharp constants.
    """
    lattice = config.lattice()
    corpus = generate_corpus(config)
    riesz_fams = _riesz_families(config)
    cone_fams = _cone_families(config)
    criterion = _criterion_precheck(config)
    if not criterion["passed"]:
        logger.warning("family criterion checks failed: %s; proceeding flagged", criterion)
    records = []
    for i, sym in enumerate(corpus):
        coeffs = haar_transform(sym.grid)
        minus1 = None
        extra = []
        if lattice.t >= 2:
            minus1 = bmo_minus_one(coeffs, budget=config.bmo_budget, seed=config.seed + i)
            extra.append(minus1.collection)
        prod = product_bmo_lower(coeffs, budget=config.bmo_budget,
                                 seed=config.seed + i, max_rects=config.bmo_steps,
                                 extra_collections=extra)
        proxies = {
            "product_lower": prod.value,
            "rectangular": rectangular_bmo(coeffs),
            "minus1": minus1.value if minus1 is not None else None,
        }
        fam_blocks = {
            "riesz": _family_block(sym.grid, riesz_fams, config, config.seed + 101 * i),
            "cone": _family_block(sym.grid, cone_fams, config, config.seed + 211 * i),
        }
        # cone selection on beta = P_U b, normalized
        sel_info = {"success": False, "reason": "empty projection"}
        rects = rectangles_in_shadow(lattice, prod.collection.shadow())
        beta = project_onto_collection(sym.grid, rects)
        bnorm = lp_norm(beta, 2)
        if bnorm > 0:
            beta = (1.0 / bnorm) * beta
            sel = select_cones(
                beta, config.kappa, config.apertures, seed=config.seed + 13 * i,
                max_tries=config.cone_max_tries, tau=config.tau,
                smooth_order=config.smooth_order, enlarge=config.cone_enlarge,
            )
            sel_info = {
                "success": bool(sel.success),
                "tries": sel.tries,
                "achieved": {k: float(v) for k, v in sorted(sel.achieved.items())},
            }
        ratios = {
            fam: blk["sup"] / proxies["product_lower"] for fam, blk in fam_blocks.items()
        }
        flagged = not all(blk["converged"] for blk in fam_blocks.values())
        records.append(SweepRecord(sym.name, sym.kind, proxies, fam_blocks,
                                   sel_info, ratios, flagged))
    summary = {}
    for fam in ("riesz", "cone"):
        vals = [r.ratios[fam] for r in records]
        if vals:
            c1, c2 = min(vals), max(vals)
            summary[fam] = {"c1": c1, "c2": c2,
                            "c2_over_c1": c2 / c1 if c1 > 0 else math.inf}
    summary["n_records"] = len(records)
    summary["n_flagged"] = sum(r.flagged for r in records)
    summary["positive_norms"] = all(
        r.families[fam]["sup"] > 0 for r in records for fam in ("riesz", "cone")
    )
    summary["criterion"] = criterion
    return SweepResult(config.to_dict(), records, summary)


def test_function_experiment(b: GridFunction, config: ExperimentConfig,
                             beta_mode: str = "projection") -> dict:
    """The cone test-function story for one symbol: beta = P_U b, gamma =
    T_D beta, the three-term split of T_C(beta gamma-bar), and the commutator
    applied to gamma-bar.

    beta = gamma + (H_D - T_D) beta + (I - H_D) beta exactly, so the three
    reported magnitudes decompose the main term; dominance of the first one is
    the observable the construction is after.  beta_mode "projection" takes
    beta = P_U b with U the achieving collection; "direct" takes beta = b
    normalized, for constructed symbols standing in for an already-projected
    beta whose shadow is comparable to the whole torus (the continuum
    construction renormalizes sh(U) to volume about 1, which a fixed lattice
    cannot do by dilation).
    """
    lattice = b.lattice
    coeffs = haar_transform(b)
    prod = product_bmo_lower(coeffs, budget=config.bmo_budget, seed=config.seed,
                             max_rects=config.bmo_steps)
    report = {"product_lower": prod.value, "beta_mode": beta_mode}
    if beta_mode == "direct":
        beta = b
    elif beta_mode == "projection":
        rects = rectangles_in_shadow(lattice, prod.collection.shadow())
        beta = project_onto_collection(b, rects)
    else:
        raise ValueError(f"unknown beta_mode {beta_mode!r}")
    bnorm = lp_norm(beta, 2)
    if bnorm == 0:
        report["failure"] = "projection is zero"
        return report
    beta = (1.0 / bnorm) * beta
    sel = select_cones(beta, config.kappa, config.apertures, seed=config.seed,
                       max_tries=config.cone_max_tries, tau=config.tau,
                       smooth_order=config.smooth_order, enlarge=config.cone_enlarge)
    report["selection"] = {
        "success": bool(sel.success),
        "tries": sel.tries,
        "achieved": {k: float(v) for k, v in sorted(sel.achieved.items())},
    }
    if not sel.success:
        report["failure"] = "cone selection failed"
        return report
    t_d = [smoothed_cone_symbol(p.inner, config.tau, config.smooth_order)
           for p in sel.pairs]
    t_c = [smoothed_cone_symbol(p.outer, config.tau, config.smooth_order)
           for p in sel.pairs]
    h_d = [half_space_symbol(np.array(p.inner.direction)) for p in sel.pairs]
    gamma = apply_multiplier(t_d, beta)
    gbar = gamma.conj()
    h_beta = apply_multiplier(h_d, beta)
    term1 = lp_norm(apply_multiplier(t_c, gamma * gbar), 2)
    term2 = lp_norm(apply_multiplier(t_c, (h_beta - gamma) * gbar), 2)
    term3 = lp_norm(apply_multiplier(t_c, (beta - h_beta) * gbar), 2)
    from .commutator import iterated_commutator_apply

    comm_beta = lp_norm(iterated_commutator_apply(beta, gbar, tuple(t_c)), 2)
    comm_b = lp_norm(iterated_commutator_apply(b, gbar, tuple(t_c)), 2)
    report.update({
        "gamma_l2": lp_norm(gamma, 2),
        "gamma_l4": lp_norm(gamma, 4),
        "term_main": term1,
        "term_hd_minus_td": term2,
        "term_complement": term3,
        "commutator_on_gbar_beta": comm_beta,
        "commutator_on_gbar_b": comm_b,
        "dominance": term1 / max(term2, term3, 1e-30),
    })
    return report


def sweep_to_json(result: SweepResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=1)


_CSV_COLUMNS = [
    "name", "kind", "product_lower", "rectangular", "minus1",
    "riesz_sup", "cone_sup", "ratio_riesz", "ratio_cone",
    "selection_success", "flagged",
]


def sweep_to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for r in result.records:
        writer.writerow([
            r.name, r.kind,
            repr(r.proxies["product_lower"]), repr(r.proxies["rectangular"]),
            repr(r.proxies["minus1"]) if r.proxies["minus1"] is not None else "",
            repr(r.families["riesz"]["sup"]), repr(r.families["cone"]["sup"]),
            repr(r.ratios["riesz"]), repr(r.ratios["cone"]),
            int(r.selection.get("success", False)), int(r.flagged),
        ])
    return buf.getvalue()
