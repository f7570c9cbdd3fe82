"""Command line interface.

Exit codes: 0 success, 2 completed with flagged non-convergence, 1 structural
or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bmo import (
    bmo_minus_one,
    damped_projection,
    journe_enlarge,
    product_bmo_lower,
    rectangular_bmo,
)
from .commutator import sup_commutator_norm
from .experiments import (
    ExperimentConfig,
    equivalence_sweep,
    generate_corpus,
    sweep_to_csv,
    sweep_to_json,
    test_function_experiment,
)
from .families import (
    SymbolFamily,
    approximate_symbol,
    build_h_CD,
    check_antipodal_separation,
    check_point_separation,
    check_tangential_derivatives,
    close_family,
)
from .lattice import GridFunction, StructureError, lp_norm, read_czl1
from .multipliers import (
    Cone,
    ConePair,
    apply_multiplier,
    riesz_symbol,
    smoothed_cone_symbol,
    symbol_from_dict,
)
from .wavelets import haar_transform


def _flatten(prefix, value, rows):
    if isinstance(value, dict):
        for k in sorted(value, key=str):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, value))


def _write_output(data, out, fmt="json"):
    if isinstance(data, str):
        text = data
    elif fmt == "csv":
        rows = []
        _flatten("", data, rows)
        text = "key,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"
    else:
        text = json.dumps(data, sort_keys=True, indent=1)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text + ("\n" if not text.endswith("\n") else ""))


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_criterion_check(args) -> int:
    symbols = []
    for path in args.symbols:
        with open(path) as fh:
            symbols.append(symbol_from_dict(json.load(fh)))
    if not symbols:
        raise StructureError("at least one symbol file required")
    dim = symbols[0].dim
    fam = SymbolFamily(dim, symbols, sample_count=args.samples)
    checks = {
        "point_separation": check_point_separation(fam, args.tol).to_dict(),
        "antipodal_separation": check_antipodal_separation(fam, args.tol).to_dict(),
        "tangential_derivatives": check_tangential_derivatives(fam, args.tol).to_dict(),
    }
    checks["passed"] = all(c["passed"] for c in checks.values() if isinstance(c, dict))
    checks["tol"] = args.tol
    checks["samples"] = fam.sample_count
    _write_output(checks, args.out)
    return 0


def _cmd_bmo_estimate(args) -> int:
    f = read_czl1(args.input)
    coeffs = haar_transform(f)
    if args.norm == "rect":
        result = {"norm": "rect", "value": rectangular_bmo(coeffs)}
    elif args.norm == "minus1":
        res = bmo_minus_one(coeffs, budget=args.budget, seed=args.seed)
        result = {
            "norm": "minus1", "value": res.value, "coordinate": res.coordinate,
            "exact_inner": res.exact,
            "collection": [
                {"scales": list(r.scales), "positions": [list(p) for p in r.positions]}
                for r in res.collection.rectangles
            ],
        }
    else:
        res = product_bmo_lower(coeffs, budget=args.budget, seed=args.seed)
        result = {
            "norm": "product", "value": res.value,
            "collection": [
                {"scales": list(r.scales), "positions": [list(p) for p in r.positions]}
                for r in res.collection.rectangles
            ],
            "diagnostics": res.diagnostics,
        }
    _write_output(result, args.out)
    return 0


def _cmd_commutator_norm(args) -> int:
    b = read_czl1(args.b)
    families = []
    for group in args.family:
        members = []
        for path in group.split(","):
            with open(path) as fh:
                members.append(symbol_from_dict(json.load(fh)))
        families.append(members)
    res = sup_commutator_norm(b, families, tol=args.tol, seed=args.seed)
    out = {
        "sup": res.value,
        "argmax": list(res.argmax),
        "per_choice": {",".join(map(str, k)): v.value for k, v in sorted(res.per_choice.items())},
        "converged": bool(res.all_converged),
        "tol": args.tol,
        "seed": args.seed,
    }
    _write_output(out, args.out)
    return 0 if res.all_converged else 2


def _cmd_equivalence_sweep(args) -> int:
    cfg = _load_config(args)
    result = equivalence_sweep(cfg)
    text = sweep_to_csv(result) if args.format == "csv" else sweep_to_json(result)
    _write_output(text, args.out)
    return 2 if result.summary["n_flagged"] else 0


def _cmd_cone_approx(args) -> int:
    cfg = _load_config(args)
    d = cfg.dims[0]
    if d < 2:
        raise StructureError("cone approximation needs dimension >= 2")
    fam = close_family(SymbolFamily(d, [riesz_symbol(d, j) for j in range(1, d + 1)]))
    rng = np.random.default_rng([cfg.seed, 31])
    e1 = np.zeros(d)
    e1[0] = 1.0
    direction = tuple(e1)
    D = Cone(direction, cfg.apertures[0])
    C = Cone(direction, cfg.apertures[0] * cfg.cone_enlarge)
    pair = ConePair(D, C, tau=cfg.tau, smoothness=cfg.smooth_order)
    target = build_h_CD(pair)
    res = approximate_symbol(fam, target, degree=cfg.degree_cap, m=cfg.deriv_order)
    report = {
        "degree": int(res.degree),
        "sup_error": float(res.sup_error),
        "errors_by_order": {str(k): float(v) for k, v in res.errors_by_order.items()},
        "errors_by_degree": [float(e) for e in res.errors_by_degree],
        "rank_deficient": bool(res.rank_deficient),
        "ridge": float(res.ridge),
        "epsilon": cfg.epsilon,
        "meets_epsilon": bool(res.sup_error <= cfg.epsilon),
        "monomials": len(res.polynomial.monomials),
    }
    # Remark-style diagnostic: measured L^p -> L^p norms across apertures
    lattice = cfg.lattice()
    lp_report = {}
    for aperture in (1.0, 2.0, 4.0, 8.0):
        sym = smoothed_cone_symbol(Cone(direction, aperture), cfg.tau, cfg.smooth_order)
        ratios = []
        for trial in range(5):
            v = rng.standard_normal(lattice.shape) + 1j * rng.standard_normal(lattice.shape)
            f = GridFunction(lattice, v)
            g = apply_multiplier([sym] + [None] * (lattice.t - 1), f)
            ratios.append(lp_norm(g, 4) / lp_norm(f, 4))
        lp_report[str(aperture)] = max(ratios)
    report["l4_ratio_by_aperture"] = lp_report
    _write_output(report, args.out, args.format)
    return 0


def _cmd_journe(args) -> int:
    cfg = _load_config(args)
    lattice = cfg.lattice()
    corpus = generate_corpus(cfg)
    if not corpus:
        raise StructureError("corpus generation produced no symbols")
    b = corpus[0].grid
    coeffs = haar_transform(b)
    prod = product_bmo_lower(coeffs, budget=cfg.bmo_budget, seed=cfg.seed)
    U = prod.collection
    res = journe_enlarge(U, a=args.a)
    sh = U.shadow()
    report = {
        "a": args.a,
        "shadow_measure": float(sh.sum()) * lattice.cell_volume,
        "v_measure": res.measure(lattice),
        "threshold": res.threshold,
        "degenerate": res.degenerate,
        "embeddedness": {
            str(i): (e if e != float("inf") else "inf")
            for i, e in enumerate(res.E.values())
        },
        "invariants": {
            "contains_shadow": bool(np.all(res.V[sh])),
            "measure_bound": bool(res.V.sum() < (1 + args.a) * sh.sum()),
            "e_at_least_one": bool(all(e >= 1.0 for e in res.E.values())),
        },
    }
    if lattice.t >= 2:
        minus1 = bmo_minus_one(coeffs, budget=cfg.bmo_budget, seed=cfg.seed)
        ratios = {}
        for cexp in (1.0, 2.0, 4.0):
            damped = damped_projection(coeffs, U, res.E, cexp)
            dval = product_bmo_lower(damped, budget=cfg.bmo_budget, seed=cfg.seed).value
            ratios[str(cexp)] = dval / minus1.value if minus1.value > 0 else None
        report["damped_to_minus1_ratio"] = ratios
        report["minus1"] = minus1.value
    _write_output(report, args.out, args.format)
    return 0


def _cmd_test_function(args) -> int:
    cfg = _load_config(args)
    if args.input:
        b = read_czl1(args.input)
    else:
        corpus = generate_corpus(cfg)
        if not corpus:
            raise StructureError("corpus generation produced no symbols")
        b = corpus[0].grid
    report = test_function_experiment(b, cfg, beta_mode=args.beta_mode)
    _write_output(report, args.out, args.format)
    return 0 if "failure" not in report else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="czlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"czlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("criterion-check", help="separation/derivative criterion for symbol files")
    c.add_argument("symbols", nargs="+", help="symbol JSON files")
    c.add_argument("--tol", type=float, default=1e-3)
    c.add_argument("--samples", type=int, default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=_cmd_criterion_check)

    c = sub.add_parser("bmo-estimate", help="BMO estimators on a CZL1 grid file")
    c.add_argument("--input", required=True)
    c.add_argument("--norm", choices=["product", "rect", "minus1"], default="product")
    c.add_argument("--budget", type=int, default=8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)
    c.set_defaults(func=_cmd_bmo_estimate)

    c = sub.add_parser("commutator-norm", help="sup of iterated commutator norms")
    c.add_argument("--b", required=True, help="CZL1 grid file of the symbol function")
    c.add_argument("--family", action="append", required=True,
                   help="comma-separated symbol JSON files; repeat once per parameter")
    c.add_argument("--tol", type=float, default=1e-6)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)
    c.set_defaults(func=_cmd_commutator_norm)

    c = sub.add_parser("equivalence-sweep", help="two-sided norm equivalence sweep")
    c.add_argument("--config", default=None, help="key=value config file")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", default=None)
    c.add_argument("--format", choices=["json", "csv"], default="json")
    c.set_defaults(func=_cmd_equivalence_sweep)

    c = sub.add_parser("cone-approx", help="polynomial approximation of cone symbols")
    c.add_argument("--config", default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", default=None)
    c.add_argument("--format", choices=["json", "csv"], default="json")
    c.set_defaults(func=_cmd_cone_approx)

    c = sub.add_parser("journe", help="enlargement invariants and damped-projection ratios")
    c.add_argument("--config", default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--a", type=float, default=1.0)
    c.add_argument("--out", default=None)
    c.add_argument("--format", choices=["json", "csv"], default="json")
    c.set_defaults(func=_cmd_journe)

    c = sub.add_parser("test-function", help="cone test-function experiment")
    c.add_argument("--config", default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--input", default=None, help="CZL1 file; corpus symbol 0 if omitted")
    c.add_argument("--beta-mode", choices=["projection", "direct"], default="projection")
    c.add_argument("--out", default=None)
    c.add_argument("--format", choices=["json", "csv"], default="json")
    c.set_defaults(func=_cmd_test_function)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StructureError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
