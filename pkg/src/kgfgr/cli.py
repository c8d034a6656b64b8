"""Command-line front end.

Exit codes: 0 ok, 1 invalid input, 2 numerical failure, 3 a bound report
(or FGR verdict) failed under ``--strict``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import fgr, io, kgsim, modedyn, normalform, pipeline, resonance
from .pipeline import EXIT_BOUND, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION

log = logging.getLogger("kgfgr")


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(None), help="seed for randomized inputs")
    parser.add_argument("--out", default=d(None), help="output file or directory")
    parser.add_argument("--strict", action="store_true", default=d(False),
                        help="exit 3 when a bound report fails")
    parser.add_argument("--dry-run", action="store_true", default=d(False),
                        help="print the plan and write nothing")


def _emit(text, out, dry_run):
    if out and not dry_run:
        io.atomic_write(out, text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_resonance(args):
    freq = io.read_frequency(args.freq)
    K = args.max_order or resonance.default_max_order(freq)
    if args.dry_run:
        print(f"resonance: m={freq.m} omegas={list(freq.omegas)} max_order={K} -> {args.out or 'stdout'}")
        return EXIT_OK
    rep = resonance.check_assumptions(freq, K)
    lines = [f"m = {io.fmt(freq.m)}", f"omegas = {list(freq.omegas)}",
             f"multiplicities = {list(freq.multiplicities)}", f"max_order = {K}",
             "assumptions: " + rep.summary().replace("\n", "; ")]
    if not rep.ok:
        sys.stdout.write("\n".join(lines) + "\n")
        log.error("frequency set violates the non-resonance assumptions")
        return EXIT_VALIDATION
    full = resonance.enumerate_lambda(freq, K)
    star = resonance.minimal_set(full)
    st = resonance.verify_lambda_star_structure(star, freq, K)
    ex = resonance.compute_exponents(freq, full)
    lines += [f"N = {list(ex.N)}", f"alpha = {list(ex.alpha)}", f"kappa = {ex.kappa}",
              f"j0 = {ex.j0}", f"lambda_size = {len(full)}", f"lambda_star_size = {len(star)}",
              f"structure_ok = {int(st.ok)}", "pairs:"]
    text = "\n".join(lines) + "\n" + io.format_pairs(full, freq, star)
    _emit(text, args.out, False)
    if args.pairs:
        io.atomic_write(args.pairs, io.format_pairs(full, freq, star))
    return EXIT_OK


def cmd_normalform(args):
    if args.hamiltonian:
        H = io.read_polynomial(args.hamiltonian)
        freq = io.read_frequency(args.freq) if args.freq else None
    else:
        freq = io.read_frequency(args.freq) if args.freq else None
        H = normalform.stock_quartic(freq)
    if args.dry_run:
        print(f"normalform: {len(H)} terms, {args.steps} steps -> {args.out or 'stdout'}")
        return EXIT_OK
    res = normalform.birkhoff(H, args.steps, args.max_degree)
    low = res.remainder.min_degree()
    header = [f"steps = {args.steps}", f"max_degree = {res.max_degree}",
              f"remainder_min_degree = {low}", f"remainder_terms = {len(res.remainder)}"]
    if freq is not None:
        header.append(f"pseudo_1d = {int(normalform.check_pseudo_1d(res.Z0, freq).ok)}")
    _emit(io.format_polynomial(res.Z0, header), args.out, False)
    return EXIT_OK


def cmd_fgr(args):
    op = io.read_operator(args.operator)
    couplings = io.read_couplings(args.couplings)
    pair = io.parse_pair(args.pair)
    freq = io.read_frequency(args.freq) if args.freq else None
    if freq is None and args.energy is None:
        raise ValueError("pass --freq or --energy to fix the shell energy")
    if args.dry_run:
        print(f"fgr: pair {pair}, {len(couplings)} couplings, dim {op.dim} -> {args.out or 'stdout'}")
        return EXIT_OK
    mats = fgr.build_matrices(pair, couplings, op, width=args.width, freq=freq,
                              kernel=args.kernel, E=args.energy)
    verdict = fgr.check_fgr(mats.T_im)
    _emit(io.format_matrices(mats, pair, verdict), args.out, False)
    if args.strict and not verdict.definite:
        return EXIT_BOUND
    return EXIT_OK


def _ode_config(path):
    data = io.load_toml(path)
    data.pop("kg", None)
    data["stages"] = ["resonance", "ode"]
    return pipeline.ExperimentConfig.from_mapping(data)


def cmd_ode(args):
    cfg = _ode_config(args.system)
    if args.seed is not None:
        cfg.seed = args.seed
    freq = cfg.freq or pipeline.pde_frequencies(cfg).frequency_spec()
    K = cfg.max_order or resonance.default_max_order(freq)
    full = resonance.enumerate_lambda(freq, K)
    star = resonance.minimal_set(full)
    c = pipeline.resolve_coefficients(star, cfg.coefficient_model, cfg.seed, cfg.coefficient_overrides)
    o = dict(cfg.ode)
    if args.t_end is not None:
        o["t_end"] = args.t_end
    if args.rescaled is not None:
        o["rescaled"] = args.rescaled
    eps = args.eps if args.eps is not None else cfg.eps[0]
    sys_ = modedyn.OdeSystem(freq, star, coefficients=c, lambda_full=full, eps=eps,
                             C0=float(o.get("C0", modedyn.C0_DEFAULT)),
                             p_amp=float(o.get("p_amp", 0.0)), r_amp=float(o.get("r_amp", 0.0)),
                             r_sign=float(o.get("r_sign", 1.0)))
    if args.dry_run:
        print(f"ode: {len(star)} minimal pairs, eps={eps}, t_end={o.get('t_end', 1e12)} "
              f"(rescaled={o.get('rescaled', True)}) -> {args.out or 'stdout'}")
        return EXIT_OK
    traj, rep, t_end = pipeline.run_ode(sys_, o)
    csv_text = io.format_csv(pipeline.ode_columns(traj, sys_))
    lines = [f"eps = {eps:.17g}", f"t_end = {t_end:.17g}", f"status = {rep.status}"]
    lines += [f"slope {k} = {io.fmt(v)}" for k, v in rep.fitted_exponents.items()]
    lines += [f"check {c.name}: {c.status} (C={c.constant:.6g}, slope={c.slope:.4g})" for c in rep.checks]
    lines += [f"hat_monotone = {int(rep.hat_monotone)}",
              f"accumulator_over_eps = {io.fmt(rep.accumulator / eps)}"]
    report = "\n".join(lines) + "\n"
    if args.out:
        io.atomic_write(args.out, csv_text)
        io.atomic_write(Path(args.out).with_suffix(".bounds.txt"), report)
    else:
        sys.stdout.write(csv_text)
    sys.stderr.write(report)
    if args.strict and not rep.passed:
        return EXIT_BOUND
    return EXIT_OK


def cmd_kg(args):
    data = io.load_toml(args.config)
    if "kg" in data or "stages" in data:
        data.setdefault("stages", ["kg"])
        cfg = pipeline.ExperimentConfig.from_mapping(data).kg_config()
    else:
        cfg = kgsim.KGConfig.from_mapping(data)
    if args.dry_run:
        print(f"kg: L={cfg.L} M={cfg.M} m={cfg.m} t_end={cfg.t_end} -> {args.out or 'stdout'}")
        return EXIT_OK
    res = kgsim.run_experiment(cfg)
    _emit(io.format_csv(res.columns()), args.out, False)
    sys.stderr.write(f"energy drift before absorber: {res.energy_drift():.3g}\n")
    return EXIT_OK


def cmd_pipeline(args):
    cfg = pipeline.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or f"runs/{cfg.name}"
    res = pipeline.run_pipeline(cfg, out, strict=args.strict, dry_run=args.dry_run,
                                stages=args.stages.split(",") if args.stages else None)
    if args.dry_run:
        sys.stdout.write(res.message)
    elif res.status in (EXIT_VALIDATION, EXIT_NUMERICAL):
        log.error(res.message)
    else:
        sys.stdout.write((Path(out) / "report.txt").read_text(encoding="utf-8"))
        if res.status == EXIT_BOUND:
            log.error(res.message)
    return res.status


def cmd_report(args):
    target = args.dir or args.out
    if target is None:
        raise ValueError("pass the artifact directory")
    if args.dry_run:
        print(f"report: {target}/report.txt")
        return EXIT_OK
    try:
        text = pipeline.emit_report(target)
    except pipeline.MissingArtifacts as exc:
        log.error(str(exc))
        return EXIT_VALIDATION
    sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kgfgr", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("resonance", help="resonance sets, minimal elements and exponents")
    s.add_argument("--freq", required=True, help="frequency TOML (m, omegas, multiplicities)")
    s.add_argument("--max-order", type=int, default=None)
    s.add_argument("--pairs", default=None, help="also write the bare pair list here")
    s.set_defaults(func=cmd_resonance)

    s = sub.add_parser("normalform", help="Birkhoff normal form of a polynomial Hamiltonian")
    s.add_argument("--hamiltonian", default=None, help="polynomial file (default: stock quartic)")
    s.add_argument("--freq", default=None, help="frequency TOML for the stock quartic")
    s.add_argument("--steps", type=int, default=2)
    s.add_argument("--max-degree", type=int, default=None)
    s.set_defaults(func=cmd_normalform)

    s = sub.add_parser("fgr", help="Fermi Golden Rule matrices for one resonance pair")
    s.add_argument("--operator", required=True, help=".npz continuum operator")
    s.add_argument("--couplings", required=True, help=".npz couplings named 'mu=[..];nu=[..]'")
    s.add_argument("--pair", required=True, help="'lam;rho', e.g. '4,0;0,1'")
    s.add_argument("--width", type=float, default=None)
    s.add_argument("--kernel", choices=sorted(fgr.KERNELS), default="gaussian")
    s.add_argument("--freq", default=None)
    s.add_argument("--energy", type=float, default=None)
    s.set_defaults(func=cmd_fgr)

    s = sub.add_parser("ode", help="integrate the reduced mode system")
    s.add_argument("--system", required=True, help="experiment TOML (frequency, coefficients, ode)")
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--t-end", type=float, default=None)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--rescaled", dest="rescaled", action="store_true", default=None,
                   help="t_end is in units of eps^(-4 N_n)")
    g.add_argument("--physical", dest="rescaled", action="store_false")
    s.set_defaults(func=cmd_ode)

    s = sub.add_parser("kg", help="1D cubic Klein-Gordon simulation")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_kg)

    s = sub.add_parser("pipeline", help="run an experiment end to end")
    s.add_argument("--config", required=True, help=f"TOML file or preset ({', '.join(pipeline.preset_names())})")
    s.add_argument("--stages", default=None, help="comma-separated subset of stages")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("report", help="rebuild report.txt from pipeline artifacts")
    s.add_argument("dir", nargs="?", default=None)
    s.set_defaults(func=cmd_report)

    for name, sp in sub.choices.items():
        _global_flags(sp, suppress=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (ArithmeticError, RuntimeError, FloatingPointError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
