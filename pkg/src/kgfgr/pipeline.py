"""Experiment orchestration: resonance -> normal form -> FGR -> mode ODE -> PDE.

Each stage writes its artifacts under ``<out>/<stage>/`` together with a
``summary.json``; later stages read their inputs back from disk, so any
stage can be rerun from the persisted output of its predecessor. Reports
carry no timestamps, which makes reruns with the same seed byte-identical.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import fgr, io, kgsim, modedyn, normalform, resonance
from .resonance import ContractError, FrequencySpec, ResonancePair

STAGES = ("resonance", "normalform", "fgr", "ode", "kg")
ACCUMULATOR_FACTOR = 10.0

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_BOUND = 3


class StageFailure(Exception):
    """A stage stopped the pipeline; ``code`` is the process exit status."""

    def __init__(self, stage, code, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
        self.code = code


def classify(exc):
    """Exit status for an exception raised inside a stage."""
    if isinstance(exc, (ValueError, KeyError, TypeError, FileNotFoundError)):
        return EXIT_VALIDATION
    if isinstance(exc, (ArithmeticError, RuntimeError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    raise exc


# -- configuration -----------------------------------------------------------

def preset_names():
    root = resources.files("kgfgr") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def preset_path(name):
    path = resources.files("kgfgr") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(path))


@dataclass
class ExperimentConfig:
    """One experiment: a source of frequencies and the stages to run.

    Exactly one of ``freq`` and ``potential`` is set; with a potential the
    frequencies come from the discretized operator.
    """

    name: str = "experiment"
    freq: FrequencySpec = None
    potential: dict = None
    max_order: int = None
    coefficient_model: str = "ones"
    coefficient_overrides: list = field(default_factory=list)
    eps: tuple = (0.1,)
    stages: tuple = STAGES[:4]
    seed: int = 0
    ode: dict = field(default_factory=dict)
    normalform: dict = field(default_factory=dict)
    fgr: dict = field(default_factory=dict)
    kg: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.freq is None) == (self.potential is None):
            raise ValueError("give exactly one of [frequency] and [potential]")
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stages {unknown}; choose from {list(STAGES)}")
        self.stages = tuple(s for s in STAGES if s in self.stages)
        if "kg" in self.stages and self.potential is None:
            raise ValueError("the kg stage needs a [potential] source")
        self.eps = tuple(float(e) for e in self.eps)
        if not self.eps or any(not (0 < e < 1) for e in self.eps):
            raise ValueError("eps values must lie in (0, 1)")
        if self.coefficient_model not in ("ones", "random"):
            raise ValueError(f"unknown coefficient model {self.coefficient_model!r}")

    @classmethod
    def from_mapping(cls, data):
        data = dict(data)
        known = {"name", "seed", "stages", "eps", "frequency", "potential", "resonance",
                 "coefficients", "ode", "normalform", "fgr", "kg"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        freq = io.freq_from_mapping(data["frequency"]) if "frequency" in data else None
        coeffs = data.get("coefficients", {})
        overrides = []
        for item in coeffs.get("overrides", []):
            pair = ResonancePair(item["lambda"], item["rho"])
            value = float(item["value"])
            if not value > 0:
                raise ValueError("coefficient overrides must be positive")
            overrides.append((pair, value))
        return cls(
            name=data.get("name", "experiment"),
            freq=freq,
            potential=data.get("potential"),
            max_order=data.get("resonance", {}).get("max_order"),
            coefficient_model=coeffs.get("model", "ones"),
            coefficient_overrides=overrides,
            eps=tuple(data.get("eps", (0.1,))),
            stages=tuple(data.get("stages", STAGES[:4])),
            seed=int(data.get("seed", 0)),
            ode=dict(data.get("ode", {})),
            normalform=dict(data.get("normalform", {})),
            fgr=dict(data.get("fgr", {})),
            kg=dict(data.get("kg", {})),
        )

    @classmethod
    def load(cls, path):
        return cls.from_mapping(io.load_toml(path))

    def kg_config(self):
        pot = dict(self.potential or {})
        flat = dict(self.kg)
        for key in ("L", "M", "m", "boundary"):
            if key in pot:
                flat.setdefault(key, pot.pop(key))
        flat["potential"] = pot
        return kgsim.KGConfig.from_mapping(flat)

    def plan(self):
        src = (f"frequency m={self.freq.m} omegas={list(self.freq.omegas)}" if self.freq
               else f"potential {self.potential}")
        lines = [f"experiment: {self.name}", f"source: {src}", f"seed: {self.seed}",
                 f"eps: {list(self.eps)}", "stages:"]
        lines += [f"  {i + 1}. {s}" for i, s in enumerate(self.stages)]
        return "\n".join(lines) + "\n"


def load_config(source):
    """A config from a TOML path or a preset name."""
    path = Path(source)
    if path.suffix != ".toml" and not path.exists():
        path = preset_path(str(source))
    return ExperimentConfig.load(path)


# -- helpers -----------------------------------------------------------------

def _write_json(path, data):
    io.atomic_write(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _pair_text(p):
    return f"{list(p.lam)};{list(p.rho)}"


def resolve_coefficients(star, model="ones", seed=0, overrides=()):
    """``c_{lam rho}`` aligned with ``star``: a model plus explicit overrides."""
    if model == "ones":
        c = np.ones(len(star))
    elif model == "random":
        c = np.random.default_rng(seed).uniform(0.5, 2.0, len(star))
    else:
        raise ValueError(f"unknown coefficient model {model!r}")
    index = {p: i for i, p in enumerate(star)}
    for pair, value in overrides:
        if pair not in index:
            raise ValueError(f"override {pair} is not in the minimal set")
        c[index[pair]] = value
    return c


def pde_frequencies(config):
    kc = config.kg_config()
    grid = kgsim.Grid(kc.L, kc.M, kc.boundary)
    spec = kgsim.discretize(kgsim.poschl_teller(kc.V0, kc.a), grid, kc.m, kc.eig_tol)
    return spec


# -- stages ------------------------------------------------------------------

def stage_resonance(config, out):
    if config.freq is not None:
        freq = config.freq
    else:
        freq = pde_frequencies(config).frequency_spec()
    max_order = config.max_order or resonance.default_max_order(freq)
    report = resonance.check_assumptions(freq, max_order)
    if not report.ok:
        raise ValueError("assumption check failed: " + report.summary().replace("\n", "; "))
    full = resonance.enumerate_lambda(freq, max_order)
    star = resonance.minimal_set(full)
    structure = resonance.verify_lambda_star_structure(star, freq, max_order)
    ex = resonance.compute_exponents(freq, full)
    io.write_frequency(out / "frequency.toml", freq)
    io.atomic_write(out / "pairs.txt", io.format_pairs(full, freq, star))
    bad = [p for p in star if p.bad_modes()]
    return {
        "m": freq.m,
        "omegas": list(freq.omegas),
        "multiplicities": list(freq.multiplicities),
        "max_order": max_order,
        "assumptions": report.summary(),
        "N": list(ex.N),
        "alpha": list(ex.alpha),
        "kappa": ex.kappa,
        "j0": ex.j0,
        "lambda_size": len(full),
        "lambda_star": [_pair_text(p) for p in star],
        "bad_resonances": [_pair_text(p) for p in bad],
        "structure_ok": structure.ok,
        "structure_violations": [str(v) for v in structure.lemma_violations],
    }


def _load_resonance(out_root):
    d = out_root / "resonance"
    freq = io.read_frequency(d / "frequency.toml")
    full, star = io.read_pairs(d / "pairs.txt")
    return freq, full, star


def stage_normalform(config, out):
    freq, _, _ = _load_resonance(out.parent)
    steps = int(config.normalform.get("steps", 2))
    H = normalform.stock_quartic(freq)
    io.write_polynomial(out / "hamiltonian.txt", H, ["stock quartic Hamiltonian (Hermite overlaps)"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", normalform.SmallDivisorWarning)
        res = normalform.birkhoff(H, steps)
    small = sum(issubclass(w.category, normalform.SmallDivisorWarning) for w in caught)
    io.write_polynomial(out / "z0.txt", res.Z0, [f"normal form after {steps} steps"])
    io.write_polynomial(out / "remainder.txt", res.remainder, [f"remainder after {steps} steps"])
    pseudo = normalform.check_pseudo_1d(res.Z0, freq)
    low = res.remainder.min_degree()
    return {
        "steps": steps,
        "max_degree": res.max_degree,
        "z0_terms": len(res.Z0),
        "remainder_terms": len(res.remainder),
        "remainder_min_degree": None if math.isinf(low) else int(low),
        "expected_min_degree": 2 * steps + 4,
        "real": bool(res.Z0.is_real() and res.remainder.is_real()),
        "pseudo_1d": pseudo.ok,
        "small_divisor_warnings": int(small),
    }


def _pde_couplings(spec, freq, basis):
    """``sqrt(h) P_c prod_a phi_a^(mu_a + nu_a)`` on the grid."""
    phi = spec.bound_states[:, ::-1]  # slots run from the largest frequency down
    h = spec.grid.h
    P = np.eye(spec.grid.M) - h * spec.bound_states @ spec.bound_states.T
    out = {}
    for mu, nu in basis:
        e = np.add(mu, nu)
        prod = np.prod(phi ** e[None, :], axis=1)
        out[(mu, nu)] = math.sqrt(h) * (P @ prod)
    return out


def stage_fgr(config, out):
    freq, _, star = _load_resonance(out.parent)
    opts = config.fgr
    energies = [p.dot(freq) for p in star]
    spec = None
    if config.potential is not None:
        spec = pde_frequencies(config)
        op = spec.continuum_operator()
    else:
        op = fgr.synthetic_operator(int(opts.get("dim", 200)), freq.m,
                                    float(opts.get("e_max", max(energies) + 2.0)), config.seed)
    width = opts.get("width")
    kernel = opts.get("kernel", "gaussian")
    rows = []
    for i, p in enumerate(star):
        basis = fgr.m_basis(p, freq)
        if spec is not None:
            couplings = _pde_couplings(spec, freq, basis)
        else:
            couplings = fgr.synthetic_couplings(basis, op, center=energies[i],
                                                seed=config.seed + 1000 + i)
        mats = fgr.build_matrices(p, couplings, op, width=width, freq=freq, kernel=kernel)
        verdict = fgr.check_fgr(mats.T_im)
        io.atomic_write(out / f"pair_{i:02d}.txt", io.format_matrices(mats, p, verdict))
        herm = max(float(np.max(np.abs(mats.T_re - mats.T_re.conj().T))),
                   float(np.max(np.abs(mats.T_im - mats.T_im.conj().T))))
        rows.append({"pair": _pair_text(p), "dim": len(basis), "shell_energy": mats.shell_energy,
                     "width": mats.width, "status": verdict.status,
                     "min_eigenvalue": verdict.min_eigenvalue, "hermitian_defect": herm})
    return {"source": "pde" if spec is not None else "synthetic", "kernel": kernel, "pairs": rows}


def ode_columns(traj, sys):
    n = sys.n
    ex = sys.exponents
    cols = {"t": traj.times}
    for name, M in (("X", traj.X), ("Xt", traj.X_tilde), ("Xh", traj.X_hat)):
        for j in range(n):
            cols[f"{name}_{j + 1}"] = M[:, j]
    cols["Y"] = modedyn.comparison_Y(traj.times, sys.eps, ex.N[-1])
    cols["W"] = modedyn.comparison_W(traj.times, sys.eps, ex.kappa)
    cols["accumulator"] = traj.accumulator
    return cols


def system_from_files(config, out_root, eps):
    freq, full, star = _load_resonance(out_root)
    c = resolve_coefficients(sorted(star), config.coefficient_model, config.seed,
                             config.coefficient_overrides)
    o = config.ode
    return modedyn.OdeSystem(freq, sorted(star), coefficients=c, lambda_full=full, eps=eps,
                             C0=float(o.get("C0", modedyn.C0_DEFAULT)),
                             p_amp=float(o.get("p_amp", 0.0)), r_amp=float(o.get("r_amp", 0.0)),
                             r_sign=float(o.get("r_sign", 1.0)))


def run_ode(sys, opts):
    """Integrate one system with the ``[ode]`` options; returns (traj, report, t_end)."""
    X0 = modedyn.default_initial(sys, opts.get("amplitudes"), opts.get("powers"))
    t_end = float(opts.get("t_end", 1e12))
    if opts.get("rescaled", True):
        t_end = modedyn.rescaled_horizon(sys, t_end)
    traj = modedyn.integrate(sys, X0, t_end, rel_tol=float(opts.get("rel_tol", 1e-8)))
    return traj, modedyn.verify_theorem_bounds(traj, sys), t_end


def stage_ode(config, out):
    runs = []
    for eps in config.eps:
        sys = system_from_files(config, out.parent, eps)
        traj, rep, t_end = run_ode(sys, config.ode)
        tag = f"eps_{eps:g}"
        io.write_csv(out / f"{tag}.csv", ode_columns(traj, sys))
        forced = sys.r_amp != 0.0
        runs.append({
            "eps": eps,
            "t_end": t_end,
            "X0": [float(v) for v in traj.X[0]],
            "fitted_exponents": rep.fitted_exponents,
            "bound_status": rep.status,
            "failed_checks": [c.name for c in rep.checks if c.status == "fail"],
            "suspicious_checks": [c.name for c in rep.checks if c.status == "suspicious"],
            "hat_monotone": None if forced else rep.hat_monotone,
            "hat_nonnegative": rep.hat_nonnegative,
            "max_hat_increase": traj.stats["max_hat_increase"],
            "x_increase_steps": traj.stats["x_increase_steps"],
            "accepted_steps": traj.stats["accepted"],
            "accumulator": rep.accumulator,
            "accumulator_over_eps": rep.accumulator / eps,
            "accumulator_ok": rep.accumulator <= ACCUMULATOR_FACTOR * eps,
        })
    return {"coefficient_model": config.coefficient_model,
            "overrides": [[_pair_text(p), v] for p, v in config.coefficient_overrides],
            "p_amp": float(config.ode.get("p_amp", 0.0)),
            "r_amp": float(config.ode.get("r_amp", 0.0)), "runs": runs}


def stage_kg(config, out):
    kc = config.kg_config()
    res = kgsim.run_experiment(kc)
    io.write_csv(out / "timeseries.csv", res.columns())
    levels = kgsim.poschl_teller_levels(kc.V0, kc.a)
    found = res.spec.bound_energies
    k = min(len(levels), len(found))
    err = float(np.max(np.abs(np.sort(found)[:k] - np.sort(levels)[:k]))) if k else 0.0
    xi0 = res.xi_abs[0]
    ratio = [float(v) for v in np.where(xi0 > 0, res.xi_abs[-1] / np.where(xi0 > 0, xi0, 1), np.nan)]
    return {
        "n_bound": int(res.spec.n_bound),
        "bound_omegas": [float(w) for w in res.spec.bound_omegas],
        "eigenvalue_error": err,
        "t_end": float(res.times[-1]),
        "dt": res.dt,
        "scheme": kc.scheme,
        "xi_ratio_end": ratio,
        "energy_drift": res.energy_drift(),
        "t_absorb": res.t_absorb if math.isfinite(res.t_absorb) else None,
        "continuum_sup_max": float(np.max(res.continuum_sup)),
    }


STAGE_FUNCS = {"resonance": stage_resonance, "normalform": stage_normalform, "fgr": stage_fgr,
               "ode": stage_ode, "kg": stage_kg}


@dataclass
class PipelineResult:
    status: int
    out: Path
    summaries: dict
    message: str = ""


def run_pipeline(config, out, strict=False, dry_run=False, stages=None):
    """Run the selected stages in dependency order.

    Returns a ``PipelineResult`` whose ``status`` is the exit code: 0, 1
    (validation), 2 (numerical failure) or 3 (a bound report failed and
    ``strict`` is set). ``dry_run`` returns the plan and writes nothing.
    """
    out = Path(out)
    selected = config.stages if stages is None else tuple(s for s in STAGES if s in stages)
    if dry_run:
        return PipelineResult(EXIT_OK, out, {}, config.plan())
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "plan.json", {"name": config.name, "stages": list(selected), "seed": config.seed})
    summaries = {}
    for stage in selected:
        d = out / stage
        d.mkdir(exist_ok=True)
        try:
            summary = STAGE_FUNCS[stage](config, d)
        except Exception as exc:  # noqa: BLE001 - mapped to exit codes
            code = classify(exc)
            return PipelineResult(code, out, summaries, str(StageFailure(stage, code, exc)))
        _write_json(d / "summary.json", summary)
        summaries[stage] = summary
    emit_report(out)
    status = EXIT_OK
    msg = "ok"
    if strict and "ode" in summaries:
        failed = [r["eps"] for r in summaries["ode"]["runs"] if r["bound_status"] == "fail"]
        if failed:
            status, msg = EXIT_BOUND, f"bound report failed for eps={failed}"
    return PipelineResult(status, out, summaries, msg)


# -- report ------------------------------------------------------------------

class MissingArtifacts(ValueError):
    def __init__(self, missing):
        super().__init__("missing artifacts for stages: " + ", ".join(missing))
        self.missing = missing


def _yes(flag):
    return "n/a" if flag is None else ("yes" if flag else "no")


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def emit_report(out):
    """Write ``<out>/report.txt`` from the stage summaries and return its text."""
    out = Path(out)
    plan_file = out / "plan.json"
    stages = _read_json(plan_file)["stages"] if plan_file.is_file() else list(STAGES)
    missing = [s for s in stages if not (out / s / "summary.json").is_file()]
    if missing or not plan_file.is_file():
        raise MissingArtifacts(missing or list(STAGES))
    S = {s: _read_json(out / s / "summary.json") for s in stages}
    plan = _read_json(plan_file)
    L = [f"experiment: {plan['name']}", f"seed: {plan['seed']}", ""]
    if "resonance" in S:
        r = S["resonance"]
        L += ["[resonance]",
              f"frequencies: m={r['m']:.17g} omegas={r['omegas']} multiplicities={r['multiplicities']}",
              f"truncation order: {r['max_order']}",
              "assumptions: " + r["assumptions"].replace("\n", "; "),
              f"resonance orders N: {r['N']}",
              f"decay exponents alpha: {r['alpha']}  kappa: {r['kappa']}  j0: {r['j0']}",
              f"|Lambda| = {r['lambda_size']}, minimal set ({len(r['lambda_star'])}):"]
        L += [f"  {p}" for p in r["lambda_star"]]
        L += [f"bad resonances: {r['bad_resonances'] or 'none'}",
              f"minimal-set structure (|rho| <= 1, rho_j = 1 => lam_k = 0 for k >= j): "
              f"{_yes(r['structure_ok'])}", ""]
    if "normalform" in S:
        r = S["normalform"]
        L += ["[normalform]", f"Birkhoff steps: {r['steps']} (max degree {r['max_degree']})",
              f"remainder minimum degree: {r['remainder_min_degree']} "
              f"(expected {r['expected_min_degree']})",
              f"real coefficients preserved: {_yes(r['real'])}",
              f"mode actions commute with Z0: {_yes(r['pseudo_1d'])}",
              f"small-divisor warnings: {r['small_divisor_warnings']}", ""]
    if "fgr" in S:
        r = S["fgr"]
        L += ["[fgr]", f"continuum: {r['source']}, kernel {r['kernel']}"]
        L += [f"  {row['pair']}: dim {row['dim']}, E={_fmt(row['shell_energy'])}, {row['status']}, "
              f"min eig {_fmt(row['min_eigenvalue'])}" for row in r["pairs"]]
        L.append("")
    if "ode" in S:
        r = S["ode"]
        L += ["[ode]", f"coefficients: {r['coefficient_model']}, overrides {r['overrides'] or 'none'}",
              f"envelopes: P={r['p_amp']:g} R={r['r_amp']:g}"]
        for run in r["runs"]:
            slopes = ", ".join(f"{k} {_fmt(v)}" for k, v in run["fitted_exponents"].items())
            L += [f"eps = {run['eps']:g} (t_end = {run['t_end']:.6g})",
                  f"  fitted log-log slopes: {slopes}",
                  f"  decay bounds: {run['bound_status']}"
                  + (f" (failed: {run['failed_checks']})" if run["failed_checks"] else "")
                  + (f" (constant above {modedyn.SUSPICIOUS_CONSTANT:g}: {run['suspicious_checks']})"
                     if run["suspicious_checks"] else ""),
                  f"  X̂ monotone: {_yes(run['hat_monotone'])}",
                  f"  X̂ nonnegative: {_yes(run['hat_nonnegative'])}",
                  f"  steps with X_j increasing: {run['x_increase_steps']}",
                  f"  accumulator = {_fmt(run['accumulator_over_eps'])}·eps",
                  f"  accumulator ≤ Cε: {_yes(run['accumulator_ok'])} (C = {ACCUMULATOR_FACTOR:g})"]
        L.append("")
    if "kg" in S:
        r = S["kg"]
        L += ["[kg]", f"bound states: {r['n_bound']} omegas {[round(w, 6) for w in r['bound_omegas']]}",
              f"eigenvalue error vs analytic levels: {_fmt(r['eigenvalue_error'])}",
              f"|xi|(t_end)/|xi|(0): {[_fmt(v) for v in r['xi_ratio_end']]} at t = {r['t_end']:g}",
              f"energy drift before absorber: {_fmt(r['energy_drift'])}", ""]
    text = "\n".join(L)
    io.atomic_write(out / "report.txt", text)
    return text
