"""Command-line driver: validate a system, run an experiment, write CSV and JSON artifacts.

    nilmix check|mixing|multimix|equid|unstable|clt|donsker|coboundary|diophantine
           --config FILE [--seed N] [--workers K] [--out DIR]

Exit codes: 0 success, 1 validation failure (including a failed ergodicity
gate), 2 runtime error.
"""

from __future__ import annotations

import argparse
import io
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, data_path, increasing, load_config
from .equidistribution import (
    BoxMap,
    UnstableChart,
    box_rate_experiment,
    dichotomy_probe,
    unstable_rate_experiment,
)
from .errors import ConfigError, NilmixError, NotErgodic, ValidationError
from .observables import Character, centered, observable_from_config
from .report import _fmt, _jsonable, dumps
from .spectral import (
    diophantine_constant,
    generic_direction,
    is_ergodic,
    jordan_split,
    rational_hull,
    root_of_unity_probe,
)
from .stochastics import (
    OrbitEngine,
    character_product_integral,
    clt_experiment,
    coboundary_make,
    coboundary_solve,
    coboundary_test,
    donsker_paths,
    green_kubo,
    haar_mean,
    mixing_experiment,
    multimix_experiment,
)

COMMANDS = ("check", "mixing", "multimix", "equid", "unstable", "clt", "donsker", "coboundary", "diophantine")
GATED = ("mixing", "multimix", "unstable", "clt", "donsker", "coboundary")


# -- helpers ---------------------------------------------------------------------------

def _vector(values, size: int, where: str) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != (size,):
        raise ConfigError(f"{where}: expected a vector of length {size}")
    return v


def _schedule(sec: dict, key: str, default, where: str) -> list:
    vals = sec.get(key, default)
    if isinstance(vals, dict):
        # {"start": a, "stop": b} (inclusive) or {"base": 2, "exponents": [..]}
        if "base" in vals:
            vals = [vals["base"] ** e for e in vals["exponents"]]
        else:
            vals = list(range(int(vals["start"]), int(vals["stop"]) + 1, int(vals.get("step", 1))))
    return increasing(vals, f"{where}.{key}")


def _engine(cfg: ExperimentConfig, sec: dict) -> OrbitEngine:
    if cfg.automorphism is None:
        raise ConfigError(f"{cfg.path}: this command needs an automorphism")
    return OrbitEngine(cfg.automorphism, horizon=int(sec.get("horizon", 2 ** 13)))


def _observable(cfg: ExperimentConfig, spec, rng, where: str):
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: observable must be an object with a 'kind'")
    try:
        return observable_from_config(cfg.manifold, spec, rng)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{where}: missing or malformed field {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, NilmixError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _is_cos_character(f) -> bool:
    return isinstance(f, Character) and f.phase == "cos"


# -- check -----------------------------------------------------------------------------

def check_report(cfg: ExperimentConfig) -> dict:
    """Structure of the algebra and, when present, spectral data of the automorphism."""
    alg = cfg.manifold.algebra
    rep = {"algebra": alg.name, "dim": alg.dim, "step": alg.step,
           "lcs_dims": [len(b) for b in alg.lcs], "abelian_dim": alg.abelian_dim,
           "metric_scale": cfg.manifold.metric_scale, "injectivity_guard": cfg.manifold.injectivity_guard}
    aut = cfg.automorphism
    if aut is None:
        rep["ergodic"] = None
        return rep
    cert = is_ergodic(aut)
    probe = root_of_unity_probe(cert.char_poly)
    split = jordan_split(aut)
    central = split.central_basis
    hull = rational_hull(aut, central.T) if central.shape[1] else np.zeros((0, alg.dim), dtype=object)
    rep.update({
        "automorphism": aut.name,
        "matrix": [[str(x) for x in row] for row in aut.matrix],
        "ergodic": cert.ergodic,
        "certificate": cert.to_dict(),
        "probe_root_of_unity": probe,
        "probe_agrees": probe == (not cert.ergodic),
        "jordan": split.to_dict(),
        "central_rational_basis": [[str(x) for x in row] for row in hull],
    })
    return rep


def format_check(rep: dict) -> str:
    lines = [f"algebra {rep['algebra']}: dim {rep['dim']}, step {rep['step']}, "
             f"lower central series dims {rep['lcs_dims']}, abelianization dim {rep['abelian_dim']}"]
    if rep.get("ergodic") is None:
        lines.append("no automorphism given")
        return "\n".join(lines) + "\n"
    cert = rep["certificate"]
    lines.append(f"automorphism {rep['automorphism']}: matrix {rep['matrix']}")
    lines.append(f"abelianized characteristic polynomial {cert['char_poly']}")
    verdict = "true" if rep["ergodic"] else f"false (cyclotomic factor of order {cert['cyclotomic_factor']})"
    lines.append(f"ergodic: {verdict}; cyclotomic orders checked {cert['orders_checked']}; "
                 f"numerical probe {'agrees' if rep['probe_agrees'] else 'DISAGREES'}")
    lines.append("jordan blocks:")
    lines.append(f"  {'eigenvalue':>28}  {'modulus':>10}  size  kind")
    for b in rep["jordan"]["blocks"]:
        re, im = b["eigenvalue"]
        ev = f"{re:.10g}" if im == 0 else f"{re:.6g}{im:+.6g}i"
        lines.append(f"  {ev:>28}  {b['modulus']:>10.6g}  {b['size']:>4}  {b['kind']}")
    dims = rep["jordan"]["dims"]
    lines.append(f"dims: unstable {dims['unstable']}, stable {dims['stable']}, central {dims['central']}; "
                 f"residual {rep['jordan']['residual']:.2e}")
    wc = ", ".join("(" + ", ".join(row) + ")" for row in rep["central_rational_basis"]) or "0"
    lines.append(f"W^c rational basis: <{wc}>")
    return "\n".join(lines) + "\n"


# -- experiments -----------------------------------------------------------------------

def run_mixing(cfg, sec, rng):
    where = f"{cfg.path}: mixing"
    E = _engine(cfg, sec)
    f0 = _observable(cfg, sec.get("f0"), rng, f"{where}.f0")
    f1 = _observable(cfg, sec.get("f1", sec.get("f0")), rng, f"{where}.f1")
    ns = _schedule(sec, "ns", list(range(1, 13)), where)
    budget = int(sec.get("budget", 1 << 17))
    rep = mixing_experiment(E, f0, f1, ns, budget, rng, cfg.workers, int(sec.get("max_budget", budget)),
                            int(sec.get("min_usable", 6)))
    if _is_cos_character(f0) and _is_cos_character(f1):
        exact = [character_product_integral(E.aut, [f0.m, f1.m], [0, n]) for n in ns]
        rep.extra_columns["exact"] = np.array(exact)
        ok = np.abs(rep.means - exact) <= 3 * rep.ses + 1e-12
        rep.summary["exact_within_3se"] = bool(ok.all())
    return rep.to_csv(), rep.to_dict()


def run_multimix(cfg, sec, rng):
    where = f"{cfg.path}: multimix"
    E = _engine(cfg, sec)
    specs = sec.get("observables")
    if not isinstance(specs, list) or len(specs) < 2:
        raise ConfigError(f"{where}.observables: need a list of at least two observables")
    fs = [_observable(cfg, s, rng, f"{where}.observables[{i}]") for i, s in enumerate(specs)]
    gaps = _schedule(sec, "gaps", list(range(1, 9)), where)
    budget = int(sec.get("budget", 1 << 18))
    oracle = None
    if all(_is_cos_character(f) for f in fs):
        ms = [f.m for f in fs]
        oracle = lambda g: character_product_integral(E.aut, ms, [i * g for i in range(len(ms))])  # noqa: E731
    rep = multimix_experiment(E, fs, gaps, budget, rng, cfg.workers, int(sec.get("max_budget", budget)),
                              oracle, int(sec.get("min_usable", 6)))
    if oracle is not None:
        rep.extra_columns["exact"] = np.array(rep.summary["reference"])
        rep.summary["oracle_within_3se"] = bool(np.all(rep.errors <= 3 * rep.ses + 1e-12))
    return rep.to_csv(), rep.to_dict()


def run_equid(cfg, sec, rng):
    where = f"{cfg.path}: equid"
    X = cfg.manifold
    f = _observable(cfg, sec.get("observable"), rng, f"{where}.observable")
    W = np.atleast_2d(np.asarray(sec.get("directions"), dtype=float))
    if W.ndim != 2 or W.shape[1] != X.dim:
        raise ConfigError(f"{where}.directions: expected k rows of length {X.dim}")
    if sec.get("normalize", True):
        W = W / np.linalg.norm(W, axis=1, keepdims=True)
    u = _vector(sec.get("u", [0.0] * X.dim), X.dim, f"{where}.u")
    g = _vector(sec.get("g", [0.0] * X.dim), X.dim, f"{where}.g")
    Ts = _schedule(sec, "T", {"base": 2, "exponents": list(range(4, 15))}, where)
    budget = int(sec.get("budget", 1 << 20))
    rep = box_rate_experiment(f, W, u, g, Ts, budget, rng, cfg.workers, int(sec.get("max_budget", budget)),
                              float(sec.get("se_fraction", 1 / 3)))
    dich = sec.get("dichotomy")
    if dich is not None:
        box = BoxMap(X, np.zeros(X.dim), W, np.full(W.shape[0], float(dich.get("T", Ts[-1]))))
        res = dichotomy_probe(box, float(dich.get("delta", 0.1)), float(dich.get("L1", 1.0)),
                              float(dich.get("L2", 1.0)))
        rep.summary["dichotomy"] = res.to_dict()
    return rep.to_csv(), rep.to_dict()


def run_unstable(cfg, sec, rng):
    where = f"{cfg.path}: unstable"
    E = _engine(cfg, sec)
    X = cfg.manifold
    f = _observable(cfg, sec.get("observable"), rng, f"{where}.observable")
    split = jordan_split(E.aut)
    dimW = split.unstable_basis.shape[1]
    if dimW == 0:
        raise ConfigError(f"{where}: the automorphism has no unstable directions")
    sides = np.asarray(sec.get("sides", [4.0] * dimW), dtype=float)
    chart = UnstableChart(E.aut, split, sides)
    h = _vector(sec.get("h", [0.0] * X.dim), X.dim, f"{where}.h")
    g = _vector(sec.get("g", [0.0] * X.dim), X.dim, f"{where}.g")
    ns = _schedule(sec, "ns", list(range(0, 11)), where)
    budget = int(sec.get("budget", 1 << 16))
    integral, integral_se = f.integral, 0.0
    if integral is None:
        integral, integral_se = haar_mean(f, 10 * budget, rng, cfg.workers)
    rep = unstable_rate_experiment(E, f, chart, h, g, ns, budget, rng, cfg.workers,
                                   int(sec.get("max_budget", budget)), integral, integral_se,
                                   float(sec.get("se_fraction", 1 / 3)))
    return rep.to_csv(), rep.to_dict()


def run_clt(cfg, sec, rng):
    where = f"{cfg.path}: clt"
    E = _engine(cfg, sec)
    f = _observable(cfg, sec.get("observable"), rng, f"{where}.observable")
    ns = _schedule(sec, "n_schedule", [16, 64, 256, 1024, 4096], where)
    rep = clt_experiment(E, f, ns, int(sec.get("paths", 10000)), int(sec.get("J", 32)),
                         int(sec.get("budget", 100000)), rng, cfg.workers)
    summary = rep.to_dict()
    summary.pop("lags")
    ks = rep.ks_statistics
    summary["ks_decreasing"] = bool(np.all(np.diff(ks) < 0))
    summary["ks_final"] = float(ks[-1])
    return rep.to_csv(), summary


def run_donsker(cfg, sec, rng):
    where = f"{cfg.path}: donsker"
    E = _engine(cfg, sec)
    f = _observable(cfg, sec.get("observable"), rng, f"{where}.observable")
    grid = _schedule(sec, "grid", [k / 8 for k in range(1, 9)], where)
    sigma2 = sec.get("sigma2")
    budget = int(sec.get("budget", 100000))
    mean = None if f.integral is not None else haar_mean(f, 10 * budget, rng, cfg.workers)[0]
    summary = {}
    if sigma2 is None:
        gk = green_kubo(E, centered(f, mean), int(sec.get("J", 32)), budget, rng, cfg.workers)
        sigma2 = gk.sigma2
        summary.update({"sigma2_hat": gk.sigma2, "sigma2_se": gk.sigma2_se})
    rep = donsker_paths(E, f, int(sec.get("n", 1024)), int(sec.get("paths", 5000)), grid, float(sigma2),
                        rng, cfg.workers, mean)
    summary.update(rep.to_dict())
    summary["sigma2_used"] = float(sigma2)
    return rep.to_csv(), summary


def run_coboundary(cfg, sec, rng):
    where = f"{cfg.path}: coboundary"
    E = _engine(cfg, sec)
    if "psi" in sec:
        f = coboundary_make(E, _observable(cfg, sec["psi"], rng, f"{where}.psi"))
    elif "f" in sec:
        f = _observable(cfg, sec["f"], rng, f"{where}.f")
    else:
        raise ConfigError(f"{where}: need 'psi' (builds psi o alpha - psi) or 'f'")
    Ns = _schedule(sec, "Ns", [50, 100, 200, 400], where)
    samples = int(sec.get("sample_count", 2000))
    dec = coboundary_test(E, f, int(sec.get("J", 32)), int(sec.get("budget", 100000)), rng, cfg.workers,
                          Ns=tuple(Ns), sample_count=samples)
    solve = coboundary_solve(E, f, int(sec.get("N", 200)), sec.get("scheme", "cesaro"), samples, rng,
                             float(sec.get("r", 0.9)), cfg.workers)
    residuals = dec.residuals or [coboundary_solve(E, f, N, "cesaro", samples, rng, workers=cfg.workers)
                                  for N in Ns]
    text = _table(["N", "residual_l2", "residual_sup", "f_sup"],
                  [[r.N, r.residual_l2, r.residual_sup, r.f_sup] for r in residuals])
    summary = dec.to_dict()
    summary.pop("residuals")
    summary["solve"] = solve.to_dict()
    summary["residual_ratio"] = solve.residual_l2 / solve.f_sup if solve.f_sup > 0 else 0.0
    return text, summary


def run_diophantine(cfg, sec, rng):
    where = f"{cfg.path}: diophantine"
    l = cfg.manifold.abelian_dim
    c2 = float(sec.get("c2", 1.0))
    zmaxes = _schedule(sec, "zmax", [10, 100, 1000, 10000], where)
    direction = sec.get("direction", "unstable")
    if direction == "unstable":
        # the abelianized unstable subspace of the automorphism
        if cfg.automorphism is None:
            raise ConfigError(f"{where}: direction 'unstable' needs an automorphism")
        V = jordan_split(cfg.automorphism).unstable_basis[:l].T
        best = generic_direction(V, int(sec.get("trials", 0)), c2, zmaxes[0], rng)
        w = best.direction
    else:
        w = _vector(direction, l, f"{where}.direction")
    normalize = bool(sec.get("normalize", True))
    reps = [diophantine_constant(w, c2, int(z), normalize) for z in zmaxes]
    rows = [[r.search_bound, r.c1_hat, " ".join(str(int(v)) for v in r.argmin_z), r.failure] for r in reps]
    summary = reps[-1].to_dict()
    summary["c1_schedule"] = [r.c1_hat for r in reps]
    return _table(["Zmax", "c1_hat", "argmin_z", "failure"], rows), summary


RUNNERS = {"mixing": run_mixing, "multimix": run_multimix, "equid": run_equid, "unstable": run_unstable,
           "clt": run_clt, "donsker": run_donsker, "coboundary": run_coboundary, "diophantine": run_diophantine}


def run_command(command: str, cfg: ExperimentConfig) -> tuple[Path, dict]:
    """Run one experiment and write ``<out>/<command>_<seed>.csv`` and ``<out>/summary.json``."""
    sec = cfg.section(command) if command in cfg.sections else {}
    if command in GATED:
        if cfg.automorphism is None:
            raise ConfigError(f"{cfg.path}: '{command}' needs an automorphism")
        cert = is_ergodic(cfg.automorphism)
        if not cert.ergodic:
            raise NotErgodic(f"automorphism {cfg.automorphism.name!r} is not ergodic "
                             f"(cyclotomic factor of order {cert.cyclotomic_factor})")
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    text, summary = RUNNERS[command](cfg, sec, rng)
    runtime = time.perf_counter() - t0
    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / f"{command}_{cfg.seed}.csv"
    csv_path.write_text(text)
    summary = {**_jsonable(summary), "command": command, "config": str(cfg.path), "seed": cfg.seed,
               "workers": cfg.workers, "runtime_s": runtime}
    (cfg.out / "summary.json").write_text(dumps(summary) + "\n")
    return csv_path, summary


# -- entry point -----------------------------------------------------------------------

def _config_path(raw: str) -> Path:
    p = Path(raw)
    if not p.exists() and not p.is_absolute() and data_path(raw).exists():
        return data_path(raw)
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nilmix", description="Mixing and limit-theorem experiments on nilmanifolds.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True,
                    help="experiment, automorphism or manifold JSON (bundled file names are accepted)")
    ap.add_argument("--seed", type=int, default=None, help="overrides NILMIX_SEED and the config")
    ap.add_argument("--workers", type=int, default=None, help="overrides NILMIX_WORKERS and the config")
    ap.add_argument("--out", default=None, help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(_config_path(args.config), args.seed, args.workers, args.out)
        if args.command == "check":
            rep = check_report(cfg)
            sys.stdout.write(format_check(rep))
            if args.out is not None:
                cfg.out.mkdir(parents=True, exist_ok=True)
                (cfg.out / "check.json").write_text(dumps(rep) + "\n")
            return 0 if rep["ergodic"] is not False else 1
        csv_path, summary = run_command(args.command, cfg)
    except (ValidationError, NotErgodic) as exc:
        print(f"nilmix: validation failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (NilmixError, ValueError, ArithmeticError) as exc:
        print(f"nilmix: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    keys = [k for k in ("rho_hat", "kappa_hat", "r2", "sigma2_hat", "decision", "c1_hat", "variance_slope")
            if summary.get(k) is not None]
    brief = ", ".join(f"{k}={summary[k]:.6g}" if isinstance(summary[k], float) else f"{k}={summary[k]}"
                      for k in keys)
    print(f"{args.command}: wrote {csv_path}" + (f" ({brief})" if brief else ""))
    if summary.get("flags"):
        print(f"flags: {', '.join(summary['flags'])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
