"""Command line experiment runner.

    python -m gasketlab <subcommand> [flags]
    gasketlab <subcommand> --config run.cfg --seed 3

Settings come from a flat `key = value` file (section headers are allowed and
ignored) and from flags; flags win.  Every run writes its CSVs and a
manifest.txt into --out.  Exit codes: 2 invalid input, 3 size budget exceeded,
4 solver failure.
"""
import argparse
import csv
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CapacityError, SolverError, ValidationError
from .gasket import D_F, D_W, GasketGraph, invariant_report
from .operators import DENSE_CAP, DIRICHLET, KILL_FIRST, REFLECTED, SUB_FIRST, SchrodingerProblem
from .potentials import check_w4, parse_profile, potential, sample_cloud
from .ids import log_grid
from .rng import stream
from .subordinators import parse_exponent, parse_value

SUBCOMMANDS = ("geometry", "spectrum", "ids", "lifschitz", "survival", "obstacles", "probes", "validate")

# key -> (type, default, help)
KEYS = {
    "M": (int, None, "box scale (default depends on the subcommand)"),
    "n": (int, None, "resolution level"),
    "phi": (str, "stable_drift:b=1,g=0.5dw", "Laplace exponent preset, name:key=value,..."),
    "profile": (str, "indicator:A=4,a0=0.25", "interaction profile preset"),
    "nu": (float, 1.0, "Poisson intensity"),
    "tgrid": (str, "2:16:4", "times a:b:steps (log spaced) or a comma list"),
    "reps": (int, 100, "replicates"),
    "seed": (int, 0, "master seed"),
    "out": (str, "out", "output directory"),
    "threads": (int, os.cpu_count() or 1, "worker threads"),
    "mode": (str, DIRICHLET, "boundary mode: dirichlet or reflected"),
    "order": (str, SUB_FIRST, "subordinate_first or kill_first"),
    "kappa": (float, 1.0, "walk time constant"),
    "host": (int, None, "scale of the cloud domain (default M)"),
    "domain": (str, "laplace", "lifschitz fit domain: laplace or measure"),
    "window": (str, "4:64", "Laplace-domain fit window a:b"),
    "quantiles": (str, "0.001:0.1", "measure-domain window as counting-function levels lo:hi"),
    "xgrid": (str, "", "energies a:b:steps for ids.csv (default: quantile window)"),
    "check": (str, "auto", "ids bounds: auto, lower, upper, both or none"),
    "paths": (int, 2000, "Monte Carlo paths"),
    "x": (str, "", "start vertex as lattice coordinates i,j"),
    "kernel_t": (float, 0.0, "also dump the kernel at this time (spectrum)"),
    "eps_M": (str, "4,5,6", "obstacles/probes: scales M with eps = 2**-M"),
    "configs": (int, 200, "obstacles: configurations per eps"),
    "a": (float, 0.25, "obstacles: profile range in units of eps"),
    "b": (float, 2.0, "obstacles: enlargement radius in units of eps"),
    "delta": (float, 0.05, "obstacles: delta"),
    "K": (float, 10.0, "obstacles: eigenvalue cap"),
    "R": (float, 4.0, "obstacles: ball growth factor"),
    "A": (float, 4.0, "obstacles: profile height"),
    "gamma": (str, "dw", "obstacles/probes: process index (dw for the diffusion)"),
    "n_base": (int, None, "obstacles/probes: resolution of G_M (default 2 diffusion, 0/1 probes)"),
    "samples": (int, 10, "probes: sampled pairs per probe"),
    "tau0_rule": (str, "travel", "probes: travel or recipe"),
}

DEFAULT_SIZE = {"geometry": (0, 4), "spectrum": (1, 4), "ids": (2, 4), "lifschitz": (4, 2),
                "survival": (1, 4), "validate": (1, 4)}


# -- configuration ---------------------------------------------------------

def read_config_file(path):
    """Flat key = value pairs; '#' comments and [section] headers are ignored."""
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise ValidationError(f"{path}:{k}: expected key = value")
        out[key.strip()] = val.strip().strip('"')
    return out


def build_config(cmd, file_values, flag_values):
    cfg = {}
    for key, (typ, default, _) in KEYS.items():
        cfg[key] = default
    unknown = set(file_values) - set(KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    for src in (file_values, flag_values):
        for key, val in src.items():
            if val is None:
                continue
            typ = KEYS[key][0]
            try:
                cfg[key] = typ(val)
            except (TypeError, ValueError):
                raise ValidationError(f"bad value for {key}: {val!r}") from None
    M0, n0 = DEFAULT_SIZE.get(cmd, (None, None))
    cfg["M"] = M0 if cfg["M"] is None else cfg["M"]
    cfg["n"] = n0 if cfg["n"] is None else cfg["n"]
    if cfg["mode"] not in (DIRICHLET, REFLECTED):
        raise ValidationError(f"mode must be {DIRICHLET} or {REFLECTED}")
    if cfg["order"] not in (SUB_FIRST, KILL_FIRST):
        raise ValidationError(f"order must be {SUB_FIRST} or {KILL_FIRST}")
    if cfg["reps"] < 1 or cfg["threads"] < 1 or cfg["nu"] < 0:
        raise ValidationError("reps and threads must be positive, nu non-negative")
    cfg["command"] = cmd
    return cfg


def parse_grid(text):
    """'a:b:steps' (log spaced) or 'x1,x2,...'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid {text!r} is not a:b:steps")
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
        if not (0 < a <= b and k >= 1):
            raise ValidationError(f"grid {text!r} needs 0 < a <= b and steps >= 1")
        return log_grid(a, b, k)
    vals = np.array([float(v) for v in text.split(",") if v.strip()])
    if len(vals) == 0 or np.any(vals <= 0):
        raise ValidationError(f"grid {text!r} needs positive values")
    return vals


def parse_pair(text, name):
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise ValidationError(f"{name} must be a:b, got {text!r}") from None
    return a, b


def parse_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


# -- output helpers ----------------------------------------------------------

def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[h]) for h in header] if isinstance(r, dict) else [fmt(x) for x in r])


def version_string():
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(out, cfg, files, wall, extra=None):
    lines = [f"gasketlab {version_string()}", f"command = {cfg['command']}"]
    lines += [f"{k} = {fmt(cfg[k])}" for k in KEYS]
    lines += [f"seed_streams = counter-based Philox keyed by (seed={cfg['seed']}, tag, replicate, stream)"]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {fmt(v)}")
    lines.append("files = " + ",".join(files))
    lines.append(f"wall_time_s = {wall:.3f}")
    text = "\n".join(lines) + "\n"
    (out / "manifest.txt").write_text(text)
    return text


# -- subcommands -------------------------------------------------------------

def _phi(cfg):
    return parse_exponent(cfg["phi"])


def _profile(cfg):
    return parse_profile(cfg["profile"])


def _family(cfg):
    from .ids import Family

    return Family(cfg["M"], cfg["n"], _phi(cfg), _profile(cfg), cfg["nu"], mode=cfg["mode"],
                  order=cfg["order"], kappa=cfg["kappa"], host=cfg["host"])


def run_geometry(cfg, out):
    g = GasketGraph(cfg["M"], cfg["n"])
    with open(out / "graph.txt", "w") as fh:
        g.dump(fh)
    rep = invariant_report(g, seed=cfg["seed"])
    write_csv(out / "geometry.csv", ["key", "value"], [(k, v) for k, v in rep.items()])
    files = ["graph.txt", "geometry.csv"]
    if cfg["nu"] > 0:
        rows = []
        for r in range(cfg["reps"]):
            cloud = sample_cloud(g, cfg["nu"], stream(cfg["seed"], "cloud", r))
            rows += [(r, i, 0, w) for i, w in enumerate(cloud.words())]
            if r == 0:
                V = potential(g, _profile(cfg), cloud)
                write_csv(out / "potential.csv", ["vertex", "value"], enumerate(V))
        write_csv(out / "cloud.csv", ["replicate", "point_index", "copy", "word"], rows)
        files += ["cloud.csv", "potential.csv"]
    ok = all(v for k, v in rep.items() if k.endswith("_ok"))
    print(f"geometry M={g.M} n={g.n}: |V|={g.nv} |E|={len(g.edges)} invariants {'ok' if ok else 'FAILED'}")
    return files, {"invariants_ok": ok}


def run_spectrum(cfg, out):
    g = GasketGraph(cfg["M"], cfg["n"])
    prob = SchrodingerProblem(g, _phi(cfg), cfg["mode"], cfg["order"], cfg["kappa"])
    V = None
    if cfg["nu"] > 0:
        V = potential(g, _profile(cfg), sample_cloud(g, cfg["nu"], stream(cfg["seed"], "cloud", 0)))
        V = V[prob.keep]
    w = prob.eigvalsh(V)
    write_csv(out / "spectrum.csv", ["index", "eigenvalue"], enumerate(w))
    files = ["spectrum.csv"]
    if cfg["kernel_t"] > 0:
        P = prob.kernel(cfg["kernel_t"], V)
        idx = np.flatnonzero(prob.keep) if prob.keep.dtype == bool else np.asarray(prob.keep)
        rows = ((int(idx[i]), int(idx[j]), P[i, j]) for i in range(len(idx)) for j in range(len(idx)))
        write_csv(out / "kernel.csv", ["x", "y", "value"], rows)
        files.append("kernel.csv")
    print(f"spectrum: {len(w)} eigenvalues, lowest {w[0]:.6g}")
    return files, {}


def _ids_rows(spectra, M, cfg):
    from .ids import empirical_ids, quantile_window

    lo, hi = parse_pair(cfg["quantiles"], "quantiles")
    xgrid = parse_grid(cfg["xgrid"]) if cfg["xgrid"] else quantile_window(spectra, M, lo, hi, 17)
    l, counts = empirical_ids(spectra, M, xgrid)
    return [dict(x=x, l_hat=a, count=c) for x, a, c in zip(xgrid, l, counts)], xgrid


def run_ids(cfg, out):
    from .ids import annealed_laplace, lower_certificate, upper_long_range

    fam = _family(cfg)
    tgrid = parse_grid(cfg["tgrid"])
    check = cfg["check"]
    if check not in ("auto", "lower", "upper", "both", "none"):
        raise ValidationError("check must be auto, lower, upper, both or none")
    if check == "auto":
        check = "both" if fam.phi.regime is not None else "lower"
    if check in ("upper", "both") and fam.phi.regime is None:
        raise ValidationError(f"{fam.phi!r} satisfies none of U1-U3; upper bounds do not apply")
    spectra = fam.spectra(cfg["reps"], cfg["seed"], cfg["threads"])
    curve = annealed_laplace(fam, tgrid, cfg["reps"], cfg["seed"], spectra=spectra)
    lo = {r["t"]: r for r in lower_certificate(fam, tgrid, cfg["reps"], cfg["seed"], curve)} \
        if check in ("lower", "both") else {}
    up = {r["t"]: r for r in upper_long_range(fam, tgrid, cfg["reps"], cfg["seed"], curve)} \
        if check in ("upper", "both") else {}
    rows = []
    for k, t in enumerate(curve.t):
        lr = lo.get(t, {}).get("rhs", np.nan)
        ur = up.get(t, {}).get("rhs", np.nan)
        rows.append(dict(t=t, Lhat=curve.L[k], se=curve.se[k], lower_rhs=lr, upper_rhs=ur,
                         margin_lo=curve.L[k] - lr, margin_hi=ur - curve.L[k]))
    write_csv(out / "laplace.csv", ["t", "Lhat", "se", "lower_rhs", "upper_rhs", "margin_lo", "margin_hi"], rows)
    ids_rows, _ = _ids_rows(spectra, fam.M, cfg)
    write_csv(out / "ids.csv", ["x", "l_hat", "count"], ids_rows)
    print(f"ids: {len(rows)} times, {cfg['reps']} replicates, checks={check}")
    return ["laplace.csv", "ids.csv"], {"checks": check}


def run_lifschitz(cfg, out):
    from .ids import annealed_laplace, lifschitz_fit_laplace, lifschitz_fit_measure

    fam = _family(cfg)
    spectra = fam.spectra(cfg["reps"], cfg["seed"], cfg["threads"])
    files = []
    if cfg["domain"] == "laplace":
        a, b = parse_pair(cfg["window"], "window")
        tgrid = log_grid(a, b, 9)
        curve = annealed_laplace(fam, tgrid, cfg["reps"], cfg["seed"], spectra=spectra)
        fit = lifschitz_fit_laplace(curve.t, curve.per_rep, (a, b), seed=cfg["seed"])
        rows = [dict(t=t, Lhat=L, se=s) for t, L, s in zip(curve.t, curve.L, curve.se)]
        write_csv(out / "laplace.csv", ["t", "Lhat", "se"], rows)
        files.append("laplace.csv")
        target = D_F / (D_F + fam.phi.gamma_index) if fam.phi.regime else np.nan
    elif cfg["domain"] == "measure":
        rows, xgrid = _ids_rows(spectra, fam.M, dict(cfg, xgrid=cfg["xgrid"]))
        if not cfg["xgrid"]:
            from .ids import quantile_window
            lo, hi = parse_pair(cfg["quantiles"], "quantiles")
            xgrid = quantile_window(spectra, fam.M, lo, hi, 9)
        fit = lifschitz_fit_measure(spectra, fam.M, xgrid, seed=cfg["seed"])
        write_csv(out / "ids.csv", ["x", "l_hat", "count"], rows)
        files.append("ids.csv")
        target = D_F / fam.phi.gamma_index if fam.phi.regime else np.nan
    else:
        raise ValidationError("domain must be laplace or measure")
    theta = getattr(fam.profile, "theta", np.nan)
    report = dict(domain=fit.mode, slope=fit.slope, ci=list(fit.ci), window=list(fit.window),
                  npts=fit.npts, intercept=fit.intercept, short_range_prediction=target,
                  theta=theta, seed=cfg["seed"], reps=cfg["reps"], M=fam.M, n=fam.n,
                  note="finite box: slopes depend on box size and intensity")
    (out / "fit.txt").write_text(json.dumps(report, indent=2, default=float) + "\n")
    files.append("fit.txt")
    print(f"lifschitz ({fit.mode}): slope {fit.slope:.4f} CI [{fit.ci[0]:.4f}, {fit.ci[1]:.4f}]")
    return files, {}


def run_survival(cfg, out):
    from .montecarlo import survival_bound_check

    x = tuple(int(v) for v in cfg["x"].split(",")) if cfg["x"] else None
    rows = survival_bound_check(_phi(cfg), _profile(cfg), cfg["nu"], cfg["M"], cfg["n"],
                                parse_grid(cfg["tgrid"]), cfg["paths"], cfg["seed"], x_lattice=x)
    rows = [dict(t=r["t"], survival_A=r["A"], se_A=r["se_A"], survival_B=r["B"], se_B=r["se_B"],
                 lower_rhs=r["lower_rhs"], upper_rhs=r["upper_rhs"]) for r in rows]
    write_csv(out / "survival.csv", ["t", "survival_A", "se_A", "survival_B", "se_B", "lower_rhs", "upper_rhs"], rows)
    print(f"survival: {len(rows)} times, {cfg['paths']} paths")
    return ["survival.csv"], {}


def _obstacle_kw(cfg):
    gamma = parse_value(cfg["gamma"])
    if not 0 < gamma <= D_W + 1e-12:
        raise ValidationError("gamma must lie in (0, d_w]")
    return dict(nu=cfg["nu"], a=cfg["a"], b=cfg["b"], delta=cfg["delta"], K=cfg["K"], R=cfg["R"],
                A=cfg["A"], gamma=gamma)


def run_obstacles(cfg, out):
    from .obstacles import empirical_eps0, sweep_summary, comparison_sweep

    kw = _obstacle_kw(cfg)
    diffusion = abs(kw["gamma"] - D_W) < 1e-12
    kw["n_base"] = cfg["n_base"] if cfg["n_base"] is not None else (2 if diffusion else 0)
    rows = comparison_sweep(parse_ints(cfg["eps_M"]), cfg["configs"], cfg["seed"], cfg["threads"], **kw)
    head = ["config_id", "eps", "lambda_b", "lambda_V", "margin", "n_good", "n_bad", "bad_volume"]
    write_csv(out / "obstacles.csv", head, rows)
    summ = sweep_summary(rows, cfg["K"])
    write_csv(out / "obstacles_summary.csv", ["eps", "configs", "violating", "bad_volume_ok", "capped"], summ)
    for s in summ:
        print(f"eps={s['eps']:g}: violating {s['violating']:.3f}, bad-volume ok {s['bad_volume_ok']:.3f}, "
              f"both capped at K {s['capped']:.3f}")
    return ["obstacles.csv", "obstacles_summary.csv"], {"empirical_eps0": empirical_eps0(summ)}


def run_probes(cfg, out):
    from .obstacles import eps_stability, probe_sweep

    kw = _obstacle_kw(cfg)
    gamma = kw.pop("gamma")
    reps = probe_sweep(parse_ints(cfg["eps_M"]), gamma=gamma, n_base=cfg["n_base"],
                       samples=cfg["samples"], seed=cfg["seed"], rule=cfg["tau0_rule"], **kw)
    rows = [dict(eps=r["eps"], key=k, value=v) for r in reps for k, v in r.items() if k != "eps"]
    write_csv(out / "probes.csv", ["eps", "key", "value"], rows)
    stab = eps_stability([r["c1"] for r in reps])
    c1 = ", ".join(format(r["c1"], ".4g") for r in reps)
    print(f"probes: c1 = {c1}; max/min {stab:.3f}")
    return ["probes.csv"], {"c1_eps_ratio": stab}


def validate_report(cfg):
    """Dry-run checks; never raises for model-level problems, only reports them."""
    lines, refusals = [], []
    try:
        phi = _phi(cfg)
        lines.append(f"phi = {phi!r}")
        lines.append(f"L1 = {'yes (beta=%.6g)' % phi.beta if phi.beta is not None else 'no'}")
        lines.append(f"regime = {phi.regime or 'none'}")
        if phi.regime is None and cfg["check"] in ("upper", "both"):
            refusals.append(f"upper bounds refused: {phi!r} satisfies none of U1-U3 (regime none)")
    except ValidationError as err:
        phi = None
        refusals.append(f"phi: {err}")
    try:
        prof = _profile(cfg)
        lines.append(f"profile = {getattr(prof, 'name', type(prof).__name__)}")
        theta = getattr(prof, "theta", None)
        lines.append(f"W1 (nonnegative, symmetric) = yes by construction; W4 floor = {prof.floor:.6g}")
        if cfg["M"] is not None and cfg["n"] is not None and (cfg["M"] + cfg["n"]) <= 6:
            lines.append(f"W4 worst ratio on G_{cfg['M']} = {check_w4(prof, GasketGraph(cfg['M'], cfg['n'])):.6g}")
        if phi is not None and phi.regime is not None and theta is not None:
            gam = phi.gamma_index
            case = "(i) gamma < theta" if gam < theta else "(ii) gamma = theta" if gam == theta else "(iii) gamma > theta"
            lines.append(f"theta = {theta:.6g}, gamma = {gam:.6g}: case {case}")
    except ValidationError as err:
        refusals.append(f"profile: {err}")
    if cfg["M"] is not None and cfg["n"] is not None:
        k = cfg["M"] + cfg["n"]
        dim = 3 * (3 ** k + 1) // 2
        lines.append(f"dimension = {dim} (dense cap {DENSE_CAP})")
        if dim > DENSE_CAP:
            refusals.append(f"dimension {dim} exceeds the dense cap {DENSE_CAP}: full spectra refused")
    lines += [f"refusal: {r}" for r in refusals] or ["refusal: none"]
    return lines


def run_validate(cfg, out):
    lines = validate_report(cfg)
    (out / "validate.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return ["validate.txt"], {}


RUNNERS = {name: globals()[f"run_{name}"] for name in SUBCOMMANDS}


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    for key, (typ, default, hlp) in KEYS.items():
        flag = "--" + key.replace("_", "-")
        names = [flag] if flag == "--" + key else [flag, "--" + key]
        common.add_argument(*names, dest=key, type=str, default=None, help=f"{hlp} [{default}]")
    p = argparse.ArgumentParser(prog="gasketlab", description="Subordinate processes among Poisson obstacles on the Sierpinski gasket.")
    p.add_argument("--version", action="version", version=f"gasketlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in KEYS}
        cfg = build_config(args.command, file_values, flags)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        files, extra = RUNNERS[args.command](cfg, out)
        print(write_manifest(out, cfg, files, time.perf_counter() - t0, extra), end="")
    except (ValidationError, CapacityError, SolverError) as err:
        kind = type(err).__name__
        print(f"error: {kind}: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"error: ValidationError: {err}", file=sys.stderr)
        return ValidationError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
