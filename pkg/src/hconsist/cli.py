"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 failed selftest
criterion.  CSV outputs start with a schema line and are written
atomically (temp file in the target directory, then rename).
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__

SCHEMA_VERSION = "v1"

COLUMNS = {
    "transform": ["t", "T", "Gamma_of_T"],
    "invert": ["s", "Gamma"],
    "solve": ["t", "T_solver", "T_closed_form_if_known", "abs_diff"],
    "verify": ["quad_id", "target_excess", "surrogate_excess", "target_gap", "surrogate_gap", "lhs", "rhs", "slack", "tight"],
    "tightness": ["kind", "param", "t", "achieved_target", "achieved_surrogate", "T_value", "slack"],
    "gap": ["tau", "gap_bound", "margin_to_next", "ordered"],
    "simulate": ["sigma", "loss", "risk_target", "se_target", "risk_surrogate", "se_surrogate", "slack"],
    "growth": ["t", "T", "fitted", "residual"],
    "selftest": ["criterion", "name", "status", "seconds", "detail"],
}


class UsageError(Exception):
    pass


def schema_line(command: str) -> str:
    return f"# hconsist.{command}/{SCHEMA_VERSION}"


def render_csv(command: str, rows) -> str:
    buf = io.StringIO()
    buf.write(schema_line(command) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[command])
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".hconsist-", suffix=".tmp", dir=d)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(args, command: str, rows) -> None:
    text = render_csv(command, rows)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


# config files -------------------------------------------------------------------

def read_config(path: str, command: str) -> dict:
    """Flat key=value pairs; ``[name]`` sections apply only to that command."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}")
    out, section = {}, None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{no}: empty key")
        if section is None or section == command:
            out[key] = (val, no)
    return out


def config_argv(sub: argparse.ArgumentParser, cfg: dict, path: str) -> list:
    known = {}
    for act in sub._actions:
        for opt in act.option_strings:
            if opt.startswith("--"):
                known[opt[2:].replace("-", "_")] = (opt, act)
    argv = []
    for key, (val, no) in cfg.items():
        k = key.replace("-", "_")
        if k not in known or k in ("config", "help"):
            raise UsageError(f"{path}:{no}: unknown key {key!r}")
        opt, act = known[k]
        if act.nargs == 0:
            if val.lower() in ("1", "true", "yes", "on"):
                argv.append(opt)
            elif val.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"{path}:{no}: {key} expects a boolean")
        else:
            argv += [opt, val]
    return argv


# parsing helpers ----------------------------------------------------------------

def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}")


def _t_values(args, name="t") -> np.ndarray:
    single = getattr(args, name)
    if single is not None:
        return np.array(_floats(single))
    grid = getattr(args, f"{name}_grid")
    if grid < 2:
        raise UsageError(f"--{name}-grid needs at least 2 points")
    return np.linspace(0.0, 1.0, grid)


def _curve_flags(p):
    p.add_argument("--family", required=True,
                   choices=["binary-linear", "binary-nn", "binary-complete", "comp-sum", "comp-sum-lower",
                            "table", "adversarial-rho", "adversarial-massart", "bounded"])
    p.add_argument("--loss", default="hinge", help="loss id within the family")
    p.add_argument("--table", default="comp_sum_phi",
                   help="table family for --family table: comp_sum_phi, cstnd_phi, sum_loss, cstnd_sum, max_rho")
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--Lam", type=float, default=None)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--s-min", type=float, default=None)
    p.add_argument("--s-max", type=float, default=None)
    p.add_argument("--Lam-min", type=float, default=None)
    p.add_argument("--massart-beta", type=float, default=None)


def build_curve(args):
    from . import transforms as TR
    fam = args.family
    if fam == "binary-linear":
        c = TR.binary_linear_transform(args.loss, args.B, k=args.k, rho=args.rho)
    elif fam == "binary-nn":
        c = TR.binary_linear_transform(args.loss, args.B, k=args.k, rho=args.rho, Lam=args.Lam or 1.0)
    elif fam == "binary-complete":
        c = TR.binary_complete_transform(args.loss, k=args.k, rho=args.rho)
    elif fam == "comp-sum":
        c = TR.comp_sum_transform(args.tau, args.n)
    elif fam == "comp-sum-lower":
        c = TR.comp_sum_poly_bounds(args.tau, args.n)[0]
    elif fam == "table":
        c = TR.multiclass_table_transform(args.table, args.loss, n=args.n, q=args.q, rho=args.rho, B=args.B, Lam=args.Lam)
    elif fam == "adversarial-rho":
        c = TR.adversarial_rho_transform(args.B, args.rho, args.Lam)
    elif fam == "adversarial-massart":
        if args.massart_beta is None:
            raise UsageError("--family adversarial-massart needs --massart-beta")
        return TR.adversarial_massart_lower(args.loss, args.B, args.massart_beta, k=args.k)
    else:
        c = TR.bounded_hypothesis_psi(args.loss, args.s_min, args.s_max, args.Lam_min, args.q)
    if args.massart_beta is not None:
        c = TR.massart_modified(c, args.massart_beta)
    return c


# commands -----------------------------------------------------------------------

def cmd_transform(args):
    c = build_curve(args)
    t = _t_values(args)
    T = np.atleast_1d(c(t))
    if args.t is not None and not args.out and len(t) == 1:
        print(f"{float(T[0]):.12g}")
        return 0
    G = np.atleast_1d(c.inverse(T))
    emit(args, "transform", zip(t, T, G))
    return 0


def cmd_invert(args):
    c = build_curve(args)
    s = np.array(_floats(args.s))
    g = np.atleast_1d(c.inverse(s, relaxed=args.relaxed))
    if not args.out and len(s) == 1:
        print(f"{float(g[0]):.12g}")
        return 0
    emit(args, "invert", zip(s, g))
    return 0


def cmd_solve(args):
    from . import losses as L
    from . import solver as S
    from . import transforms as TR
    from .risk import HypothesisClassSpec
    params = {"q": args.q} if args.phi == "gen_ce" else {}
    if args.phi in ("sigmoid", "sig"):
        params = {"k": args.k}
    try:
        phi = L.make_phi(args.phi, **params)
    except KeyError as e:
        raise UsageError(str(e))
    cfg = S.SolverConfig(tau_grid_size=args.tau_grid, refine_iterations=args.refine, tau_cap=args.tau_cap,
                         P_handling=args.p_handling)
    t = _t_values(args)
    closed = None
    if args.bounded is not None:
        cls = HypothesisClassSpec.bounded(args.bounded, args.n)
        if args.family == "comp":
            T = S.solve_bounded_comp_transform(phi, cls, t, cfg)
            ids = {"neg_log": "logistic", "inv_minus_one": "sum_exponential", "gen_ce": "gen_ce", "one_minus": "mae"}
            if args.phi in ids:
                closed = TR.bounded_hypothesis_psi(ids[args.phi], cls.s_min(), cls.s_max(), q=args.q)
        elif args.family == "cstnd":
            T = S.solve_bounded_cstnd_transform(phi, cls, t, cfg)
            if phi.id == "exponential":
                closed = TR.bounded_hypothesis_psi("cstnd_exp", Lam_min=args.bounded)
        else:
            raise UsageError("--bounded applies to comp and cstnd families")
    elif args.family == "comp":
        T = S.solve_comp_transform(phi, args.n, t, cfg)
        try:
            closed = TR.multiclass_table_transform("comp_sum_phi", phi.id, n=args.n, q=args.q)
        except TR.UnknownTransform:
            closed = None
    elif args.family == "cstnd":
        T = S.solve_cstnd_transform(phi, args.n, t, cfg=cfg, form=args.form)
        if args.form == "table":
            try:
                closed = TR.multiclass_table_transform("cstnd_phi", phi.id)
            except TR.UnknownTransform:
                closed = None
    else:
        T = S.binary_transform_from_phi(phi, t, cfg=cfg)
        try:
            closed = TR.binary_complete_transform(phi.id if phi.id != "logistic2" else "logistic",
                                                  k=args.k, rho=args.rho)
            if phi.id == "logistic2" and phi.log_base != "two":
                closed = None
        except (TR.UnknownTransform, KeyError, ValueError):
            closed = None
    T = np.atleast_1d(T)
    cf = np.atleast_1d(closed(t)) if closed is not None else np.full(len(t), math.nan)
    emit(args, "solve", zip(t, T, cf, np.abs(T - cf)))
    return 0


def _class_from_id(qid: str, args, n: int):
    from .risk import HypothesisClassSpec
    name = qid.split("/")[-1] if not qid.startswith("binary-massart") else "Linear"
    if name == "Linear":
        return HypothesisClassSpec.linear(W=args.W, B=args.B, gamma=args.gamma)
    if name == "OneLayerNN":
        return HypothesisClassSpec.nn(Lam=args.Lam, W=args.W, B=args.B)
    if name == "AllMeasurable":
        return HypothesisClassSpec.all_measurable(n)
    if name == "CompleteSymmetric":
        return HypothesisClassSpec.complete(n)
    raise UsageError(f"cannot build a class for {qid!r}")


def cmd_verify(args):
    from . import verifier as V
    from .risk import DiscreteDistribution
    reg = V.registry()
    if args.list:
        print("\n".join(sorted(reg)))
        return 0
    if args.quad not in reg:
        raise UsageError(f"unregistered quadruple {args.quad!r}; use --list")
    if not args.dist or not args.hyp:
        raise UsageError("verify needs --dist and --hyp files")
    spec = reg[args.quad]
    try:
        with open(args.dist) as fh:
            dist = DiscreteDistribution.from_text(fh.read())
        with open(args.hyp) as fh:
            rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as e:
        raise UsageError(str(e))
    scores = [np.array(_floats(r)) for r in rows]
    cls = _class_from_id(args.quad, args, dist.points[0].n)
    rep = V.verify_bound(spec.surrogate, spec.target, spec.transform(cls), cls, dist, scores,
                         gap_mode=args.gap_mode, tol=args.tol)
    emit(args, "verify", [[args.quad] + rep.row()])
    return 0


def cmd_tightness(args):
    from . import verifier as V
    rows = []
    if args.kind == "comp-sum":
        for b in _floats(args.beta):
            tgt, sur, T = V.tightness_comp_sum(args.tau, args.n, b)
            rows.append(["comp-sum", args.tau, b, tgt, sur, T, sur - T])
    else:
        for t in _floats(args.t):
            best, T, slack, res = V.tightness_binary(args.loss, t, B=args.B, grid=args.grid, k=args.k, rho=args.rho)
            rows.append([f"binary/{args.loss}", args.B, t, t, best, T, slack])
    emit(args, "tightness", rows)
    return 0


def cmd_witness(args):
    from . import losses as L
    from . import verifier as V
    from .risk import HypothesisClassSpec
    params = {"k": args.k} if args.phi in ("sigmoid", "sig") else {}
    phi = L.make_phi(args.phi, **params)
    if args.kind == "adversarial-convex":
        rec = V.negative_witness_adversarial(HypothesisClassSpec.linear(W=args.W, B=args.B, gamma=args.gamma), phi)
    else:
        rec = V.negative_witness_max_loss(args.n, phi)
    a, b = rec.pair()
    print(f"({a:g}, {b:g})")
    if args.verbose:
        for k, v in rec.detail.items():
            print(f"{k}={v}")
    return 0


def cmd_gap(args):
    from .risk import gap_ordering_check
    taus = _floats(args.taus)
    gaps, flags, margins = gap_ordering_check(args.Lam, args.n, args.R_star, taus)
    rows = []
    for i, (tau, g) in enumerate(zip(taus, gaps)):
        m = float(margins[i]) if i < len(margins) else math.nan
        rows.append([tau, float(g), m, int(flags[i]) if i < len(flags) else 1])
    emit(args, "gap", rows)
    return 0


def cmd_simulate(args):
    from . import simulator as SIM
    sigmas = _floats(args.sigmas) if args.sigmas else [args.sigma]
    losses = tuple(v.strip() for v in args.losses.split(",") if v.strip()) if args.losses else ()
    spec = SIM.SimulationSpec(args.scenario, sigmas[0], args.gamma, args.samples, args.seed, args.shards,
                              losses=losses)
    results = SIM.sweep_sigma(spec, sigmas)
    emit(args, "simulate", [r for res in results for r in res.rows()])
    return 0


def cmd_growth(args):
    from . import growth as G
    from . import losses as L
    from . import solver as S
    if args.phi:
        psi = L.make_phi(args.phi)
        curve = lambda t: S.binary_transform_from_phi(psi, t)
    else:
        curve = G.growth_curve(args.curve, n=args.n)
    fit = G.fit_growth(curve, args.t_min, args.t_max, args.points)
    rows = list(zip(fit.t_grid, fit.T_values, fit.fitted(), fit.residuals()))
    rows.append(["summary", fit.slope, fit.c, fit.C])
    emit(args, "growth", rows)
    return 0


def cmd_selftest(args):
    from . import acceptance as A
    only = [v.strip() for v in args.only.split(",")] if args.only else None
    try:
        chosen = A.select(only)
    except KeyError as e:
        raise UsageError(str(e))
    results = []
    for num, _, _ in chosen:
        r = A.run_criterion(num, samples=args.samples, seed=args.seed)
        print(r.line(), flush=True)
        results.append(r)
    if args.out:
        emit(args, "selftest", [[r.number, r.name, "pass" if r.passed else "fail", round(r.seconds, 3), r.detail]
                                for r in results])
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"selftest failed: criterion {failed[0].number} {failed[0].name}", file=sys.stderr)
        return 2
    return 0


# parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hconsist", description="Consistency-bound transformations and checks.")
    ap.add_argument("--version", action="version", version=f"hconsist {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="command")

    def add(name, fn, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=fn)
        return p

    p = add("transform", cmd_transform, "evaluate a catalog transformation")
    _curve_flags(p)
    p.add_argument("--t", default=None, help="t value(s), comma-separated")
    p.add_argument("--t-grid", type=int, default=101)

    p = add("invert", cmd_invert, "invert a catalog transformation")
    _curve_flags(p)
    p.add_argument("--s", required=True, help="value(s) to invert, comma-separated")
    p.add_argument("--relaxed", action="store_true", help="use the relaxed closed-form inverse")

    p = add("solve", cmd_solve, "numerical transformation from the inf-sup form")
    p.add_argument("--family", choices=["comp", "cstnd", "binary"], required=True)
    p.add_argument("--phi", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--bounded", type=float, default=None, help="score bound Lambda")
    p.add_argument("--form", choices=["table", "exact"], default="table")
    p.add_argument("--t", default=None)
    p.add_argument("--t-grid", type=int, default=51)
    p.add_argument("--tau-grid", type=int, default=512)
    p.add_argument("--refine", type=int, default=60)
    p.add_argument("--tau-cap", type=float, default=10.0)
    p.add_argument("--p-handling", choices=["analytic_endpoint", "grid"], default="analytic_endpoint")

    p = add("verify", cmd_verify, "check a bound on a finite-support distribution")
    p.add_argument("--quad", default=None, help="registered quadruple id")
    p.add_argument("--list", action="store_true", help="list registered quadruples")
    p.add_argument("--dist", default=None)
    p.add_argument("--hyp", default=None, help="one score row per support point")
    p.add_argument("--W", type=float, default=1.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--Lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--gap-mode", choices=["auto", "decoupled", "linear_1d_grid", "none"], default="auto")
    p.add_argument("--tol", type=float, default=1e-9)

    p = add("tightness", cmd_tightness, "tightness constructions")
    p.add_argument("--kind", choices=["comp-sum", "binary"], default="comp-sum")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--beta", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--loss", choices=["hinge", "sigmoid", "rho_margin", "logistic", "exponential", "quadratic"],
                   default="hinge")
    p.add_argument("--t", default="0.1,0.5,0.9")
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=100_000)

    p = add("witness", cmd_witness, "negative-result witnesses")
    p.add_argument("--kind", choices=["adversarial-convex", "max-loss"], required=True)
    p.add_argument("--phi", default="hinge")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--W", type=float, default=1.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--verbose", action="store_true")

    p = add("gap", cmd_gap, "minimizability-gap bounds and their ordering")
    p.add_argument("--Lam", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--R-star", type=float, required=True, help="best-in-class tau=0 risk")
    p.add_argument("--taus", default="0,1,1.5,2")

    p = add("simulate", cmd_simulate, "Monte-Carlo risks on the truncated-normal mixtures")
    p.add_argument("--scenario", choices=["nonadversarial", "adversarial"], default="nonadversarial")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--sigmas", default=None, help="descending comma-separated list")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--shards", type=int, default=16)
    p.add_argument("--losses", default=None, help="comma-separated loss ids")

    p = add("growth", cmd_growth, "log-log growth fit near zero")
    p.add_argument("--curve", default="binary-logistic",
                   help="one of: " + ", ".join(("binary-logistic", "binary-exponential", "binary-squared-hinge",
                                               "comp-sum-tau=1", "constrained-exponential", "binary-hinge",
                                               "binary-rho-margin", "comp-sum-mae", "constrained-hinge")))
    p.add_argument("--phi", default=None, help="binary auxiliary id (overrides --curve)")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--t-min", type=float, default=1e-4)
    p.add_argument("--t-max", type=float, default=1e-2)
    p.add_argument("--points", type=int, default=41)

    p = add("selftest", cmd_selftest, "run the acceptance criteria")
    p.add_argument("--only", default=None, help="criterion numbers or names, comma-separated")
    p.add_argument("--samples", type=int, default=1_000_000)
    return ap


def _config_path(rest: list):
    for i, tok in enumerate(rest):
        if tok == "--config" and i + 1 < len(rest):
            return rest[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    subs = ap._subparsers._group_actions[0].choices
    try:
        command = next((a for a in argv if not a.startswith("-")), None)
        if command in subs:
            path = _config_path(argv[argv.index(command) + 1:])
            if path:
                extra = config_argv(subs[command], read_config(path, command), path)
                i = argv.index(command)
                argv = argv[:i + 1] + extra + argv[i + 1:]
    except UsageError as e:
        print(f"hconsist: {e}", file=sys.stderr)
        return 1
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    if not getattr(args, "command", None):
        ap.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as e:
        print(f"hconsist: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, LookupError, OSError, ArithmeticError) as e:
        print(f"hconsist {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
