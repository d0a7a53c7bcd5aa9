"""Command-line front end.

Every command accepts ``--model`` (a model file or an inline preset such as
``logistic:mu=0.5,kappa=0.1,sigma0=1.2``), ``--param KEY=VALUE`` overrides,
``--tol``, ``--seed``, ``--out`` and ``--threads``. ``--param`` values win over
keys in the model file or the inline preset.

With ``--out`` the result is written there and a JSON run manifest to
``<out>.manifest.json``; ``replay <manifest>`` re-runs it. Without ``--out``
results go to stdout and a manifest is written only if ``--manifest`` is
given.

Exit codes: 0 success, 1 usage or configuration error, 2 assumption
failure, 3 verification failure, 4 degenerate sampling.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import metadata

import numpy as np

from .conditioning import condition_to_infinity, conditioned_drift
from .diffusion import load_model
from .errors import AssumptionViolated, ConfigInvalid, DoobCondError, NoAcceptedPaths
from .montecarlo import (
    KillCondSetup,
    SimConfig,
    exact_sampler,
    hitting_probability_mc,
    importance_weights,
    ks_statistic,
    mean_and_se,
    simulate_killed_conditioned,
    simulate_model,
)
from .scale import build_scale_speed, check_assumptions, hitting_probability

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_VERIFY, EXIT_DEGENERATE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for assumption failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


def fmt(v):
    return f"{v:.17g}"


def parse_grid(text):
    """``lo:hi:n`` -> n equally spaced points from lo to hi."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigInvalid(f"grid must be lo:hi:n, got {text!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise ConfigInvalid(f"grid needs finite lo < hi, got {text!r}")
    if n < 2:
        raise ConfigInvalid("grid needs n >= 2")
    return np.linspace(lo, hi, n)


def _overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigInvalid(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _spec(args):
    return load_model(args.model, _overrides(args.param))


def _require_assumptions(spec, tol):
    report = check_assumptions(spec, tol)
    if not report.passed:
        raise AssumptionViolated("\n".join(report.lines()))
    return report


def _csv(header, columns):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in zip(*columns)]
    return "\n".join(lines) + "\n"


# -- commands --------------------------------------------------------------


def cmd_scale(args):
    spec = _spec(args)
    x = parse_grid(args.grid)
    _require_assumptions(spec, args.tol)
    ss = build_scale_speed(spec, args.tol)
    cols = [x, ss.B(x), ss.s_prime(x), ss.s(x), ss.m_prime(x)]
    return _csv(["x", "B", "s_prime", "s", "m_prime"], cols), {"model": spec.to_config(), "grid": args.grid}


def cmd_condition(args):
    spec = _spec(args)
    x = parse_grid(args.grid)
    _require_assumptions(spec, args.tol)
    ss = build_scale_speed(spec, args.tol)
    bt = conditioned_drift(ss, spec, x)
    b = spec.drift(x)
    return _csv(["x", "b", "b_tilde", "correction"], [x, b, bt, bt - b]), {
        "model": spec.to_config(), "grid": args.grid}


def _sim_config(args, spec, t_end, n_paths):
    x0 = spec.w if args.x0 is None else args.x0
    return SimConfig(
        x0=x0, t_end=t_end, dt=args.dt, n_paths=n_paths, seed=args.seed,
        lower_guard=args.lower_guard, explosion_cap=args.cap,
        record=getattr(args, "record", "marginal_only"),
    ).resolve(spec.ell)


def cmd_simulate(args):
    spec = _spec(args)
    cfg = _sim_config(args, spec, args.t, args.paths)
    model = spec
    if args.conditioned:
        model = condition_to_infinity(spec, args.tol)
    ens = simulate_model(model, cfg, threads=args.threads)
    text = ens.to_csv() if cfg.record == "full_path" else ens.marginal().to_csv()
    counts = ens.counts()
    m = ens.marginal()
    summary = " ".join(f"{k}={v}" for k, v in counts.items())
    summary += f" mean={fmt(m.mean())}" if m.n else ""
    return text, {"model": spec.to_config(), "sim": cfg.as_dict(),
                  "conditioned": bool(args.conditioned), "summary": summary}


def cmd_verify(args):
    """Rejection sampler vs the conditioned law, plus weighted-vs-direct checks."""
    spec = _spec(args)
    _require_assumptions(spec, args.tol)
    cfg = _sim_config(args, spec, args.t, args.paths)
    setup = KillCondSetup(lam=args.lam, a=args.a, t_obs=args.t)
    lines = [
        f"model={spec.name}",
        f"lambda={fmt(args.lam)}",
        f"a={fmt(args.a)}",
        f"t={fmt(args.t)}",
        f"x0={fmt(cfg.x0)}",
        f"dt={fmt(cfg.dt)}",
        f"paths={cfg.n_paths}",
        f"seed={cfg.seed}",
    ]
    config = {"model": spec.to_config(), "sim": cfg.as_dict(), "lambda": args.lam, "a": args.a,
              "ks_max": args.ks_max, "direct_paths": args.direct_paths}
    try:
        res = simulate_killed_conditioned(spec, setup, cfg, threads=args.threads)
    except NoAcceptedPaths as exc:
        lines += [f"accepted=0 total={cfg.n_paths} acc_prob=0", f"error={exc}", "verdict=degenerate"]
        raise _Degenerate("\n".join(lines) + "\n", config) from None
    lines.append(res.summary_line)

    # direct sample of the conditioned law at t
    direct_seed = cfg.seed + 1
    if spec.preset in ("bm_drift", "gbm"):
        direct = exact_sampler(spec, cfg.x0, args.t, args.direct_paths, direct_seed, conditioned=True)
        lines.append("direct=exact")
    else:
        cd = condition_to_infinity(spec, args.tol)
        dcfg = SimConfig(cfg.x0, args.t, cfg.dt, args.direct_paths, direct_seed,
                         cfg.lower_guard, cfg.explosion_cap)
        direct = simulate_model(cd, dcfg, threads=args.threads).marginal()
        lines.append("direct=euler")
    ks = ks_statistic(res.samples, direct)
    ks_ok = ks < args.ks_max
    lines += [f"ks={fmt(ks)}", f"ks_max={fmt(args.ks_max)}", f"ks_pass={str(ks_ok).lower()}"]

    # importance-weighted base paths vs direct sample
    ss = build_scale_speed(spec, args.tol)
    wcfg = SimConfig(cfg.x0, args.t, cfg.dt, args.direct_paths, cfg.seed + 2,
                     cfg.lower_guard, cfg.explosion_cap)
    xt, w = importance_weights(spec, ss, wcfg, threads=args.threads)
    c = cfg.x0
    big = cfg.x0 + 1.0
    tests = {
        "one": lambda z: np.ones_like(z),
        "above_x0": lambda z: (z > c).astype(float),
        "min_x0_plus_1": lambda z: np.minimum(z, big),
    }
    all_ok = ks_ok
    for name, g in tests.items():
        we, wse = mean_and_se(g(xt) * w)
        de, dse = mean_and_se(g(direct.samples))
        comb = math.hypot(wse, dse)
        ok = abs(we - de) <= 3.0 * comb if comb > 0 else we == de
        all_ok &= ok
        lines.append(f"weighted_{name}={fmt(we)} weighted_{name}_se={fmt(wse)} "
                     f"direct_{name}={fmt(de)} direct_{name}_se={fmt(dse)} "
                     f"delta_{name}={fmt(we - de)} pass_{name}={str(ok).lower()}")
    lines.append(f"verdict={'pass' if all_ok else 'fail'}")
    text = "\n".join(lines) + "\n"
    if not all_ok:
        raise _VerifyFailed(text, config)
    return text, config


def cmd_hitprob(args):
    spec = _spec(args)
    _require_assumptions(spec, args.tol)
    ss = build_scale_speed(spec, args.tol)
    p = hitting_probability(ss, args.y, args.z)
    lines = [f"y={fmt(args.y)}", f"z={fmt(args.z)}", f"p={fmt(p)}"]
    config = {"model": spec.to_config(), "y": args.y, "z": args.z}
    if args.mc_paths:
        guard = args.lower_guard
        cfg = SimConfig(args.y, args.horizon, args.dt, args.mc_paths, args.seed,
                        guard, max(args.z, args.y + 1.0))
        est, se = hitting_probability_mc(spec, args.y, args.z, cfg, threads=args.threads)
        lines += [f"p_mc={fmt(est)}", f"p_mc_se={fmt(se)}"]
        config["mc"] = {"paths": args.mc_paths, "horizon": args.horizon, "dt": args.dt,
                        "lower_guard": guard, "seed": args.seed}
    return "\n".join(lines) + "\n", config


def cmd_check(args):
    spec = _spec(args)
    report = check_assumptions(spec, args.tol)
    text = "\n".join(report.lines()) + "\n"
    if not report.passed:
        raise AssumptionViolated(text.rstrip("\n"))
    return text, {"model": spec.to_config()}


def cmd_replay(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = manifest.get("argv")
    if not isinstance(argv, list) or (argv and argv[0] == "replay"):
        raise ConfigInvalid("manifest has no replayable argv")
    return main(argv)


class _Degenerate(Exception):
    def __init__(self, text, config):
        super().__init__(text)
        self.text = text
        self.config = config


class _VerifyFailed(_Degenerate):
    pass


# -- parser ----------------------------------------------------------------


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--model", required=True, help="model file or preset[:k=v,...]")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="override a model key (repeatable)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--manifest", help="manifest path when writing to stdout")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (results do not depend on it)")
    return p


def _sim_flags(p, t=1.0, dt=0.01, paths=10000):
    p.add_argument("--x0", type=float, default=None, help="start (default: reference point w)")
    p.add_argument("--t", type=float, default=t)
    p.add_argument("--dt", type=float, default=dt)
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--lower-guard", type=float, default=None)
    p.add_argument("--cap", type=float, default=1e6, help="explosion cap")


def build_parser():
    parser = _Parser(prog="doobcond", description="Diffusions conditioned to drift to +infinity.")
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    p = sub.add_parser("scale", parents=[common], help="x,B,s_prime,s,m_prime table")
    p.add_argument("--grid", required=True, help="lo:hi:n")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("condition", parents=[common], help="x,b,b_tilde,correction table")
    p.add_argument("--grid", required=True, help="lo:hi:n")
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("simulate", parents=[common], help="simulate base or conditioned paths")
    _sim_flags(p)
    p.add_argument("--conditioned", action="store_true")
    p.add_argument("--record", choices=["marginal_only", "full_path"], default="marginal_only")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="rejection sampler vs conditioned law")
    _sim_flags(p, t=1.0, dt=0.05, paths=200000)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--a", type=float, default=8.0)
    p.add_argument("--ks-max", type=float, default=0.03)
    p.add_argument("--direct-paths", type=int, default=20000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("hitprob", parents=[common], help="P^y{T_z < inf}")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--mc-paths", type=int, default=0, help="add a Monte Carlo estimate")
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--lower-guard", type=float, default=None)
    p.set_defaults(func=cmd_hitprob)

    p = sub.add_parser("check", parents=[common], help="transience-to-ell criterion")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def _emit(args, argv, text, config, started):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    path = args.out + ".manifest.json" if args.out else args.manifest
    if path:
        manifest = {
            "command": args.command,
            "argv": argv,
            "config": config,
            "tol": args.tol,
            "seed": args.seed,
            "threads": args.threads,
            "version": _version(),
            "duration_s": round(time.time() - started, 6),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _join_values(argv):
    # "--grid -2:2:5" would otherwise be read as an option
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--grid":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--grid={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "replay":
        try:
            return cmd_replay(args)
        except (OSError, ValueError, DoobCondError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    started = time.time()
    try:
        text, config = args.func(args)
    except _VerifyFailed as exc:
        _emit(args, argv, exc.text, exc.config, started)
        return EXIT_VERIFY
    except _Degenerate as exc:
        _emit(args, argv, exc.text, exc.config, started)
        return EXIT_DEGENERATE
    except NoAcceptedPaths as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except AssumptionViolated as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigInvalid, SyntaxError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DoobCondError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(args, argv, text, config, started)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
