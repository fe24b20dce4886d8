"""Command line driver: ``neutronk {keff,oracle,validate,report,rerun}``.

Every run writes its results plus a ``manifest.json`` holding the config
hash, seed, argv and worker count, enough to replay it bit for bit.
Exit codes: 0 ok, 1 validation or physics failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RUN_KEYS, dump_config, load_config_file
from .errors import AssumptionError, ConfigError, ExtinctionError, NeutronkError, PopulationCapError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

METHOD_DEFAULTS = {
    "power": {"inactive": 20, "active": 100},
    "superhistory": {"inactive": 2, "active": 20},
    "collision": {"inactive": 20, "active": 100},
    "log-growth": {},
    "lambda": {},
}
DEFAULTS = {"method": "power", "population": 10_000, "L": 10, "histories": 100_000,
            "nmax_generations": 10, "t_max": 20.0, "workers": None, "out_dir": "neutronk-out",
            "tune": None, "nx": None, "nmu": None, "require": None}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neutronk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"neutronk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML configuration file")
        sp.add_argument("--seed", type=int, default=None,
                        help="base seed (falls back to [run].seed, then $KEFF_SEED)")
        sp.add_argument("--workers", type=int, default=None, help="worker threads")
        sp.add_argument("--out-dir", dest="out_dir", default=None)

    k = sub.add_parser("keff", help="run a Monte Carlo eigenvalue estimator")
    common(k)
    k.add_argument("--method", choices=list(METHOD_DEFAULTS), default=None)
    k.add_argument("--population", type=int, default=None)
    k.add_argument("--inactive", type=int, default=None)
    k.add_argument("--active", type=int, default=None)
    k.add_argument("--L", dest="L", type=int, default=None, help="superhistory length")
    k.add_argument("--histories", type=int, default=None)
    k.add_argument("--nmax-generations", dest="nmax_generations", type=int, default=None)
    k.add_argument("--t-max", dest="t_max", type=float, default=None)
    k.add_argument("--tune", type=float, default=None,
                   help="first rescale fission yields so the oracle gives this k")
    k.add_argument("--nx", type=int, default=None)
    k.add_argument("--nmu", type=int, default=None)

    o = sub.add_parser("oracle", help="deterministic slab k and eigenvectors")
    common(o)
    o.add_argument("--nx", type=int, default=None)
    o.add_argument("--nmu", type=int, default=None)
    o.add_argument("--tune", type=float, default=None, help="target k; writes tuned.toml")

    v = sub.add_parser("validate", help="print the assumption report")
    v.add_argument("--config", required=True)
    v.add_argument("--require", action="append", default=None,
                   help="assumptions that must hold, e.g. h3star,h5")

    r = sub.add_parser("report", help="plot convergence traces of a finished run")
    r.add_argument("--out-dir", dest="out_dir", required=True)

    rr = sub.add_parser("rerun", help="replay a run from its manifest and compare outputs")
    rr.add_argument("manifest")
    rr.add_argument("--out-dir", dest="out_dir", default=None)
    rr.add_argument("--workers", type=int, default=None)
    return p


def _settings(args, cfg) -> dict:
    """Defaults < [run] section < command-line flags."""
    s = dict(DEFAULTS)
    s.update({k: v for k, v in cfg.run.items() if k in RUN_KEYS})
    for key in RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    for key, val in METHOD_DEFAULTS.get(s["method"], {}).items():
        s.setdefault(key, val)
        if s.get(key) is None:
            s[key] = val
    seed = s.get("seed")
    if seed is None and os.environ.get("KEFF_SEED"):
        try:
            seed = int(os.environ["KEFF_SEED"])
        except ValueError:
            raise UsageError("KEFF_SEED must be an integer") from None
    if seed is None:
        seed = secrets.randbits(63)
    s["seed"] = int(seed)
    return s


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(out, argv, cfg, settings, workers, t0, results, outputs, **extra):
    man = {
        "command": argv[0] if argv else None,
        "argv": list(argv),
        "config_path": str(Path(settings["config_path"]).resolve()),
        "config_sha256": cfg.sha256,
        "seed": settings["seed"],
        "workers": workers,
        "version": __version__,
        "wall_clock_s": round(time.perf_counter() - t0, 3),
        "results": results,
        "outputs": [{"file": Path(p).name, "sha256": _sha(p)} for p in outputs],
    }
    man.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True, default=_plain) + "\n")
    return path


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def _record(est, settings, cfg):
    d = est.as_record()
    d["extras"] = {k: v for k, v in d["extras"].items() if k not in ("cycle_k", "cycle_c")}
    d.update(seed=settings["seed"], config_sha256=cfg.sha256)
    return d


def _tuned(cfg, target, settings):
    from .oracle import tune_to_k

    nx = settings.get("nx") or cfg.oracle["n_x"]
    nmu = settings.get("nmu") or cfg.oracle["n_mu"]
    return tune_to_k(cfg.model, target, tol=1e-3, n_x=nx, n_mu=nmu)


def cmd_keff(args, argv) -> int:
    from . import estimators as E
    from .nbp import uniform_source
    from .parallel import set_workers

    t0 = time.perf_counter()
    cfg = load_config_file(args.config)
    s = _settings(args, cfg)
    s["config_path"] = args.config
    workers = set_workers(s["workers"])
    model = cfg.model
    extra = {}
    if s.get("tune") is not None:
        tr = _tuned(cfg, float(s["tune"]), s)
        model = tr.model
        extra["tune"] = {"target": s["tune"], "scale": tr.scale, "oracle_k": tr.k}
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    gen = np.random.default_rng(s["seed"])
    method = s["method"]
    outputs = []
    if method in ("power", "superhistory", "collision"):
        src = uniform_source(model, s["population"], gen)
        if method == "power":
            est, phi, eta = E.power_iteration_k(model, None, src, s["inactive"], s["active"],
                                                s["population"], gen)
            if not est.extinct:
                outputs += [phi.to_csv(out / "phi.csv"), eta.to_csv(out / "eta.csv")]
            cyc = est.extras["cycle_k"]
        elif method == "superhistory":
            est = E.superhistory_k(model, None, src, s["L"], s["active"], s["population"], gen,
                                   n_inactive=s["inactive"])
            cyc = est.extras["cycle_k"]
        else:
            est = E.collision_c_estimate(model, None, src, s["active"], s["population"], gen,
                                         n_inactive=s["inactive"])
            cyc = est.extras["cycle_c"]
        outputs.append(E.write_cycles(out / "cycles.csv", cyc, "c" if method == "collision" else "k"))
    else:
        src = uniform_source(model, s["histories"], gen)
        start = (src.pos, src.vel)
        if method == "log-growth":
            est = E.log_growth_k(model, None, start, s["nmax_generations"], s["histories"], gen)
        else:
            est = E.lambda_time_estimate(model, None, start, s["t_max"], s["histories"], gen)
    rec = _record(est, s, cfg)
    rec.update(method_flag=method, population=s["population"], L=s["L"] if method == "superhistory" else None)
    outputs.insert(0, E.write_records(out / "results.jsonl", [rec]))
    _manifest(out, argv, cfg, s, workers, t0, [rec], outputs, extinct=bool(est.extinct), **extra)
    status = "extinct" if est.extinct else f"{est.value:.6f} +- {est.std_error:.6f}"
    print(f"{method}: {status}  ({out / 'manifest.json'})")
    return EXIT_OK


def cmd_oracle(args, argv) -> int:
    from .estimators import write_records
    from .oracle import assemble, power_iterate, slab_from_model

    t0 = time.perf_counter()
    cfg = load_config_file(args.config)
    s = _settings(args, cfg)
    s["config_path"] = args.config
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    nx = args.nx or cfg.oracle["n_x"]
    nmu = args.nmu or cfg.oracle["n_mu"]
    model = cfg.model
    outputs = []
    extra = {}
    if args.tune is not None:
        tr = _tuned(cfg, args.tune, {"nx": nx, "nmu": nmu})
        model = tr.model
        tuned = out / "tuned.toml"
        tuned.write_text(dump_config(model, cfg.oracle, cfg.run))
        outputs.append(tuned)
        extra["tune"] = {"target": args.tune, "scale": tr.scale}
    op = assemble(slab_from_model(model), nx, nmu, cfg.oracle.get("tol", 1e-10))
    res = power_iterate(op)
    outputs.insert(0, res.to_csv(out / "oracle.csv"))
    rec = {"method": "oracle", "value": res.k, "n_x": nx, "n_mu": nmu,
           "iterations": res.iterations, "config_sha256": cfg.sha256}
    outputs.insert(0, write_records(out / "results.jsonl", [rec]))
    _manifest(out, argv, cfg, s, 1, t0, [rec], outputs, **extra)
    print(f"oracle k = {res.k:.8f}  (n_x={nx}, n_mu={nmu})")
    return EXIT_OK


def cmd_validate(args, argv) -> int:
    cfg = load_config_file(args.config)
    rep = cfg.model.report
    print(rep)
    print(rep.full())
    wanted = []
    for item in args.require or []:
        wanted += [w.strip() for w in item.split(",") if w.strip()]
    failed = []
    for w in wanted:
        name = w.lower().replace("*", "star")
        if name not in ("h1", "h2", "h3", "h3star", "h4", "h5"):
            raise UsageError(f"unknown assumption {w!r}")
        if not rep.holds(name):
            failed.append(w)
    if failed:
        print("violated: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_report(args, argv) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(args.out_dir)
    cyc = out / "cycles.csv"
    if not cyc.exists():
        raise UsageError(f"{cyc} not found; run keff with a cycle-based method first")
    data = np.loadtxt(cyc, delimiter=",", skiprows=1, ndmin=2)
    name = cyc.read_text().splitlines()[0].split(",")[1]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(data[:, 0], data[:, 1], lw=0.8)
    ax.plot(data[:, 0], np.cumsum(data[:, 1]) / data[:, 0], lw=1.2, label="running mean")
    ax.set_xlabel("cycle")
    ax.set_ylabel(name)
    ax.legend()
    fig.tight_layout()
    png = out / "convergence.png"
    fig.savefig(png, dpi=120)
    print(png)
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    man_path = Path(args.manifest)
    man = json.loads(man_path.read_text())
    old_dir = man_path.parent
    new_dir = Path(args.out_dir or (str(old_dir) + "-rerun"))
    replay = list(man["argv"])
    replay = _strip_flag(replay, "--out-dir")
    replay = _strip_flag(replay, "--seed")
    replay = _strip_flag(replay, "--config")
    replay += ["--config", man["config_path"], "--seed", str(man["seed"]), "--out-dir", str(new_dir)]
    if args.workers is not None:
        replay = _strip_flag(replay, "--workers") + ["--workers", str(args.workers)]
    if _sha(man["config_path"]) != man["config_sha256"]:
        print("config file changed since the original run", file=sys.stderr)
        return EXIT_FAIL
    code = main(replay)
    if code != EXIT_OK:
        return code
    mismatched = [o["file"] for o in man["outputs"] if _sha(new_dir / o["file"]) != o["sha256"]]
    if mismatched:
        print("outputs differ: " + ", ".join(mismatched), file=sys.stderr)
        return EXIT_FAIL
    print(f"reproduced {len(man['outputs'])} output file(s) bit for bit")
    return EXIT_OK


def _strip_flag(argv, flag):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == flag:
            skip = True
            continue
        if a.startswith(flag + "="):
            continue
        out.append(a)
    return out


COMMANDS = {"keff": cmd_keff, "oracle": cmd_oracle, "validate": cmd_validate,
            "report": cmd_report, "rerun": cmd_rerun}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args, argv)
    except (UsageError, ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssumptionError, PopulationCapError, ExtinctionError, NeutronkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
