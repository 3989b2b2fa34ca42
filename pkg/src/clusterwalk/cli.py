"""
Command-line front end.

Every subcommand computes first and writes afterwards, so a run that fails
validation or hits a cap leaves the output directory untouched. Data goes to
files inside ``--out``; progress goes to stderr.
"""
import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, output
from .errors import ClusterWalkError, ParameterError
from .experiments import (beta_sweep, displacement_tail, entry_probe, escape_time,
                          estimate_exponent, geometric_floor, mean_sojourn_by_size,
                          sojourn_statistics)
from .lattice import (DEFAULT_GROWTH_CAP, BoxSpec, LazyEnvironment, check_dimension, check_probability,
                      check_subcritical, cluster_tail, label_clusters, sample_environment)
from .spectral import build_chain, edge_load_bound
from .walk import (RESTRICTIONS, KernelParams, box_size_arrays, continuize,
                   simulate_discrete)

log = logging.getLogger("clusterwalk")

SUBCOMMANDS = ("sample-env", "simulate", "gap", "exponent", "sweep", "escape", "sojourn",
               "entry-probe", "tail")
SCOPES = ("margin", "truncated")


@dataclass
class RunConfig:
    """All knobs of one run. ``n`` is a list so that ``gap`` and ``escape`` can sweep it."""

    subcommand: str = "simulate"
    p: float = 0.3
    d: int = 2
    n: list = None
    beta: float = 0.1
    beta_grid: list = field(default_factory=lambda: [0.0, 0.1, 1.0, 5.0])
    t_max: int = 1000
    replicas: int = 30
    seed: int = 0
    seeds: int = 1
    restriction: str = "selfloop"
    cluster_scope: str = "margin"
    margin: int = None
    out: str = "out"
    deterministic: bool = False
    allow_supercritical: bool = False
    continuous: bool = False
    samples: int = 1000
    delta: float = 0.5
    theta: float = 0.25
    epsilon: float = None
    workers: int = 1
    cap: int = DEFAULT_GROWTH_CAP

    def sizes(self, default):
        return list(self.n) if self.n else [default]

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ParameterError(f"unknown subcommand {self.subcommand!r}")
        check_probability(self.p)
        check_dimension(self.d)
        check_subcritical(self.p, self.d, self.allow_supercritical)
        KernelParams(self.beta, self.d)
        for b in self.beta_grid:
            KernelParams(b, self.d)
        for n in self.n or []:
            if n < 1:
                raise ParameterError(f"box side n must be at least 1, got {n}")
        if self.t_max < 0:
            raise ParameterError("t_max must be nonnegative")
        for name in ("replicas", "seeds", "samples", "workers", "cap"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")
        if self.restriction not in RESTRICTIONS:
            raise ParameterError(f"restriction must be one of {RESTRICTIONS}")
        if self.cluster_scope not in SCOPES:
            raise ParameterError(f"cluster scope must be one of {SCOPES}")
        if self.margin is not None and self.margin < 0:
            raise ParameterError("margin must be nonnegative")
        return self

    # --- flat key = value form ------------------------------------------

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, list):
                s = ",".join(repr(x) for x in v)
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        return cls(**parse_pairs(dict(_split_line(ln) for ln in text.splitlines()
                                      if ln.strip() and not ln.lstrip().startswith("#"))))

    def to_dict(self):
        return dataclasses.asdict(self)


def _split_line(line):
    if "=" not in line:
        raise ParameterError(f"config line without '=': {line!r}")
    k, v = line.split("=", 1)
    return k.strip().replace("-", "_"), v.strip()


_TYPES = {"p": float, "d": int, "n": "ints", "beta": float, "beta_grid": "floats",
          "t_max": int, "replicas": int, "seed": int, "seeds": int, "restriction": str,
          "cluster_scope": str, "margin": int, "out": str, "deterministic": bool,
          "allow_supercritical": bool, "continuous": bool, "samples": int, "delta": float,
          "theta": float, "epsilon": float, "workers": int, "cap": int, "subcommand": str}


def parse_pairs(raw):
    """Convert string (or already typed) values to the field types of :class:`RunConfig`."""
    out = {}
    for k, v in raw.items():
        if k not in _TYPES:
            raise ParameterError(f"unknown config key {k!r}")
        out[k] = _convert(_TYPES[k], v, k)
    return out


def _convert(kind, v, key):
    if v is None or (isinstance(v, str) and v.lower() == "none"):
        return None
    try:
        if kind == "ints":
            return [int(x) for x in (v.split(",") if isinstance(v, str) else v)]
        if kind == "floats":
            return [float(x) for x in (v.split(",") if isinstance(v, str) else v)]
        if kind is bool:
            if isinstance(v, bool):
                return v
            if v.lower() in ("true", "1", "yes"):
                return True
            if v.lower() in ("false", "0", "no"):
                return False
            raise ValueError(v)
        if kind is int and isinstance(v, str):
            return int(float(v)) if "e" in v.lower() else int(v)
        return kind(v)
    except (TypeError, ValueError):
        raise ParameterError(f"bad value for {key}: {v!r}") from None


def load_config_file(path):
    """Key-value config file, or the ``config`` block of a run manifest."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return parse_pairs(json.loads(text)["config"])
    return parse_pairs(dict(_split_line(ln) for ln in text.splitlines()
                            if ln.strip() and not ln.lstrip().startswith("#")))


# ----------------------------------------------------------------------------
# subcommands: each returns a list of (file name, writer) pairs


def _params(cfg):
    return KernelParams(cfg.beta, cfg.d)


def _env(cfg, n, seed):
    return sample_environment(cfg.p, BoxSpec(n, cfg.d), seed, margin=cfg.margin,
                              scope=cfg.cluster_scope)


def cmd_sample_env(cfg):
    n = cfg.sizes(32)[0]
    env = _env(cfg, n, cfg.seed)
    cmap = label_clusters(env)
    box_sizes = box_size_arrays(cmap, env.box)[0].ravel()
    log.info("sampled n=%d, open fraction %.4f, margin %d", n, env.open_fraction(), env.margin)
    return [("environment.txt", lambda p: output.write_snapshot(env, p)),
            ("cluster_histogram.csv",
             lambda p: output.write_csv(p, output.histogram_rows(box_sizes),
                                        output.HISTOGRAM_COLUMNS))]


def cmd_simulate(cfg):
    params = _params(cfg)
    if cfg.n:
        env = _env(cfg, cfg.n[0], cfg.seed)
        traj = simulate_discrete(env, params, cfg.t_max, cfg.seed,
                                 restriction=cfg.restriction)
    else:
        env = LazyEnvironment(cfg.p, cfg.seed, d=cfg.d)
        traj = simulate_discrete(env, params, cfg.t_max, cfg.seed, cap=cfg.cap)
    if cfg.continuous:
        traj = continuize(traj, cfg.seed)
    summary = output.trajectory_summary(traj)
    summary["continuous"] = cfg.continuous
    if cfg.continuous:
        summary["final_time"] = float(traj.times[-1])
    return [("trajectory.csv", lambda p: output.write_trajectory_csv(traj, p)),
            ("summary.json", lambda p: output.write_json(p, summary))]


GAP_COLUMNS = ["n", "seed", "d", "p", "beta", "lambda", "bound_one_over_A", "margin",
               "lambda_times_n2", "restriction"]


def cmd_gap(cfg):
    params = _params(cfg)
    records = []
    for n in cfg.sizes(8):
        box = BoxSpec(n, cfg.d)
        for seed in range(cfg.seed, cfg.seed + cfg.seeds):
            chain = build_chain(_env(cfg, n, seed), box, params, cfg.restriction)
            rep = edge_load_bound(chain)
            records.append(output.spectral_record(rep, cfg.p, seed))
            log.info("gap n=%d seed=%d: lambda=%.6g, 1/A=%.6g", n, seed, rep.gap, rep.bound)
    return [("spectral_report.json", lambda p: output.write_json(p, records)),
            ("gap_sweep.csv", lambda p: output.write_csv(p, records, GAP_COLUMNS))]


def _exponent_files(stem, estimates, cfg):
    rows = [r for est in estimates for r in est.rows()]
    summary = [{"beta": e.beta, "slope": e.slope, "stderr": e.stderr, "intercept": e.intercept,
                "fit_from_t": int(e.time_grid[e.fit_from]), "t_max": int(e.time_grid[-1]),
                "replicas": e.replicas, "seed": e.seed, "p": e.p, "d": e.d} for e in estimates]
    title = f"max displacement, p={cfg.p:g}, d={cfg.d}"
    series = [output.estimate_series(e) for e in estimates]
    return [(f"{stem}.csv", lambda p: output.write_csv(p, rows, output.SWEEP_COLUMNS)),
            (f"{stem}.json", lambda p: output.write_json(p, summary)),
            (f"{stem}.svg", lambda p: output.loglog_svg(series, p, title,
                                                        deterministic=cfg.deterministic))]


def cmd_exponent(cfg):
    est = estimate_exponent(cfg.p, cfg.d, cfg.beta, cfg.t_max, cfg.replicas, cfg.seed,
                            workers=cfg.workers, cap=cfg.cap,
                            override=cfg.allow_supercritical)
    log.info("beta=%g: slope %.4f +- %.4f", est.beta, est.slope, est.stderr)
    return _exponent_files("exponent", [est], cfg)


def cmd_sweep(cfg):
    ests = beta_sweep(cfg.p, cfg.d, cfg.beta_grid, cfg.t_max, cfg.replicas, cfg.seed,
                      workers=cfg.workers, cap=cfg.cap, override=cfg.allow_supercritical)
    return _exponent_files("sweep", ests, cfg)


def cmd_escape(cfg):
    params = _params(cfg)
    summaries, rows = [], []
    for n in cfg.sizes(16):
        env = _env(cfg, n, cfg.seed)
        s = escape_time(env, BoxSpec(n, cfg.d), params, cfg.replicas, cfg.seed, cfg.restriction)
        log.info("escape n=%d: median/n^2 = %.4f", n, s.median_over_n2)
        summaries.append({"n": n, "radius": s.radius, "median": s.median, "q25": s.q25,
                          "q75": s.q75, "median_over_n2": s.median_over_n2,
                          "censored": s.censored, "censor_at": s.censor_at,
                          "pi_far": s.pi_far, "far_fraction": s.far_fraction,
                          "replicas": cfg.replicas, "seed": cfg.seed, "beta": cfg.beta})
        rows.extend({"n": n, "replica": r, "time": int(t)} for r, t in enumerate(s.times))
    return [("escape.json", lambda p: output.write_json(p, summaries)),
            ("escape_times.csv", lambda p: output.write_csv(p, rows, ["n", "replica", "time"]))]


SOJOURN_COLUMNS = ["replica", "visit_index", "cluster_label", "cluster_size", "entry_time",
                   "sojourn", "censored"]


def cmd_sojourn(cfg):
    params = _params(cfg)
    records, rows = [], []
    for r in range(cfg.replicas):
        env = LazyEnvironment(cfg.p, cfg.seed, d=cfg.d, stream=r)
        traj = simulate_discrete(env, params, cfg.t_max, cfg.seed, walker=r, cap=cfg.cap)
        if cfg.continuous:
            traj = continuize(traj, cfg.seed, stream=r)
        recs = sojourn_statistics(traj)
        records.extend(recs)
        rows.extend(dict(dataclasses.asdict(x), replica=r) for x in recs)
    by_size = [{"cluster_size": s, "mean_sojourn": m, "count": c,
                "geometric_floor": geometric_floor(s, cfg.beta, cfg.d)}
               for s, (m, c) in mean_sojourn_by_size(records).items()]
    return [("sojourns.csv", lambda p: output.write_csv(p, rows, SOJOURN_COLUMNS)),
            ("sojourn_by_size.csv",
             lambda p: output.write_csv(p, by_size, ["cluster_size", "mean_sojourn", "count",
                                                     "geometric_floor"]))]


def cmd_entry_probe(cfg):
    n = cfg.sizes(1024)[0]
    res = entry_probe(cfg.p, cfg.d, n, cfg.delta, cfg.beta, cfg.seed, theta=cfg.theta,
                      epsilon=cfg.epsilon, replicas=cfg.replicas, cap=cfg.cap,
                      override=cfg.allow_supercritical)
    cols = (["replica", "step_index", "tau"] + [f"x{i + 1}" for i in range(cfg.d)]
            + ["cluster_size", "found_big", "delta", "n"])
    rows = []
    for r in res.records:
        row = {"replica": r.replica, "step_index": r.step_index, "tau": r.tau,
               "cluster_size": r.cluster_size, "found_big": int(r.found_big),
               "delta": r.delta, "n": r.n}
        row.update({f"x{i + 1}": v for i, v in enumerate(r.site)})
        rows.append(row)
    summary = {"n": n, "d": cfg.d, "p": cfg.p, "beta": cfg.beta, "delta": cfg.delta,
               "theta": cfg.theta, "seed": cfg.seed, "replicas": cfg.replicas,
               "steps": len(res.records), "frequency": res.frequency,
               "threshold": res.threshold, "path_bound": res.path_bound,
               "epsilon": res.epsilon, "eps_bound": res.eps_bound}
    log.info("entry probe: %d steps, frequency %.4f, bound %.4g", len(rows), res.frequency,
             res.path_bound)
    return [("entry_probe.csv", lambda p: output.write_csv(p, rows, cols)),
            ("entry_probe.json", lambda p: output.write_json(p, summary))]


def cmd_tail(cfg):
    stats = cluster_tail(cfg.p, cfg.d, cfg.samples, cfg.seed, cap=cfg.cap,
                         override=cfg.allow_supercritical)
    summary = {"p": cfg.p, "d": cfg.d, "samples": cfg.samples, "seed": cfg.seed,
               "fitted_slope": stats.fitted_slope, "r_squared": stats.r_squared,
               "cap_hits": stats.cap_hits}
    if cfg.epsilon is not None:
        tf = displacement_tail(cfg.p, cfg.d, cfg.beta, cfg.t_max, cfg.replicas, cfg.epsilon,
                               cfg.seed, cap=cfg.cap, override=cfg.allow_supercritical)
        summary["displacement"] = {"t": tf.t, "epsilon": tf.epsilon, "threshold": tf.threshold,
                                   "hits": tf.hits, "replicas": tf.replicas,
                                   "frequency": tf.frequency, "beta": cfg.beta}
    return [("tail.csv", lambda p: output.write_csv(p, output.histogram_rows(stats.sizes),
                                                    output.HISTOGRAM_COLUMNS)),
            ("tail.json", lambda p: output.write_json(p, summary))]


COMMANDS = {"sample-env": cmd_sample_env, "simulate": cmd_simulate, "gap": cmd_gap,
            "exponent": cmd_exponent, "sweep": cmd_sweep, "escape": cmd_escape,
            "sojourn": cmd_sojourn, "entry-probe": cmd_entry_probe, "tail": cmd_tail}


# ----------------------------------------------------------------------------
# argument handling


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    a = common.add_argument
    a("--config", help="key = value file or a previous manifest.json")
    a("--p", type=float, help="site open probability")
    a("--d", type=int, help="dimension (1, 2 or 3)")
    a("--n", type=int, nargs="+", help="box side(s)")
    a("--beta", type=float, help="attraction strength")
    a("--betas", "--beta-grid", dest="beta_grid", type=float, nargs="+",
      help="beta values for sweep")
    a("--t-max", dest="t_max", type=int, help="number of walk steps")
    a("--replicas", type=int)
    a("--seed", type=int)
    a("--seeds", type=int, help="number of consecutive seeds (gap)")
    a("--samples", type=int, help="cluster growths (tail)")
    a("--restriction", choices=RESTRICTIONS)
    a("--cluster-scope", dest="cluster_scope", choices=SCOPES)
    a("--margin", type=int)
    a("--delta", type=float)
    a("--theta", type=float)
    a("--epsilon", type=float)
    a("--workers", type=int)
    a("--cap", type=int, help="cluster growth cap in sites")
    a("--out", help="output directory")
    a("--deterministic", action="store_true", help="omit timestamps from outputs")
    a("--continuous", action="store_true", help="continuize the walk")
    a("--allow-supercritical", dest="allow_supercritical", action="store_true",
      help="disable the subcritical guard on p")
    a("-v", "--verbose", action="count")
    parser = argparse.ArgumentParser(prog="clusterwalk",
                                     description="Cluster-attracted random walk experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__[4:].replace("_", " "))
    return parser


def resolve_config(ns):
    opts = vars(ns).copy()
    opts.pop("verbose", None)
    merged = {}
    path = opts.pop("config", None)
    if path is not None:
        merged.update(load_config_file(path))
    merged.update(opts)
    return RunConfig(**merged).validate()


def run(cfg):
    """Execute one configured run; returns the paths written (manifest last)."""
    started = time.time()
    outputs = COMMANDS[cfg.subcommand](cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, write in outputs:
        path = out / name
        write(path)
        written.append(path)
    man = output.write_manifest(out, cfg.to_dict(), written, __version__, started,
                                cfg.deterministic)
    return written + [man]


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    verbose = getattr(ns, "verbose", None) or 0
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else
                        logging.WARNING)
    try:
        cfg = resolve_config(ns)
        for path in run(cfg):
            log.info("wrote %s", path)
    except ClusterWalkError as err:
        print(f"clusterwalk: error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"clusterwalk: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
