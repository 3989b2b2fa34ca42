"""File formats: environment snapshots, CSV tables, JSON reports, manifests, SVG plots."""
import csv
import hashlib
import json
import math
import time
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import ParameterError
from .lattice import BoxSpec, Environment

SNAPSHOT_MAGIC = "# clusterwalk-environment v1"
MANIFEST_SCHEMA = "clusterwalk-manifest/1"


# ----------------------------------------------------------------------------
# environment snapshots
#
# line 1: magic; line 2: space separated key=value header (d n p seed margin
# stream scope); then the status bits in row-major order, one line per run
# of the last axis.


def write_snapshot(env, path):
    header = {"d": env.d, "n": env.box.n, "p": repr(float(env.p)), "seed": env.seed,
              "margin": env.margin, "stream": env.stream, "scope": env.scope}
    flat = env.status.reshape(-1, env.status.shape[-1])
    with open(path, "w") as fh:
        fh.write(SNAPSHOT_MAGIC + "\n")
        fh.write(" ".join(f"{k}={v}" for k, v in header.items()) + "\n")
        for row in flat:
            fh.write("".join("1" if b else "0" for b in row) + "\n")


def read_snapshot(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ParameterError(f"{path} is not an environment snapshot")
    header = dict(kv.split("=", 1) for kv in lines[1].split())
    d, n, margin = int(header["d"]), int(header["n"]), int(header["margin"])
    side = n + 2 * margin
    bits = np.array([[c == "1" for c in row] for row in lines[2:]], dtype=np.uint8)
    if bits.size != side**d:
        raise ParameterError(f"snapshot holds {bits.size} sites, expected {side**d}")
    seed = None if header["seed"] == "None" else int(header["seed"])
    return Environment(BoxSpec(n, d), bits.reshape((side,) * d), p=float(header["p"]), seed=seed,
                       margin=margin, stream=int(header.get("stream", 0)),
                       scope=header.get("scope", "margin"))


# ----------------------------------------------------------------------------
# tables


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def histogram_rows(sizes):
    """Rows ``(threshold_N, count, frequency)`` with count = #{size > N}."""
    sizes = np.asarray(sizes)
    total = max(sizes.size, 1)
    top = int(sizes.max()) if sizes.size else 0
    return [{"threshold_N": N, "count": int(np.count_nonzero(sizes > N)),
             "frequency": np.count_nonzero(sizes > N) / total} for N in range(top + 1)]


HISTOGRAM_COLUMNS = ["threshold_N", "count", "frequency"]
SWEEP_COLUMNS = ["beta", "p", "d", "t", "mean_log_maxdisp", "slope", "stderr", "replicas", "seed"]


def trajectory_rows(traj):
    md = traj.max_displacement
    for k in range(len(traj)):
        row = {"step_or_time": traj.times[k].item()}
        for i in range(traj.d):
            row[f"x{i + 1}"] = int(traj.positions[k, i])
        row["cluster_size_at_site"] = int(traj.sizes[k])
        row["max_disp"] = int(md[k])
        yield row


def trajectory_columns(d):
    return ["step_or_time"] + [f"x{i + 1}" for i in range(d)] + ["cluster_size_at_site", "max_disp"]


def write_trajectory_csv(traj, path):
    write_csv(path, trajectory_rows(traj), trajectory_columns(traj.d))


def trajectory_summary(traj):
    m = traj.meta
    md = traj.max_displacement
    return {"seed": m.get("seed"), "beta": m.get("beta"), "p": m.get("p"), "d": traj.d,
            "t_max": m.get("t_max"), "final_max_disp": int(md[-1]) if len(md) else 0}


def spectral_record(report, p, seed):
    return {"n": report.n, "d": report.d, "p": p, "beta": report.beta, "seed": seed,
            "lambda": report.gap, "bound_one_over_A": report.bound,
            "worst_edge": [list(report.worst_edge[0]), list(report.worst_edge[1])],
            "lambda_times_n2": report.lambda_times_n2, "margin": report.margin,
            "restriction": report.restriction, "approximate": report.approximate}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ----------------------------------------------------------------------------
# manifests


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config, outputs, version, started=None, deterministic=False):
    out_dir = Path(out_dir)
    man = {"schema": MANIFEST_SCHEMA, "version": version, "config": config,
           "outputs": [{"path": Path(p).name, "sha256": sha256(p)} for p in outputs]}
    if not deterministic:
        man["wall_clock_seconds"] = None if started is None else time.time() - started
        man["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    path = out_dir / "manifest.json"
    write_json(path, man)
    return path


# ----------------------------------------------------------------------------
# SVG


def loglog_svg(series, path, title="", reference_slope=0.5, deterministic=False,
               width=640, height=440):
    """
    Log-log plot of ``(t, mean log M(t))`` series with fitted lines.

    ``series`` is a list of dicts with keys ``label``, ``t``, ``logm``,
    ``slope``, ``intercept``, ``fit_from``. A dashed line of slope
    ``reference_slope`` is drawn through the first point of the first series.
    """
    pad_l, pad_r, pad_t, pad_b = 70, 170, 40, 50
    xs = np.concatenate([np.log(np.asarray(s["t"], float)) for s in series])
    ys = np.concatenate([np.asarray(s["logm"], float) for s in series])
    x0, x1 = xs.min(), xs.max()
    y0, y1 = min(ys.min(), 0.0), ys.max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * (width - pad_l - pad_r)

    def py(y):
        return height - pad_b - (y - y0) / (y1 - y0) * (height - pad_t - pad_b)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    if not deterministic:
        out.append(f"<!-- generated {time.strftime('%Y-%m-%dT%H:%M:%S')} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
               f"{escape(title)}</text>")
    bx, by = px(x0), py(y0)
    out.append(f'<line x1="{bx:.1f}" y1="{by:.1f}" x2="{px(x1):.1f}" y2="{by:.1f}" stroke="black"/>')
    out.append(f'<line x1="{bx:.1f}" y1="{by:.1f}" x2="{bx:.1f}" y2="{py(y1):.1f}" stroke="black"/>')
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{px(xv):.1f}" y="{by + 18:.1f}" text-anchor="middle" '
                   f'font-size="11">{xv:.2f}</text>')
        out.append(f'<text x="{bx - 8:.1f}" y="{py(yv) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{yv:.2f}</text>')
    out.append(f'<text x="{(bx + px(x1)) / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-size="12">log t</text>')
    out.append(f'<text x="16" y="{(by + py(y1)) / 2:.1f}" font-size="12" '
               f'transform="rotate(-90 16 {(by + py(y1)) / 2:.1f})" text-anchor="middle">'
               f"mean log max displacement</text>")
    s0 = series[0]
    rx = np.log(float(s0["t"][0]))
    ry = float(s0["logm"][0])
    out.append(f'<line x1="{px(rx):.1f}" y1="{py(ry):.1f}" x2="{px(x1):.1f}" '
               f'y2="{py(ry + reference_slope * (x1 - rx)):.1f}" stroke="gray" '
               f'stroke-dasharray="5,4"/>')
    ly = pad_t + 10
    out.append(f'<text x="{width - pad_r + 12}" y="{ly}" font-size="11" fill="gray">'
               f"slope {reference_slope:g} reference</text>")
    for i, s in enumerate(series):
        c = colors[i % len(colors)]
        lt = np.log(np.asarray(s["t"], float))
        for xv, yv in zip(lt, s["logm"]):
            out.append(f'<circle cx="{px(xv):.1f}" cy="{py(yv):.1f}" r="3" fill="{c}"/>')
        k = s["fit_from"]
        fx0, fx1 = lt[k], lt[-1]
        out.append(f'<line x1="{px(fx0):.1f}" y1="{py(s["intercept"] + s["slope"] * fx0):.1f}" '
                   f'x2="{px(fx1):.1f}" y2="{py(s["intercept"] + s["slope"] * fx1):.1f}" '
                   f'stroke="{c}" stroke-width="2"/>')
        ly += 18
        out.append(f'<text x="{width - pad_r + 12}" y="{ly}" font-size="11" fill="{c}">'
                   f'{escape(s["label"])}: slope {s["slope"]:.3f}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def estimate_series(est):
    return {"label": f"beta={est.beta:g}", "t": est.time_grid, "logm": est.mean_log_maxdisp,
            "slope": est.slope, "intercept": est.intercept, "fit_from": est.fit_from}
