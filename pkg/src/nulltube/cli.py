"""Command-line front end.

Subcommands: chart-info, residuals, surface, find-marginal, verify-tube.
Reports are JSON (schema 1) or CSV; floating-point output is fixed to 17
significant digits so identical configurations reproduce byte-identical
files.  Exit codes: 0 ok, 2 configuration, 3 domain, 4 solver,
5 verification failure.  NULLTUBE_THREADS caps the sweep worker count.
"""

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import charts as _charts
from . import connection as _conn
from . import finder as _finder
from . import surface as _surface
from . import tube as _tube
from .errors import ConfigurationError, NoRootError, NulltubeError, VerificationError

SCHEMA = 1


def worker_count():
    try:
        n = int(os.environ.get("NULLTUBE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _fmt(x):
    return "%.17g" % float(x)


def dumps_canonical(obj, indent=0):
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    pad = "  " * indent
    pad2 = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for key in sorted(obj):
            items.append('%s"%s": %s' % (pad2, key, dumps_canonical(obj[key], indent + 1)))
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = np.asarray(obj).tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        items = [pad2 + dumps_canonical(v, indent + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if np.isnan(obj):
            return '"nan"'
        if np.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        return _fmt(obj)
    if isinstance(obj, str):
        return '"%s"' % obj.replace("\\", "\\\\").replace('"', '\\"')
    raise ConfigurationError("cannot serialize %r" % type(obj).__name__)


def _write_output(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _csv_text(fieldnames, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def _parse_params(pairs):
    params = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigurationError("--param expects k=v, got %r" % item)
        key, val = item.split("=", 1)
        try:
            params[key] = float(val)
        except ValueError:
            raise ConfigurationError("parameter %s=%r is not numeric" % (key, val))
    return params


def _get_chart(args):
    if args.chart.endswith(".json") or os.path.sep in args.chart:
        return _charts.load_chart(args.chart)
    return _charts.make_chart(args.chart, **_parse_params(args.param))


def _sweep_points(chart, n, inset_frac=0.08, sb_to_boundary=False):
    slo, shi = chart.s_range
    blo, bhi = chart.sb_range
    ds = inset_frac * (shi - slo)
    db = 0.0 if sb_to_boundary else inset_frac * (bhi - blo)
    t1lo = chart.topology.t1_min
    t1hi = chart.topology.t1_max
    if not chart.topology.periodic1:
        pad = 0.1 * (t1hi - t1lo)
        t1lo, t1hi = t1lo + pad, t1hi - pad
        t1 = np.linspace(t1lo, t1hi, n)
    else:
        t1 = t1lo + (t1hi - t1lo) * np.arange(n) / n
    s = np.linspace(slo + ds, shi - ds, n)
    sb = np.linspace(blo + db, bhi - db, n)
    t2 = 2.0 * np.pi * np.arange(n) / n
    S, SB, T1, T2 = np.meshgrid(s, sb, t1, t2, indexing="ij")
    return np.stack([S, SB, T1, T2], axis=-1)


def _chunked_max(func, pts, workers):
    flat = pts.reshape(-1, 4)
    chunks = np.array_split(flat, max(1, workers * 4))
    if workers == 1:
        vals = [func(c) for c in chunks if len(c)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(func, [c for c in chunks if len(c)]))
    return float(np.max([np.max(v) for v in vals]))


def cmd_chart_info(args):
    chart = _get_chart(args)
    n = args.grid
    pts = _sweep_points(chart, n)
    workers = worker_count()
    eik = _chunked_max(lambda c: np.max(np.stack(_charts.verify_eikonal(chart, c)), axis=0),
                       pts, workers)
    sig_ok = bool(np.all(_charts.lorentzian_signature_ok(
        _charts.assemble_metric(chart.eval(pts.reshape(-1, 4)))[0])))
    frame_res = _chunked_max(lambda c: _conn.frame_residuals(chart.eval(c)), pts, workers)
    report = {
        "schema": SCHEMA,
        "command": "chart-info",
        "chart": chart.name,
        "parameters": chart.parameters,
        "domain": {"s": list(chart.s_range), "sb": list(chart.sb_range),
                   "topology": chart.topology.to_dict()},
        "grid": n,
        "max_eikonal_residual": eik,
        "max_frame_residual": frame_res,
        "lorentzian_signature": sig_ok,
    }
    _write_output(dumps_canonical(report), args.out)
    if eik > args.tol or not sig_ok:
        raise VerificationError("chart verification failed: eikonal %.3g > %.3g"
                                % (eik, args.tol))
    return 0


def cmd_residuals(args):
    chart = _get_chart(args)
    n = args.grid
    pts = _sweep_points(chart, n, sb_to_boundary=True)
    flat = pts.reshape(-1, 4)
    ray_ok = _conn.stencil_ok(chart, flat)
    workers = worker_count()
    chunks = np.array_split(np.arange(len(flat)), max(1, workers * 4))

    def work(idx):
        sub = flat[idx]
        out = {}
        out["scacs"] = _conn.scacs_residuals(chart, sub)
        out["lie_b"] = _conn.lie_b_residual(chart, sub)
        ray = np.full(len(sub), np.nan)
        ok = ray_ok[idx]
        if np.any(ok):
            ray[ok] = _conn.raychaudhuri_residual(chart, sub[ok])
        out["raychaudhuri"] = ray
        return out

    if workers == 1:
        results = [work(idx) for idx in chunks if len(idx)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, [idx for idx in chunks if len(idx)]))
    rows = []
    worst = 0.0
    pos = 0
    for idx, res in zip([c for c in chunks if len(c)], results):
        for k, i in enumerate(idx):
            p = flat[i]
            for name in ("scacs", "lie_b", "raychaudhuri"):
                val = res[name][k]
                flag = "ok"
                if name == "raychaudhuri" and not ray_ok[i]:
                    flag = "stencil-boundary"
                    rows.append([p[0], p[1], p[2], p[3], name, "", flag])
                    continue
                worst = max(worst, float(val))
                rows.append([p[0], p[1], p[2], p[3], name, float(val), flag])
        pos += len(idx)
    header = ["s", "sb", "t1", "t2", "residual", "value", "flag"]
    if args.format == "csv":
        _write_output(_csv_text(header, rows), args.out)
    else:
        report = {"schema": SCHEMA, "command": "residuals", "chart": chart.name,
                  "grid": n, "max_residual": worst,
                  "rows": [[r[0], r[1], r[2], r[3], r[4],
                            (r[5] if r[5] != "" else None), r[6]] for r in rows]}
        _write_output(dumps_canonical(report), args.out)
    if worst > args.tol:
        raise VerificationError("residual %.3g exceeds tolerance %.3g" % (worst, args.tol))
    return 0


def cmd_surface(args):
    chart = _get_chart(args)
    n = args.grid
    band = None if chart.topology.periodic1 else _central_band(chart)
    rows_out = []
    diffs = {}
    for level, nn in (("coarse", n // 2), ("fine", n)):
        grid = chart.theta_grid(nn, band=band)
        if args.surface:
            graph = _surface.load_surface(chart, args.surface)
        else:
            rng = np.random.default_rng(args.seed)
            graph = _surface.random_trig_graph(chart, grid, rng, amplitude=0.02, decay=7)
        closed = _surface.second_fundamental_forms(graph)
        oracle = _surface.oracle_second_forms(graph)
        mask = graph.mask(extra_margin=2)
        if band is not None:
            mask = mask & (grid.T1 >= band[0] + 0.2) & (grid.T1 <= band[1] - 0.2)
        diffs[level] = max(
            float(np.max(np.abs((closed.chi_dot - oracle.chi_dot)[mask]))),
            float(np.max(np.abs((closed.chib_dot - oracle.chib_dot)[mask]))),
            float(np.max(np.abs((closed.eta_dot - oracle.eta_dot)[mask]))))
        if level == "fine":
            for row in _surface.geometry_rows(graph):
                rows_out.append([row[k] for k in sorted(row)])
            fieldnames = sorted(_surface.geometry_rows(graph)[0]) if rows_out else []
    order = float(np.log2(diffs["coarse"] / diffs["fine"])) if diffs["fine"] > 0 else np.inf
    report = {"schema": SCHEMA, "command": "surface", "chart": chart.name,
              "grid": n, "seed": args.seed,
              "max_closed_vs_oracle": diffs["fine"],
              "coarse_max": diffs["coarse"], "measured_order": order}
    if args.format == "csv":
        _write_output(_csv_text(fieldnames, rows_out), args.out)
        if args.report:
            _write_output(dumps_canonical(report), args.report)
    else:
        _write_output(dumps_canonical(report), args.out)
    if diffs["fine"] > args.tol:
        raise VerificationError("closed-form vs oracle difference %.3g > %.3g"
                                % (diffs["fine"], args.tol))
    return 0


def _central_band(chart):
    lo = chart.topology.t1_min
    hi = chart.topology.t1_max
    pad = 0.29 * (hi - lo)
    return (lo + pad, hi - pad)


def cmd_find_marginal(args):
    chart = _get_chart(args)
    grid = chart.theta_grid(args.grid, band=None if chart.topology.periodic1
                            else _central_band(chart))
    section = _finder.find_marginal_on_cone(chart, args.s0, grid,
                                            (args.bracket[0], args.bracket[1]))
    report = {
        "schema": SCHEMA, "command": "find-marginal", "chart": chart.name,
        "s0": args.s0, "bracket": list(args.bracket), "nodes": int(section.roots.size),
        "scan_axis": "s",
        "fstar": section.roots.ravel(),
        "theta1": section.t1.ravel(), "theta2": section.t2.ravel(),
        "residuals": section.residuals.ravel(),
        "max_residual": section.max_residual(),
        "expansion_scale": section.expansion_scale,
        "multiple_roots": bool(np.any(section.multiple_roots)),
    }
    if hasattr(chart, "radius"):
        pts = np.stack([section.roots, np.full(section.roots.shape, args.s0),
                        section.t1, section.t2], axis=-1)
        report["area_radius"] = chart.radius(pts).ravel()
    _write_output(dumps_canonical(report), args.out)
    return 0


def cmd_verify_tube(args):
    chart = _get_chart(args)
    if args.tube.endswith(".json") or os.path.sep in args.tube:
        tube = _tube.load_tube(chart, args.tube)
    else:
        catalogue = _tube.builtin_tubes(chart)
        if args.tube not in catalogue:
            raise ConfigurationError("unknown tube %r for chart %s (available: %s)"
                                     % (args.tube, chart.name, ", ".join(sorted(catalogue))))
        tube = catalogue[args.tube]
    report_obj = _tube.marginality_scan(chart, tube, levels=args.levels,
                                        bumps_per_level=args.bumps, seed=args.seed,
                                        n=args.grid, tol=args.tol)
    report = {"schema": SCHEMA, "command": "verify-tube", "chart": chart.name,
              "seed": args.seed, "grid": args.grid}
    report.update(report_obj.to_dict())
    consistent = not (report_obj.tube_class == "spacelike"
                      and report_obj.all_sections_marginal)
    report["theorem_consistent"] = consistent
    out_path = args.report or args.out
    _write_output(dumps_canonical(report), out_path)
    if not consistent:
        raise VerificationError("spacelike tube with all sections marginal: "
                                "mechanism violated")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nulltube",
        description="Double-null surface geometry: residual sweeps, marginal-surface "
                    "finding, and marginal-tube verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid_default=16, tol_default=1e-6):
        p.add_argument("--chart", required=True,
                       help="builtin chart name or chart-file path")
        p.add_argument("--param", action="append", metavar="K=V",
                       help="chart parameter (repeatable)")
        p.add_argument("--grid", type=_pow2, default=grid_default,
                       help="resolution (power of two in [16, 512])")
        p.add_argument("--tol", type=_postol, default=tol_default)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("chart-info", help="chart metadata and eikonal sweep")
    common(p, tol_default=1e-10)
    p.set_defaults(func=cmd_chart_info)

    p = sub.add_parser("residuals", help="structure-identity residual sweeps")
    common(p)
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("surface", help="closed-form vs oracle geometry table")
    common(p, grid_default=64)
    p.add_argument("--surface", default=None, help="surface spec file")
    p.add_argument("--report", default=None, help="JSON summary path (with --format csv)")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("find-marginal", help="marginal locus on a scan cone")
    common(p)
    p.add_argument("--s0", type=float, required=True,
                   help="advanced-coordinate level of the scan cone")
    p.add_argument("--bracket", type=float, nargs=2, required=True,
                   metavar=("A", "B"))
    p.set_defaults(func=cmd_find_marginal)

    p = sub.add_parser("verify-tube", help="classify a tube and scan its sections")
    common(p, tol_default=1e-8)
    p.add_argument("--tube", required=True, help="builtin tube name or tube-file path")
    p.add_argument("--report", default=None, help="JSON report path")
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--bumps", type=int, default=16)
    p.set_defaults(func=cmd_verify_tube)
    return parser


def _pow2(text):
    n = int(text)
    if n < 16 or n > 512 or (n & (n - 1)):
        raise argparse.ArgumentTypeError("grid must be a power of two in [16, 512]")
    return n


def _postol(text):
    x = float(text)
    if x <= 0:
        raise argparse.ArgumentTypeError("tolerance must be positive")
    return x


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except NoRootError as exc:
        sys.stderr.write("solver: %s\n" % exc)
        return exc.exit_code
    except NulltubeError as exc:
        sys.stderr.write("%s: %s\n" % (type(exc).__name__, exc))
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
