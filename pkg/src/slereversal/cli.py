"""Command-line front end: one key=value config per run, ``-s key=value`` overrides.

Exit codes: 0 pass, 1 fail (statistical, or invalid parameters for
``validate``), 2 inconclusive, 3 config error, 4 unsupported geometry.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig, load
from .geometry import (
    ComponentRecord,
    UnsupportedGeometry,
    component_weight_factor,
    converged_weight_factor,
    reverse_curve,
    write_component_csv,
)
from .loewner import trace_curve
from .observables import ObservableGrid, evaluate, vector_names, write_observable_csv
from .params import LEFT, RIGHT, ParamsError, ThresholdViolation, fmt_fraction, reverse_params, validate_params
from .pipeline import TAG_FORWARD, TAG_HATTED, verify
from .sampler import sample_driving, stream
from .stats import WeightedEnsemble, ess, estimate_Z, rn_log_weight

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_CONFIG = 3
EXIT_GEOMETRY = 4

VERDICT_CODES = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}
TRACE_POINTS = 2000


def _header(rc: RunConfig, **extra: object) -> dict[str, str]:
    h = {"config_digest": rc.digest}
    h.update({k: str(v) for k, v in extra.items()})
    return h


def _out_dir(rc: RunConfig) -> Path:
    rc.out.mkdir(parents=True, exist_ok=True)
    return rc.out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj: object) -> object:
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def cmd_validate(rc: RunConfig) -> int:
    report = validate_params(rc.params)
    if report.ok:
        print(f"valid  threshold={float(rc.params.threshold):g}  config_digest={rc.digest}")
        return EXIT_PASS
    where = f" side={report.side}" if report.side else ""
    where += f" index={report.index}" if report.index is not None else ""
    print(f"{report.kind}{where}: {report.message}")
    return EXIT_FAIL if report.kind == "threshold" else EXIT_CONFIG


def format_tilted(rc: RunConfig) -> str:
    t = reverse_params(rc.params)
    lines = [f"# reversal of config_digest={rc.digest}"]
    lines += [f"{k}={v}" for k, v in t.base.as_config().items()]
    for key, side in (("alpha_left", LEFT), ("alpha_right", RIGHT)):
        vals = t.alphas(side)
        if vals:
            lines.append(f"{key}=" + ",".join(fmt_fraction(a) for a in vals))
    return "\n".join(lines)


def cmd_reverse_params(rc: RunConfig) -> int:
    print(format_tilted(rc))
    return EXIT_PASS


def cmd_sample(rc: RunConfig, count: int) -> int:
    out = _out_dir(rc)
    cfg = rc.sampler
    rows = []
    for i in range(count):
        path = sample_driving(rc.params, cfg, stream(cfg.seed, i, TAG_FORWARD), index=i)
        path.to_csv(out / f"driving_{i:05d}.csv", _header(rc, seed=cfg.seed, index=i, tag=TAG_FORWARD))
        rows.append({"index": i, "steps": len(path), "stopped_at": path.stopped_at, "w_T": float(path.w[-1])})
    stopped = sum(r["stopped_at"] is not None for r in rows)
    _write_json(out / "sample.json", {"config_digest": rc.digest, "seed": cfg.seed, "paths": rows, "threshold_stops": stopped})
    print(f"wrote {count} driving paths to {out} ({stopped} stopped at the continuation threshold)")
    return EXIT_PASS


def cmd_trace(rc: RunConfig, count: int) -> int:
    out = _out_dir(rc)
    cfg = rc.sampler
    grid = ObservableGrid.for_params(rc.params, reach_height=rc.reach_height)
    rows = []
    for i in range(count):
        path = sample_driving(rc.params, cfg, stream(cfg.seed, i, TAG_FORWARD), index=i)
        trace = trace_curve(path, TRACE_POINTS)
        trace.to_csv(out / f"curve_{i:05d}.csv", _header(rc, seed=cfg.seed, index=i))
        rows.append(evaluate(trace, grid).as_row())
    write_observable_csv(out / "trace_observables.csv", vector_names(grid), np.array(rows), header=_header(rc))
    print(f"wrote {count} curves and their observables to {out}")
    return EXIT_PASS


def _factor_records(rc: RunConfig, index: int) -> list[ComponentRecord]:
    cfg = rc.sampler
    reach = cfg.T * (8.0 if rc.truncation == "doubling" else 1.0)
    path = sample_driving(rc.params, cfg.with_(T=reach), stream(cfg.seed, index, TAG_FORWARD), index=index)
    if path.stopped_at is not None:
        raise UnsupportedGeometry(f"path {index} stopped at the continuation threshold at capacity {path.stopped_at:.6g}")
    chain = path.to_chain()
    recs = []
    for q in (LEFT, RIGHT):
        for i in range(1, len(rc.params.points(q)) + 1):
            if rc.truncation == "doubling":
                recs.append(converged_weight_factor(chain, rc.params, i, q, cfg.T))
            else:
                recs.append(component_weight_factor(chain, None, rc.params, i, q, cfg.T))
    return recs


def cmd_weights(rc: RunConfig) -> int:
    out = _out_dir(rc)
    tilted = rc.tilted()
    alphas = {(q, i): float(a) for q, i, a in tilted.nonzero_alphas()}
    rows, lw = [], []
    for j in range(rc.sampler.n_samples):
        recs = _factor_records(rc, j)
        rows += [(j, r) for r in recs]
        lw.append(rn_log_weight(recs, alphas))
    write_component_csv(out / "components.csv", rows, _header(rc, truncation=rc.truncation))
    lw_arr = np.array(lw)
    ens = WeightedEnsemble(np.zeros((lw_arr.size, 0)), lw_arr)
    z, se = estimate_Z(ens, rc.reps, rc.sampler.seed)
    summary = {
        "config_digest": rc.digest,
        "n": int(lw_arr.size),
        "ess": ess(ens),
        "z_estimate": z,
        "z_se": se,
        "truncation": rc.truncation,
        "max_truncation_error": max((r.truncation_error_estimate for _, r in rows), default=0.0),
    }
    with open(out / "log_weights.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# config_digest={rc.digest}\nsample_id,log_weight\n")
        for j, v in enumerate(lw_arr):
            fh.write(f"{j},{float(v)!r}\n")
    _write_json(out / "weights.json", summary)
    print(f"ESS {summary['ess']:.1f} of {summary['n']}, Z = {z:.5g} +- {se:.2g}")
    return EXIT_PASS


def _sample_traces(p, rc: RunConfig, tag: int, count: int):
    cfg = rc.sampler
    traces = []
    for i in range(count):
        path = sample_driving(p, cfg, stream(cfg.seed, i, tag), index=i)
        traces.append(trace_curve(path, TRACE_POINTS))
    return traces


def _write_curve_plot(rc: RunConfig, path: Path) -> Path:
    from .plotting import plot_curves

    tilted = reverse_params(rc.params)
    fwd = _sample_traces(rc.params, rc, TAG_FORWARD, rc.n_curves)
    hat = _sample_traces(tilted.base, rc, TAG_HATTED, rc.n_curves)
    rev = [reverse_curve(t).points for t in fwd]
    return plot_curves(path, fwd, rev, hat, rc.params, tilted.base, digest=rc.digest)


def cmd_plot(rc: RunConfig) -> int:
    out = _out_dir(rc)
    path = _write_curve_plot(rc, out / "curves.svg")
    print(f"wrote {path}")
    return EXIT_PASS


def cmd_verify(rc: RunConfig) -> int:
    out = _out_dir(rc)
    outcome = verify(rc.params, rc.sampler, alpha_sign=rc.alpha_sign, reps=rc.reps, ess_floor=rc.ess_floor)
    data = outcome.data
    report = outcome.to_dict()
    report["config_digest"] = rc.digest
    report["config"] = rc.resolved()
    _write_json(out / "report.json", report)
    hdr = _header(rc, seed=rc.sampler.seed)
    write_observable_csv(out / "observables_forward.csv", data.names, data.obs_forward, header=hdr)
    hatted = data.hatted_ensemble(rc.alpha_sign)
    write_observable_csv(out / "observables_hatted.csv", data.names, data.obs_hatted, hatted.log_weights, header=hdr)
    rows = []
    f = data.factors
    for c, (q, i) in enumerate(f.keys):
        x = float(data.tilted.base.points(q)[i - 1])
        for j in range(f.log_factor.shape[0]):
            val = math.exp(f.log_factor[j, c])
            err = abs(val - math.exp(f.log_factor_half[j, c]))
            rows.append((j, ComponentRecord(q, i, x, 0.0, math.inf, val, err, rc.sampler.T)))
    write_component_csv(out / "components.csv", rows, hdr)
    for i in range(rc.dump_paths):
        path = sample_driving(rc.params, rc.sampler, stream(rc.sampler.seed, i, TAG_FORWARD), index=i)
        path.to_csv(out / f"driving_{i:05d}.csv", _header(rc, seed=rc.sampler.seed, index=i, tag=TAG_FORWARD))
    if rc.plot:
        from .plotting import plot_log_weights

        _write_curve_plot(rc, out / "curves.svg")
        plot_log_weights(out / "log_weights.svg", hatted.log_weights, outcome.report.ess_b, rc.digest)
    rep = outcome.report
    tested = rep.adjusted[np.isfinite(rep.adjusted)]
    min_p = float(tested.min()) if tested.size else float("nan")
    print(
        f"{rep.verdict}  ESS {rep.ess_b:.1f}/{data.obs_hatted.shape[0]}  min Holm p {min_p:.4g}  "
        f"Z = {outcome.z:.5g} +- {outcome.z_se:.2g}  config_digest={rc.digest}"
    )
    return VERDICT_CODES[rep.verdict]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slereversal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", nargs="?", help="key=value config file")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        return sp

    add("validate", "check force-point ordering and the continuation threshold")
    add("reverse-params", "print the parameters of the reversed process as a config")
    add("sample", "write sampled driving paths as CSV").add_argument("--count", type=int, default=1)
    add("trace", "trace sampled curves and evaluate their observables").add_argument("--count", type=int, default=1)
    add("weights", "weight factors and log-weights for every sample")
    add("verify", "compare the reversed forward ensemble with the weighted hatted ensemble")
    add("plot", "SVG of forward, reversed and hatted curves")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load(args.config, args.set)
    except (ConfigError, ParamsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        return cmd_validate(rc)
    try:
        validate_params(rc.params).raise_for_status()
        if args.command == "reverse-params":
            return cmd_reverse_params(rc)
        if args.command == "sample":
            return cmd_sample(rc, args.count)
        if args.command == "trace":
            return cmd_trace(rc, args.count)
        if args.command == "weights":
            return cmd_weights(rc)
        if args.command == "plot":
            return cmd_plot(rc)
        return cmd_verify(rc)
    except (ParamsError, ThresholdViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedGeometry as exc:
        print(f"unsupported geometry: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


def main() -> None:
    sys.exit(run())
