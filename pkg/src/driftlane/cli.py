"""Batch command-line front end.

Subcommands cover the pipeline end to end: ``extract`` trajectory CSVs into
pairs JSON, ``cluster`` pairs into intention groups, ``fit`` the decision
model, ``predict`` per-pair probability series, ``simulate`` evidence paths,
and ``report`` a human-readable summary.

A JSON config file may provide any option; command-line flags win.  Exit
codes: 0 success, 1 internal/numerical failure, 2 user-input error.
Parallelism is capped by the DRIFTLANE_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import clustering, ddm, estimation, simulation
from .trajectories import (InputError, extract_pairs, initial_headway,
                           parse_trajectories, read_pairs, write_pairs)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config file must hold a JSON object")
    return cfg


def _opt(args, cfg, name, default):
    """Flag value if given, else config value, else default."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _parse_schema(spec):
    if spec is None or isinstance(spec, dict):
        return spec or {}
    schema = {}
    for part in spec.split(","):
        if "=" not in part:
            raise InputError(f"bad schema entry {part!r}, expected logical=actual")
        k, v = part.split("=", 1)
        schema[k.strip()] = v.strip()
    return schema


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_extract(args):
    cfg = _load_config(args.config)
    schema = _parse_schema(_opt(args, cfg, "schema", None))
    lanes = _opt(args, cfg, "lanes", [3, 4, 5])
    if isinstance(lanes, str):
        lanes = [int(x) for x in lanes.split(",")]
    tracks = parse_trajectories(_opt(args, cfg, "input", None) or args.input,
                                schema=schema)
    pairs = extract_pairs(
        tracks, lanes=set(lanes),
        min_duration=float(_opt(args, cfg, "min_duration", 5.0)),
        right_is_higher_index=bool(_opt(args, cfg, "right_is_higher_index", True)),
    )
    write_pairs(pairs, args.out)
    print(f"extracted {len(pairs)} pairs -> {args.out}")
    return EXIT_OK


def cmd_cluster(args):
    cfg = _load_config(args.config)
    pairs = read_pairs(args.pairs)
    if len(pairs) < 2:
        raise InputError(f"need at least 2 pairs to cluster, got {len(pairs)}")
    feats = [clustering.pair_features(p) for p in pairs]
    w0_spec = _opt(args, cfg, "w0", [0.0, 0.0])
    if isinstance(w0_spec, str):
        w0_spec = [float(x) for x in w0_spec.split(",")]
    w0 = clustering.FeatureWeights(*map(float, w0_spec))
    w, result = clustering.optimize_weights(
        feats, w0,
        grid_bound=float(_opt(args, cfg, "grid_bound", clustering.WEIGHT_GRID_BOUND)),
        grid_points=int(_opt(args, cfg, "grid_points", clustering.WEIGHT_GRID_POINTS)),
    )
    sig = clustering.weight_significance(feats, w)
    cluster_id, members, diagnostics = clustering.select_intention_cluster(
        result, [p.outcome for p in pairs])
    out = result.to_dict()
    out["weights"] = {"gamma1": w.gamma1, "gamma2": w.gamma2}
    out["weight_significance"] = {
        "std_errors": [float(v) for v in sig["std_errors"]],
        "t_scores": [float(v) for v in sig["t_scores"]],
        "heuristic": True,
    }
    out["intention_cluster"] = cluster_id
    out["intention_members"] = [int(i) for i in members]
    out["misassigned_lc_pairs"] = diagnostics
    out["pair_ids"] = [[p.hv_id, p.car_id] for p in pairs]
    _write_json(out, args.out)
    print(f"clustered {len(pairs)} pairs; intention cluster {cluster_id} "
          f"({len(members)} members, {len(diagnostics)} misassigned LC) -> {args.out}")
    return EXIT_OK


def _pairs_for_fit(args, cfg):
    pairs = read_pairs(args.pairs)
    clusters_path = _opt(args, cfg, "clusters", None)
    if clusters_path:
        with open(clusters_path) as fh:
            cl = json.load(fh)
        members = set(cl["intention_members"])
        pairs = [p for i, p in enumerate(pairs) if i in members]
    return pairs


def cmd_fit(args):
    cfg = _load_config(args.config)
    pairs = _pairs_for_fit(args, cfg)
    if not pairs:
        raise InputError("no pairs to fit")
    if args.p0:
        p0 = ddm.load_params(args.p0, allow_override=args.allow_override)
    elif "p0" in cfg:
        p0 = ddm.DdmParams.from_dict(cfg["p0"])
    else:
        p0 = ddm.REFERENCE_PARAMS
    options = estimation.FitOptions(
        gtol=float(_opt(args, cfg, "gtol", 1e-4)),
        max_iter=int(_opt(args, cfg, "max_iter", 200)),
        convention=_opt(args, cfg, "convention", "density"),
        compute_se=not args.no_se,
    )
    result = estimation.fit(pairs, p0, options)
    _write_json(result.to_dict(), args.out)
    print(f"fit {result.n_pairs} pairs ({result.n_lc} LC): "
          f"LL={result.log_likelihood:.4f} [{result.convention}] "
          f"{result.convergence} -> {args.out}")
    return EXIT_OK


def _load_fit_or_params(path):
    with open(path) as fh:
        d = json.load(fh)
    if "parameters" in d:  # fit-result layout
        kw = {name: d["parameters"][name]["mean"]
              for name in ddm.DdmParams.FREE_NAMES}
        kw.update(d.get("fixed", {}))
        return ddm.DdmParams(**kw)
    return ddm.DdmParams.from_dict(d)


def cmd_predict(args):
    cfg = _load_config(args.config)
    pairs = read_pairs(args.pairs)
    params = _load_fit_or_params(args.params)
    rows = []
    summary = []
    for idx, pair in enumerate(pairs):
        if len(pair.steps) >= 2:
            step_dt = pair.steps[1].t - pair.steps[0].t
            if abs(step_dt - params.dt) > 1e-9:
                raise InputError(
                    f"pair {idx}: step spacing {step_dt} does not match "
                    f"params dt {params.dt}")
        a0 = ddm.initial_evidence(initial_headway(pair), params)
        for d in pair.lanes_available:
            env = ddm.env_series_for_direction(pair, d)
            mu = ddm.drift_rates(env, params)
            res = ddm.first_passage_mu(a0, mu, params.sigma, params.threshold,
                                       params.dt)
            for i in range(len(mu)):
                rows.append((idx, pair.hv_id, pair.car_id, d,
                             pair.t0 + i * params.dt,
                             mu[i], res.g[i], res.F[i]))
            i_peak = int(np.argmax(res.g))
            summary.append((idx, pair.hv_id, pair.car_id, d,
                            pair.t0 + i_peak * params.dt,
                            res.total_probability))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_index", "hv_id", "car_id", "direction", "t",
                    "drift_rate", "passage_density", "cumulative_probability"])
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v
                        for v in r])
    with open(args.summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_index", "hv_id", "car_id", "direction",
                    "max_probability_time", "total_lc_probability"])
        for r in summary:
            w.writerow([repr(float(v)) if isinstance(v, float) else v
                        for v in r])
    print(f"predicted {len(pairs)} pairs -> {args.out}, {args.summary}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load_config(args.config)
    params = ddm.load_params(args.params, allow_override=args.allow_override) \
        if args.params else ddm.REFERENCE_PARAMS
    seed = int(_opt(args, cfg, "seed", 0))
    sim_cfg = simulation.SimConfig(
        n_paths=int(_opt(args, cfg, "n_paths", 10000)),
        seed=seed, dt=params.dt,
        horizon=float(_opt(args, cfg, "horizon", 60.0)),
        params=params,
    )
    a0 = float(_opt(args, cfg, "a0", params.evidence_base))
    mu = float(args.mu) if args.mu is not None else cfg.get("mu", params.beta0)
    sample = simulation.simulate_paths(a0, mu, sim_cfg,
                                       bridge=not args.no_bridge)
    times = sample.times()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "passage_time_s"])
        for i, t in enumerate(times):
            w.writerow([i, "" if np.isnan(t) else repr(float(t))])
    checkpoints = [t for t in np.arange(5.0, sim_cfg.horizon + 1e-9, 5.0)]
    summary = {
        "n_paths": sample.n_paths,
        "n_censored": sample.n_censored,
        "seed": seed,
        "a0": a0,
        "mu": mu,
        "horizon": sim_cfg.horizon,
        "checkpoint_cdf": {repr(float(t)): sample.cdf_at(t) for t in checkpoints},
    }
    _write_json(summary, args.summary)
    print(f"simulated {sample.n_paths} paths ({sample.n_censored} censored) "
          f"-> {args.out}, {args.summary}")
    return EXIT_OK


def cmd_report(args):
    with open(args.fit) as fh:
        fit = json.load(fh)
    cluster = None
    if args.clusters:
        with open(args.clusters) as fh:
            cluster = json.load(fh)

    lines = []
    lines.append("Lane-change decision model fit")
    lines.append("=" * 54)
    lines.append(f"{'Parameter':<12}{'Mean':>12}{'t-score':>12}{'p-value':>12}")
    for name in ddm.DdmParams.FREE_NAMES:
        row = fit["parameters"][name]
        lines.append(f"{name:<12}{row['mean']:>12.4f}"
                     f"{row['t_score']:>12.4f}{row['p_value']:>12.4f}")
    lines.append(f"{'Sample size':<24}{fit['sample_size']:>12}")
    lines.append(f"{'Log-likelihood':<24}{fit['log_likelihood']:>12.4f}")
    lines.append(f"convention={fit['convention']} "
                 f"convergence={fit['convergence']}")
    if fit.get("information_flag"):
        lines.append(f"WARNING: {fit['information_flag']}")
    if cluster is not None:
        lines.append("")
        lines.append("Intention clustering")
        lines.append("-" * 54)
        c1, c2 = cluster["centers"]
        n1 = sum(1 for a in cluster["assignments"] if a == 1)
        n2 = len(cluster["assignments"]) - n1
        lines.append(f"centers: {c1:.3f} (n={n1}), {c2:.3f} (n={n2})")
        lines.append(f"weights: gamma1={cluster['weights']['gamma1']:.4f}, "
                     f"gamma2={cluster['weights']['gamma2']:.4f}")
        lines.append(f"intention cluster: {cluster['intention_cluster']}")
        lines.append(f"{len(cluster['misassigned_lc_pairs'])} misassigned LC pairs")
    text = "\n".join(lines) + "\n"

    if args.out_text:
        with open(args.out_text, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.out_json:
        _write_json({"fit": fit, "cluster": cluster}, args.out_json)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="driftlane",
                                 description="Lane-change decision modeling "
                                             "behind heavy vehicles")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")

    p = sub.add_parser("extract", help="trajectory CSV -> pairs JSON")
    common(p)
    p.add_argument("--input", required=True, help="trajectory CSV")
    p.add_argument("--out", required=True, help="pairs JSON output")
    p.add_argument("--lanes", help="comma-separated lane whitelist (default 3,4,5)")
    p.add_argument("--min-duration", dest="min_duration", type=float)
    p.add_argument("--schema", help="column renames: logical=actual,...")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("cluster", help="pairs JSON -> clusters JSON")
    common(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--w0", help="starting weights gamma1,gamma2")
    p.add_argument("--grid-bound", dest="grid_bound", type=float)
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fit", help="pairs JSON -> fitted parameters JSON")
    common(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--clusters", help="restrict to the intention cluster")
    p.add_argument("--out", required=True)
    p.add_argument("--p0", help="starting params JSON")
    p.add_argument("--convention", choices=estimation.CONVENTIONS)
    p.add_argument("--gtol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--no-se", action="store_true",
                   help="skip standard-error computation")
    p.add_argument("--allow-override", action="store_true",
                   help="accept non-canonical fixed constants in params files")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="per-pair probability series CSV")
    common(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--params", required=True, help="params or fit-result JSON")
    p.add_argument("--out", required=True, help="time-series CSV")
    p.add_argument("--summary", required=True, help="per-direction summary CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="Monte-Carlo evidence paths")
    common(p)
    p.add_argument("--params", help="params JSON (default: reference calibration)")
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--mu", type=float, help="constant drift override")
    p.add_argument("--a0", type=float, help="initial evidence")
    p.add_argument("--no-bridge", action="store_true",
                   help="grid-only crossing detection")
    p.add_argument("--allow-override", action="store_true")
    p.add_argument("--out", required=True, help="passage-time CSV")
    p.add_argument("--summary", required=True, help="summary JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render fit + cluster summary")
    common(p)
    p.add_argument("--fit", required=True, help="fit-result JSON")
    p.add_argument("--clusters", help="clusters JSON")
    p.add_argument("--out-text", dest="out_text")
    p.add_argument("--out-json", dest="out_json")
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # internal/numerical failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
