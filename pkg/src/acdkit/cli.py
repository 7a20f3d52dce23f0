"""Command-line entry point.

Subcommands: ingest, simulate, durations, deseason, fit, diagnose, gof,
pipeline.  Configuration comes from an optional JSON file plus flag
overrides (flags win).  Every stochastic command requires a seed and its
outputs are a pure function of (inputs, config, seed).

Exit codes: 0 success, 2 input error, 3 data-quality failure,
4 stage failure, 5 invalid model.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, estimation, gof, seasonality, tickio
from .durations import (
    FilterPolicy,
    aggregate_durations,
    aggregate_transactions,
    apply_filter,
    compute_trade_durations,
    describe,
    thin_by_price,
    thin_by_volume,
)
from .errors import AcdkitError, NonStationaryError
from .model import AcdSpec, simulate
from .seasonality import deseasonalize, estimate_fourier_profile, estimate_spline_profile

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DATA_QUALITY = 3
EXIT_STAGE = 4
EXIT_MODEL = 5

PIPELINE_DEFAULTS = {
    "T": [2],
    "drop_zero": True,
    "max_duration_cap": None,
    "bin_minutes": 15,
    "families": ["exponential", "weibull", "gamma"],
    "orders": [[1, 1], [2, 1]],
    "n_starts": 5,
    "lb_lags": 20,
    "init_rule": "first_window_mean",
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return tickio.load_json(path)


def _outdir(args) -> Path:
    out = Path(args.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_ingest(args) -> int:
    out = _outdir(args)
    path = Path(args.input)
    if not path.is_file() or path.stat().st_size == 0:
        return _fail(f"unreadable or empty input {path}", EXIT_INPUT)
    days, report = tickio.read_ticks(path)
    tickio.dump_json(report.to_dict(), out / "ingest_report.json")
    if report.rows_read == 0:
        return _fail("no data rows in input", EXIT_INPUT)
    if report.rows_rejected > 0.01 * report.rows_read:
        return _fail(
            f"{report.rows_rejected}/{report.rows_read} rows malformed "
            f"(see {out / 'ingest_report.json'})",
            EXIT_DATA_QUALITY,
        )
    tickio.write_ticks(out / "ticks.csv", days)
    print(f"ingested {report.rows_kept} rows, {len(days)} days, "
          f"{report.rows_rejected} rejects -> {out / 'ticks.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    sim = dict(config.get("simulate", {}))
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        return _fail("simulate requires a seed (flag or config)", EXIT_INPUT)
    out = _outdir(args)
    spec_dict = sim.get("spec") or _default_sim_spec()
    spec = AcdSpec.from_dict(spec_dict)
    profile = (seasonality.DiurnalProfile.from_dict(sim["profile"])
               if sim.get("profile") else None)
    try:
        _, days = simulate(
            spec,
            n_per_day=int(sim.get("n_per_day", 0)),
            n_days=int(sim.get("n_days", 5)),
            seed=int(seed),
            profile=profile,
            price0=float(sim.get("price0", 100.0)),
            volume=float(sim.get("volume", 100.0)),
            price_step_sd=float(sim.get("price_step_sd", 1e-4)),
        )
    except NonStationaryError as exc:
        return _fail(str(exc), EXIT_MODEL)
    tickio.write_ticks(out / "sim_ticks.csv", days)
    manifest = {
        "spec": spec.to_dict(),
        "seed": int(seed),
        "n_days": int(sim.get("n_days", 5)),
        "n_per_day": int(sim.get("n_per_day", 0)),
        "profile": sim.get("profile"),
        "ticks": sum(len(d) for d in days),
    }
    tickio.dump_json(manifest, out / "sim_manifest.json")
    print(f"simulated {manifest['ticks']} ticks over {manifest['n_days']} days "
          f"-> {out / 'sim_ticks.csv'}")
    return EXIT_OK


def _default_sim_spec() -> dict:
    return {
        "mean_form": "linear",
        "omega": 0.2,
        "alpha": [0.1],
        "beta": [0.85],
        "innovation": {"variant": "gamma", "d": 3.0},
    }


def _read_store(path: str) -> list:
    p = Path(path)
    if not p.is_file():
        raise AcdkitError(f"no such input {p}")
    days, report = tickio.read_ticks(p)
    if not days:
        raise AcdkitError("input contains no valid ticks")
    return days


def cmd_durations(args) -> int:
    out = _outdir(args)
    try:
        days = _read_store(args.input)
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_INPUT)
    kind = args.kind
    if kind == "trade":
        series = compute_trade_durations(days)
        tag = "trade"
    elif kind == "aggregated":
        series = aggregate_transactions(days, args.T)
        tag = f"T{args.T}"
    elif kind == "price":
        series = thin_by_price(days, args.price_threshold)
        tag = f"C{args.price_threshold:g}"
    else:
        series = thin_by_volume(days, args.volume_threshold)
        tag = f"V{args.volume_threshold:g}"
    policy = FilterPolicy(drop_zero=args.drop_zero, max_duration_cap=args.cap)
    if not policy.is_identity:
        series = apply_filter(series, policy)
    tickio.write_durations_csv(out / f"durations_{tag}.csv", series)
    summary = describe(series, lb_lags=args.lb_lags)
    tickio.dump_json(summary.to_dict(), out / f"summary_{tag}.json")
    print(f"{series.n_obs} durations ({tag}) -> {out / f'durations_{tag}.csv'}")
    return EXIT_OK


def cmd_deseason(args) -> int:
    out = _outdir(args)
    try:
        days = _read_store(args.input)
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_INPUT)
    series = compute_trade_durations(days)
    policy = FilterPolicy(drop_zero=args.drop_zero, max_duration_cap=args.cap)
    if not policy.is_identity:
        series = apply_filter(series, policy)
    try:
        if args.fourier_order is not None:
            profile, _ = estimate_fourier_profile(series, args.fourier_order)
        else:
            profile = estimate_spline_profile(series, bin_minutes=args.bin_minutes)
        adjusted = deseasonalize(series, profile)
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_STAGE)
    tickio.dump_json(profile.to_dict(), out / "profile.json")
    tickio.write_curve_csv(out / "profile_curve.csv",
                           seasonality.profile_curve(profile), "time_s,s_t")
    tickio.write_durations_csv(out / "adjusted_durations.csv", adjusted)
    print(f"profile ({profile.form}) -> {out / 'profile.json'}")
    return EXIT_OK


def _fit_one(series, family: str, order: tuple[int, int], seed: int,
             n_starts: int, init_rule: str) -> estimation.FitResult:
    normalized, scale = estimation.normalize(series)
    template = estimation.default_template(family, m=order[0], q=order[1],
                                           mean_level=1.0, init_rule=init_rule)
    options = estimation.FitOptions(n_starts=n_starts, seed=seed)
    return estimation.fit_mle(normalized, template, options,
                              normalization_constant=scale)


def cmd_fit(args) -> int:
    out = _outdir(args)
    if args.seed is None:
        return _fail("fit requires a seed", EXIT_INPUT)
    try:
        series = tickio.read_durations_csv(args.durations)
    except (OSError, AcdkitError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    order = tuple(int(v) for v in args.orders.split(","))
    try:
        result = _fit_one(series, args.family, order, int(args.seed),
                          args.n_starts, args.init_rule)
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_STAGE)
    tickio.dump_json(result.to_dict(), out / f"fit_{args.family}_{order[0]}{order[1]}.json")
    print(_format_fit_table("fit", [result], lb_lags=20))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    out = _outdir(args)
    try:
        series = tickio.read_durations_csv(args.durations)
        spec = AcdSpec.from_dict(tickio.load_json(args.spec))
    except (OSError, AcdkitError, ValueError, KeyError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    try:
        report = diagnostics.diagnostic_report(spec, series, lb_lags=args.lb_lags)
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_STAGE)
    tickio.dump_json(report, out / "diagnostics.json")
    tickio.write_curve_csv(out / "correlogram.csv", report["acf"], "lag,acf")
    print(f"LB({args.lb_lags}) Q={report['lb']['Q']:.2f} p={report['lb']['p']:.4g}")
    return EXIT_OK


def _cache_dir(out: Path) -> Path:
    env = os.environ.get("ACDKIT_CACHE_DIR")
    cache = Path(env) if env else out / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    return cache


def _n_bucket(n: int) -> int:
    if n <= 0:
        return 0
    mag = 10 ** max(int(math.floor(math.log10(n))) - 1, 0)
    return int(round(n / mag) * mag)


def _cached_criticals(cache: Path, null: gof.NullDistribution, n: int, M: int,
                      seed: int, reestimate: bool) -> gof.CriticalValueTable:
    bucket = _n_bucket(n)
    key = f"cv_{null.family}_n{bucket}_M{M}_seed{seed}_re{int(reestimate)}.json"
    path = cache / key
    if path.is_file():
        table = gof.CriticalValueTable.from_dict(tickio.load_json(path))
        if (table.family == null.family and table.M == M and table.seed == seed
                and table.reestimated == reestimate and _n_bucket(table.n) == bucket):
            return table
        print(f"warning: cache provenance mismatch for {key}; regenerating",
              file=sys.stderr)
    table = gof.mc_critical_values(null, n=n, M=M, seed=seed, reestimate=reestimate)
    tickio.dump_json(table.to_dict(), path)
    return table


def cmd_gof(args) -> int:
    out = _outdir(args)
    if args.seed is None:
        return _fail("gof requires a seed", EXIT_INPUT)
    try:
        series = tickio.read_durations_csv(args.durations)
    except (OSError, AcdkitError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    cache = _cache_dir(out)
    families = args.families.split(",")
    results = {}
    try:
        for family in families:
            x = series.values()
            null = gof.fit_null(x, family)
            table = _cached_criticals(cache, null, n=x.size, M=args.mc_size,
                                      seed=int(args.seed), reestimate=not args.paper_literal)
            report = gof.gof_test(x, family, table=table, level=args.level)
            results[family] = report.to_dict()
            if args.within_day:
                wd = gof.within_day_share(series, family, level=args.level,
                                          mc_size=args.mc_size, seed=int(args.seed),
                                          reestimate=not args.paper_literal)
                results[family]["within_day"] = wd.to_dict()
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_STAGE)
    tickio.dump_json(results, out / "gof_report.json")
    for family, rep in results.items():
        verdict = "reject" if any(rep["rejects"].values()) else "accept"
        print(f"{family}: {verdict} at {args.level:.0%}")
    return EXIT_OK


def _format_fit_table(title: str, fits: list, lb_lags: int,
                      lb_values: dict | None = None) -> str:
    """Text table with one column per fitted spec, parameter rows first
    and (SE) underneath, then sample size, LL, BIC, LB."""
    param_rows: list[str] = []
    for fit in fits:
        for name in fit.params:
            if name not in param_rows:
                param_rows.append(name)
    labels = [fit.spec_at_optimum.label() for fit in fits]
    width = max(18, *(len(lab) + 2 for lab in labels))
    lines = [title.ljust(16) + "".join(lab.ljust(width) for lab in labels)]
    for row in param_rows:
        cells = []
        for fit in fits:
            if row in fit.params:
                cells.append(f"{fit.params[row]:.4f} ({fit.std_errors[row]:.4f})")
            else:
                cells.append("")
        lines.append(row.ljust(16) + "".join(c.ljust(width) for c in cells))
    lines.append("Sample size".ljust(16)
                 + "".join(str(f.n_obs).ljust(width) for f in fits))
    lines.append("LL".ljust(16)
                 + "".join(f"{f.loglik:.1f}".ljust(width) for f in fits))
    lines.append("BIC".ljust(16)
                 + "".join(f"{f.bic:.1f}".ljust(width) for f in fits))
    if lb_values:
        lines.append(f"LB({lb_lags})".ljust(16)
                     + "".join(f"{lb_values[i]:.1f}".ljust(width)
                               for i in range(len(fits))))
    return "\n".join(lines) + "\n"


def cmd_pipeline(args) -> int:
    config = _load_config(args.config)
    pipe = dict(PIPELINE_DEFAULTS)
    pipe.update(config.get("pipeline", {}))
    if args.T:
        pipe["T"] = [int(t) for t in args.T.split(",")]
    if args.cap is not None:
        pipe["max_duration_cap"] = args.cap
    if args.keep_zero:
        pipe["drop_zero"] = False
    if args.n_starts is not None:
        pipe["n_starts"] = args.n_starts
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        return _fail("pipeline requires a seed (flag or config)", EXIT_INPUT)
    seed = int(seed)
    out = _outdir(args)

    stage = "ingest"
    try:
        days = _read_store(args.input)
    except AcdkitError as exc:
        return _fail(f"stage {stage}: {exc}", EXIT_INPUT)

    try:
        stage = "filter"
        trade = compute_trade_durations(days)
        policy = FilterPolicy(drop_zero=bool(pipe["drop_zero"]),
                              max_duration_cap=pipe["max_duration_cap"])
        filtered = apply_filter(trade, policy)
        if np.any(filtered.values() <= 0):
            raise AcdkitError(
                "zero durations present; modeling requires drop_zero=true"
            )

        stage = "profile"
        profile = estimate_spline_profile(filtered, bin_minutes=int(pipe["bin_minutes"]))
        tickio.dump_json(profile.to_dict(), out / "profile.json")
        tickio.write_curve_csv(out / "profile_curve.csv",
                               seasonality.profile_curve(profile), "time_s,s_t")

        stage = "deseason"
        adjusted = deseasonalize(filtered, profile)

        manifest = {
            "seed": seed,
            "config": pipe,
            "input_rows": int(sum(len(d) for d in days)),
            "tables": [],
        }
        for t_idx, T in enumerate(pipe["T"]):
            stage = f"aggregate T={T}"
            series_t = aggregate_durations(adjusted, int(T))
            if series_t.n_obs < 50:
                raise AcdkitError(f"only {series_t.n_obs} durations at T={T}")

            stage = f"fit T={T}"
            fits = []
            lb_values = {}
            best = None
            for f_idx, family in enumerate(pipe["families"]):
                for o_idx, order in enumerate(pipe["orders"]):
                    fit = _fit_one(series_t, family, tuple(order),
                                   seed + 1009 * t_idx + 101 * f_idx + o_idx,
                                   int(pipe["n_starts"]), pipe["init_rule"])
                    res = diagnostics.residuals(fit.spec_at_optimum, _normalized(series_t))
                    q, _ = diagnostics.ljung_box(res.values(), int(pipe["lb_lags"]))
                    lb_values[len(fits)] = q
                    fits.append(fit)
                    if best is None or fit.bic < best[0]:
                        best = (fit.bic, fit, family, tuple(order))

            table_txt = _format_fit_table(f"T-{T}", fits, int(pipe["lb_lags"]), lb_values)
            (out / f"table_T{T}.txt").write_text(table_txt, encoding="utf-8")
            tickio.dump_json(
                {
                    "T": T,
                    "fits": [f.to_dict() for f in fits],
                    "lb": {str(i): lb_values[i] for i in lb_values},
                    "best_bic": best[1].spec_at_optimum.label(),
                },
                out / f"fit_T{T}.json",
            )

            stage = f"diagnose T={T}"
            norm_t = _normalized(series_t)
            report = diagnostics.diagnostic_report(best[1].spec_at_optimum, norm_t,
                                                   lb_lags=int(pipe["lb_lags"]))
            tickio.dump_json(report, out / f"diagnostics_T{T}.json")
            tickio.write_curve_csv(out / f"correlogram_T{T}.csv", report["acf"], "lag,acf")
            manifest["tables"].append({"T": T, "best_bic": best[1].spec_at_optimum.label()})

        tickio.dump_json(manifest, out / "manifest.json")
    except AcdkitError as exc:
        return _fail(f"stage {stage}: {exc}", EXIT_STAGE)
    print(f"pipeline complete -> {out}")
    return EXIT_OK


def _normalized(series):
    normalized, _ = estimation.normalize(series)
    return normalized


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acdkit",
                                     description="duration modeling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default=None)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("ingest", help="validate a tick CSV into a store")
    p.add_argument("--input", required=True)
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="generate a synthetic tick CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("durations", help="build duration series from ticks")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=["trade", "aggregated", "price", "volume"],
                   default="trade")
    p.add_argument("--T", type=int, default=13)
    p.add_argument("--price-threshold", type=float, default=0.05)
    p.add_argument("--volume-threshold", type=float, default=10_000.0)
    p.add_argument("--drop-zero", action="store_true")
    p.add_argument("--cap", type=float, default=None)
    p.add_argument("--lb-lags", type=int, default=20)
    common(p)
    p.set_defaults(func=cmd_durations)

    p = sub.add_parser("deseason", help="estimate and remove the diurnal factor")
    p.add_argument("--input", required=True)
    p.add_argument("--bin-minutes", type=int, default=15)
    p.add_argument("--fourier-order", type=int, default=None)
    p.add_argument("--drop-zero", action="store_true", default=True)
    p.add_argument("--cap", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_deseason)

    p = sub.add_parser("fit", help="fit one model spec to a duration CSV")
    p.add_argument("--durations", required=True)
    p.add_argument("--family", choices=["exponential", "weibull", "gamma", "gengamma"],
                   default="exponential")
    p.add_argument("--orders", default="1,1")
    p.add_argument("--n-starts", type=int, default=5)
    p.add_argument("--init-rule", default="first_window_mean")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="residual diagnostics for a fitted spec")
    p.add_argument("--durations", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--lb-lags", type=int, default=20)
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("gof", help="EDF goodness-of-fit with MC criticals")
    p.add_argument("--durations", required=True)
    p.add_argument("--families", default="exponential,weibull,gamma,genpareto")
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--mc-size", type=int, default=2000)
    p.add_argument("--within-day", action="store_true")
    p.add_argument("--paper-literal", action="store_true",
                   help="skip per-replicate re-estimation in the bootstrap")
    common(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("pipeline", help="filter, deseason, aggregate, fit, diagnose")
    p.add_argument("--input", required=True)
    p.add_argument("--T", default=None, help="comma-separated aggregation counts")
    p.add_argument("--cap", type=float, default=None)
    p.add_argument("--keep-zero", action="store_true")
    p.add_argument("--n-starts", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AcdkitError as exc:
        return _fail(str(exc), EXIT_STAGE)


if __name__ == "__main__":
    sys.exit(main())
