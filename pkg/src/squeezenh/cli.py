"""Command-line interface: batch experiments to plot-ready tables.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
Errors go to stderr; stdout carries only results. Output files are
deterministic functions of the configuration.
"""

import argparse
import json
import os
import sys

import numpy as np

from .basis import SpinState
from .operators import ModelParams, build_h_eff
from .dynamics import propagate, steady_state
from .squeezing import squeezing_parameter, husimi_q, fit_power_law, to_db
from .experiments import (
    ExperimentConfig,
    GAMMA_RULES,
    N_GRID_DEFAULT,
    baseline_oat,
    baseline_tact,
    run_evolution,
    run_gamma_sweep_dynamic,
    run_scaling_dynamic,
    run_scaling_steady,
    run_steady_sweep,
)
from .tables import OutputTable, provenance_for, read_csv, write_csv, write_json


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; the contract wants 1
    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage().rstrip()}")


_ALLOWED_KEYS = {
    "steady": {"kind", "N", "gamma_over_chi", "out", "format", "tol"},
    "evolve": {
        "kind",
        "N",
        "gamma_over_chi",
        "duration",
        "q_times",
        "theta_points",
        "phi_points",
        "per_decade",
        "tol",
        "out",
        "format",
    },
    "sweep": {
        "kind",
        "N",
        "gamma_grid",
        "dynamic",
        "rel_tol",
        "per_decade",
        "tol",
        "workers",
        "out",
        "format",
    },
    "scaling-steady": {
        "kind",
        "N_grid",
        "gamma_rule",
        "rel_tol",
        "per_decade",
        "tol",
        "workers",
        "out",
        "format",
    },
    "scaling-dynamic": {
        "kind",
        "N_grid",
        "gamma_over_chi",
        "rel_tol",
        "per_decade",
        "tol",
        "workers",
        "out",
        "format",
    },
    "qfunc": {
        "kind",
        "N",
        "gamma_over_chi",
        "t",
        "steady",
        "theta_points",
        "phi_points",
        "tol",
        "out",
        "format",
    },
    "baselines": {"kind", "N", "per_decade", "tol", "out", "format"},
    "fit": {"kind", "in", "x", "y"},
}


def _require(doc, key, kind):
    if key not in doc or doc[key] is None:
        raise ConfigError(f"{kind}: missing required key {key!r}")
    return doc[key]


def _check_n(n):
    n = int(n)
    if n < 2:
        raise ConfigError("N >= 2 required")
    return n


def _gamma_grid_from(doc):
    spec = doc["gamma_grid"]
    if isinstance(spec, (list, tuple)):
        grid = tuple(float(g) for g in spec)
    elif isinstance(spec, dict):
        unknown = set(spec) - {"min", "max", "count", "spacing"}
        if unknown:
            raise ConfigError(f"gamma_grid: unknown keys {sorted(unknown)}")
        lo = float(spec.get("min", 0.05))
        hi = float(spec.get("max", 3.0))
        count = int(spec.get("count", 60))
        spacing = spec.get("spacing", "linear")
        if not 0 < lo < hi or count < 2:
            raise ConfigError("gamma_grid: need 0 < min < max and count >= 2")
        if spacing == "linear":
            grid = tuple(np.linspace(lo, hi, count))
        elif spacing == "log":
            grid = tuple(np.geomspace(lo, hi, count))
        else:
            raise ConfigError("gamma_grid: spacing must be linear or log")
    else:
        raise ConfigError("gamma_grid must be a list or {min, max, count}")
    if any(g <= 0 for g in grid):
        raise ConfigError("gamma grid must be positive")
    return grid


def parse_config(doc):
    """Validate a config mapping into an ExperimentConfig.

    Unknown keys are rejected so typos fail loudly instead of silently
    running defaults.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key-value mapping")
    kind = doc.get("kind")
    if kind not in _ALLOWED_KEYS:
        raise ConfigError(
            f"unknown experiment kind {kind!r}; expected one of "
            f"{sorted(_ALLOWED_KEYS)}"
        )
    unknown = set(doc) - _ALLOWED_KEYS[kind]
    if unknown:
        raise ConfigError(f"{kind}: unknown keys {sorted(unknown)}")

    fields = {"kind": kind}
    if "out" in doc:
        fields["out_dir"] = str(doc["out"])
    if "format" in doc:
        if doc["format"] not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        fields["out_format"] = doc["format"]
    for key, name, conv in (
        ("tol", "tol", float),
        ("rel_tol", "rel_tol", float),
        ("per_decade", "per_decade", int),
        ("workers", "workers", int),
        ("theta_points", "theta_points", int),
        ("phi_points", "phi_points", int),
    ):
        if key in doc:
            fields[name] = conv(doc[key])

    if kind == "steady":
        fields["n_atoms"] = _check_n(_require(doc, "N", kind))
        fields["gamma_over_chi"] = float(_require(doc, "gamma_over_chi", kind))
    elif kind == "evolve":
        fields["n_atoms"] = _check_n(_require(doc, "N", kind))
        fields["gamma_over_chi"] = float(_require(doc, "gamma_over_chi", kind))
        fields["duration"] = float(_require(doc, "duration", kind))
        if fields["duration"] <= 0:
            raise ConfigError("duration must be > 0")
        if "q_times" in doc:
            fields["q_times"] = tuple(float(t) for t in doc["q_times"])
    elif kind == "sweep":
        fields["n_atoms"] = _check_n(_require(doc, "N", kind))
        fields["gamma_grid"] = _gamma_grid_from(
            doc if "gamma_grid" in doc else {"gamma_grid": {}}
        )
        fields["dynamic"] = bool(doc.get("dynamic", False))
    elif kind == "scaling-steady":
        if "N_grid" in doc:
            fields["n_grid"] = tuple(_check_n(n) for n in doc["N_grid"])
        rule = doc.get("gamma_rule", "1/(0.03N)")
        if rule not in GAMMA_RULES:
            raise ConfigError(
                f"gamma_rule {rule!r} not supported; known: {sorted(GAMMA_RULES)}"
            )
        fields["gamma_rule"] = rule
    elif kind == "scaling-dynamic":
        if "N_grid" in doc:
            fields["n_grid"] = tuple(_check_n(n) for n in doc["N_grid"])
        fields["gamma_over_chi"] = float(_require(doc, "gamma_over_chi", kind))
        if fields["gamma_over_chi"] <= 0:
            raise ConfigError("gamma_over_chi must be > 0")
    elif kind == "qfunc":
        fields["n_atoms"] = _check_n(_require(doc, "N", kind))
        fields["gamma_over_chi"] = float(_require(doc, "gamma_over_chi", kind))
        fields["use_steady_state"] = bool(doc.get("steady", False))
        if not fields["use_steady_state"]:
            fields["t"] = float(_require(doc, "t", kind))
            if fields["t"] <= 0:
                raise ConfigError("t must be > 0")
    elif kind == "baselines":
        fields["n_atoms"] = _check_n(_require(doc, "N", kind))
    elif kind == "fit":
        fields["fit_in"] = str(_require(doc, "in", kind))
        fields["fit_x"] = str(_require(doc, "x", kind))
        fields["fit_y"] = str(_require(doc, "y", kind))
    try:
        return ExperimentConfig(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _writer(fmt):
    return write_csv if fmt == "csv" else write_json


def _out_path(conf, stem):
    os.makedirs(conf.out_dir, exist_ok=True)
    return os.path.join(conf.out_dir, f"{stem}.{conf.out_format}")


def _config_doc(conf):
    # canonical dict for hashing: dataclass fields, sorted, JSON-safe;
    # where the data lands (out_dir, format) does not identify the data,
    # and workers must not change results at all
    doc = {}
    for k, v in vars(conf).items():
        if k in ("out_dir", "out_format", "workers"):
            continue
        doc[k] = list(v) if isinstance(v, tuple) else v
    return doc


def _emit(conf, stem, table):
    path = _out_path(conf, stem)
    _writer(conf.out_format)(table, path)
    print(f"wrote {path}")
    return path


def _fmt_g(x):
    return f"{float(x):g}"


def _log_pair(t, log10_p):
    """(p, total_time) with 0.0 sentinels when out of double range."""
    p = 10.0**log10_p if log10_p > -307 else 0.0
    log10_total = float(np.log10(t) - log10_p)
    total = 10.0**log10_total if log10_total < 307 else 0.0
    return p, total, log10_total


def _do_steady(conf):
    params = ModelParams(conf.n_atoms, conf.gamma_over_chi)
    pair = steady_state(build_h_eff(params))
    xi2, alpha, _ = squeezing_parameter(pair.right_eigenvector)
    ev = pair.eigenvalue
    print(f"xi2_steady={xi2:.17g}")
    print(f"xi2_steady_db={to_db(xi2):.17g}")
    print(f"alpha_min={alpha:.17g}")
    print(f"eigenvalue={ev.real:.17g}{ev.imag:+.17g}j")
    print(f"residual={pair.residual:.6g}")
    table = OutputTable(
        "steady",
        1,
        ("xi2_steady", "alpha_min", "e_real", "e_imag", "residual"),
        ("dimensionless", "rad", "chi", "chi", "chi"),
        ((xi2, alpha, ev.real, ev.imag, pair.residual),),
        provenance_for(_config_doc(conf)),
    )
    _emit(conf, f"steady_N{conf.n_atoms}_g{_fmt_g(conf.gamma_over_chi)}", table)
    return 0


def _trace_rows(trace):
    return tuple(
        (s.t, s.xi2, s.alpha_min, s.p, s.jz_mean) for s in trace.snapshots
    )


def _do_evolve(conf):
    result = run_evolution(
        conf.n_atoms,
        conf.gamma_over_chi,
        conf.duration,
        per_decade=conf.per_decade,
        tol=conf.tol,
        q_times=conf.q_times,
        q_grid_shape=(conf.theta_points, conf.phi_points),
    )
    prov = provenance_for(_config_doc(conf))
    table = OutputTable(
        "trace",
        1,
        ("t", "xi2", "alpha_min", "p", "jz_mean"),
        ("chi_t", "dimensionless", "rad", "probability", "hbar"),
        _trace_rows(result.trace),
        prov,
    )
    stem = f"trace_N{conf.n_atoms}_g{_fmt_g(conf.gamma_over_chi)}"
    _emit(conf, stem, table)
    for t, qgrid in result.q_snapshots:
        _emit(conf, f"qfunc_N{conf.n_atoms}_g{_fmt_g(conf.gamma_over_chi)}_t{_fmt_g(t)}",
              _qfunc_table(qgrid, prov))
    xi2 = result.trace.xi2
    i = int(np.argmin(xi2))
    print(f"samples={len(xi2)} xi2_last={xi2[-1]:.6g} xi2_grid_min={xi2[i]:.6g} "
          f"at t={result.trace.times[i]:.6g}")
    return 0


def _qfunc_table(qgrid, prov):
    rows = []
    for i, th in enumerate(qgrid.theta):
        for j, ph in enumerate(qgrid.phi):
            rows.append((th, ph, qgrid.values[i, j]))
    return OutputTable(
        "qfunc",
        1,
        ("theta", "phi", "q"),
        ("rad", "rad", "dimensionless"),
        tuple(rows),
        prov,
    )


def _do_sweep(conf):
    prov = provenance_for(_config_doc(conf))
    if conf.dynamic:
        res = run_gamma_sweep_dynamic(
            conf.n_atoms,
            conf.gamma_grid,
            rel_tol=conf.rel_tol,
            per_decade=conf.per_decade,
            tol=conf.tol,
            workers=conf.workers,
        )
        rows = []
        for r in res.rows:
            p, total, log10_total = _log_pair(r.t_min, r.log10_p)
            rows.append(
                (r.gamma_over_chi, r.xi2_min, r.t_min, p, r.log10_p, total,
                 log10_total, 1.0 if r.kind == "interior" else 0.0)
            )
        table = OutputTable(
            "dynamic_sweep",
            1,
            ("gamma_over_chi", "xi2_min", "t_min", "p", "log10_p",
             "total_time", "log10_total_time", "interior"),
            ("dimensionless", "dimensionless", "chi_t", "probability", "log10",
             "chi_t", "log10", "flag"),
            tuple(rows),
            prov,
            (
                ("xi2_min_monotone_increasing_with_gamma",
                 str(res.xi2_monotone_increasing_with_gamma).lower()),
                ("t_min_monotone_decreasing_with_gamma",
                 str(res.t_monotone_decreasing_with_gamma).lower()),
            ),
        )
        stem = f"dynamic_sweep_N{conf.n_atoms}"
    else:
        res = run_steady_sweep(conf.n_atoms, conf.gamma_grid, workers=conf.workers)
        rows = tuple(
            (g, x, a) for g, x, a in zip(res.gammas, res.xi2, res.alpha_min)
        )
        table = OutputTable(
            "steady_sweep",
            1,
            ("gamma_over_chi", "xi2_steady", "alpha_min"),
            ("dimensionless", "dimensionless", "rad"),
            rows,
            prov,
            (
                ("oat_xi2_min", f"{res.oat.xi2_min:.17g}"),
                ("oat_t_min", f"{res.oat.t_min:.17g}"),
                ("tact_xi2_min", f"{res.tact.xi2_min:.17g}"),
                ("tact_t_min", f"{res.tact.t_min:.17g}"),
            ),
        )
        stem = f"steady_sweep_N{conf.n_atoms}"
        i = int(np.argmin(res.xi2))
        print(f"min xi2_steady={res.xi2[i]:.6g} at gamma_over_chi="
              f"{res.gammas[i]:.6g}")
    _emit(conf, stem, table)
    return 0


def _scaling_rows(rows):
    out = []
    for r in rows:
        p, total, log10_total = _log_pair(r.t, r.log10_p)
        out.append(
            (float(r.n_atoms), r.xi2, r.alpha_min, r.t, p, r.log10_p, total,
             log10_total, 1.0 if r.kind == "interior" else 0.0)
        )
    return tuple(out)


_SCALING_COLS = ("N", "xi2", "alpha_min", "t", "p", "log10_p", "total_time",
                 "log10_total_time", "interior")
_SCALING_UNITS = ("count", "dimensionless", "rad", "chi_t", "probability",
                  "log10", "chi_t", "log10", "flag")


def _fit_extra(prefix, fit):
    return (
        (f"{prefix}_amplitude", f"{fit.amplitude:.17g}"),
        (f"{prefix}_exponent", f"{fit.exponent:.17g}"),
        (f"{prefix}_residual", f"{fit.residual:.17g}"),
    )


def _do_scaling_steady(conf):
    study = run_scaling_steady(
        conf.n_grid,
        rel_tol=conf.rel_tol,
        per_decade=conf.per_decade,
        tol=conf.tol,
        workers=conf.workers,
    )
    table = OutputTable(
        "scaling_steady",
        1,
        _SCALING_COLS,
        _SCALING_UNITS,
        _scaling_rows(study.rows),
        provenance_for(_config_doc(conf)),
        _fit_extra("fit_xi2", study.xi2_fit),
    )
    _emit(conf, "scaling_steady", table)
    print(f"fit_xi2: amplitude={study.xi2_fit.amplitude:.6g} "
          f"exponent={study.xi2_fit.exponent:.6g} "
          f"residual={study.xi2_fit.residual:.3g}")
    return 0


def _do_scaling_dynamic(conf):
    study = run_scaling_dynamic(
        conf.n_grid,
        conf.gamma_over_chi,
        rel_tol=conf.rel_tol,
        per_decade=conf.per_decade,
        tol=conf.tol,
        workers=conf.workers,
    )
    extra = _fit_extra("fit_xi2", study.xi2_fit) + _fit_extra("fit_t", study.t_fit)
    table = OutputTable(
        "scaling_dynamic",
        1,
        _SCALING_COLS,
        _SCALING_UNITS,
        _scaling_rows(study.rows),
        provenance_for(_config_doc(conf)),
        extra,
    )
    _emit(conf, f"scaling_dynamic_g{_fmt_g(conf.gamma_over_chi)}", table)
    for name, fit in (("fit_xi2", study.xi2_fit), ("fit_t", study.t_fit)):
        print(f"{name}: amplitude={fit.amplitude:.6g} "
              f"exponent={fit.exponent:.6g} residual={fit.residual:.3g}")
    return 0


def _do_qfunc(conf):
    params = ModelParams(conf.n_atoms, conf.gamma_over_chi)
    if conf.use_steady_state:
        pair = steady_state(build_h_eff(params))
        state = pair.right_eigenvector
        label = "steady"
    else:
        state = SpinState.all_down(params.sector)
        state = propagate(state, build_h_eff(params), conf.t, tol=conf.tol)
        label = f"t{_fmt_g(conf.t)}"
    theta = np.linspace(0.0, np.pi, conf.theta_points)
    phi = np.linspace(0.0, 2.0 * np.pi, conf.phi_points)
    qgrid = husimi_q(state, theta, phi)
    prov = provenance_for(_config_doc(conf))
    _emit(conf, f"qfunc_N{conf.n_atoms}_g{_fmt_g(conf.gamma_over_chi)}_{label}",
          _qfunc_table(qgrid, prov))
    print(f"norm_integral={qgrid.norm_integral():.6g}")
    return 0


def _do_baselines(conf):
    oat = baseline_oat(conf.n_atoms, per_decade=conf.per_decade)
    tact = baseline_tact(conf.n_atoms, per_decade=conf.per_decade)
    rows = (
        (0.0, oat.xi2_min, oat.t_min, oat.xi2_asymptotic, oat.t_asymptotic),
        (1.0, tact.xi2_min, tact.t_min, tact.xi2_asymptotic, tact.t_asymptotic),
    )
    table = OutputTable(
        "baselines",
        1,
        ("is_tact", "xi2_min", "t_min", "xi2_asymptotic", "t_asymptotic"),
        ("flag", "dimensionless", "chi_t", "dimensionless", "chi_t"),
        rows,
        provenance_for(_config_doc(conf)),
    )
    _emit(conf, f"baselines_N{conf.n_atoms}", table)
    print(f"oat: xi2_min={oat.xi2_min:.6g} t_min={oat.t_min:.6g}")
    print(f"tact: xi2_min={tact.xi2_min:.6g} t_min={tact.t_min:.6g}")
    return 0


def _do_fit(conf):
    table = read_csv(conf.fit_in)
    fit = fit_power_law(table.column(conf.fit_x), table.column(conf.fit_y))
    print(f"amplitude={fit.amplitude:.17g}")
    print(f"exponent={fit.exponent:.17g}")
    print(f"residual={fit.residual:.17g}")
    return 0


_DISPATCH = {
    "steady": _do_steady,
    "evolve": _do_evolve,
    "sweep": _do_sweep,
    "scaling-steady": _do_scaling_steady,
    "scaling-dynamic": _do_scaling_dynamic,
    "qfunc": _do_qfunc,
    "baselines": _do_baselines,
    "fit": _do_fit,
}


def _build_parser():
    parser = _Parser(prog="squeezenh", description=__doc__)
    sub = parser.add_subparsers(dest="kind")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--n", type=int, help="atom number N")
    common.add_argument("--gamma-over-chi", type=float)
    common.add_argument("--duration", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--workers", type=int)
    for kind in _DISPATCH:
        p = sub.add_parser(kind, parents=[common])
        if kind == "sweep":
            p.add_argument("--dynamic", action="store_true", default=None)
        if kind == "qfunc":
            p.add_argument("--t", type=float)
            p.add_argument("--steady", action="store_true", default=None)
            p.add_argument("--theta-points", type=int)
            p.add_argument("--phi-points", type=int)
        if kind == "fit":
            p.add_argument("--in", dest="fit_in")
            p.add_argument("--x", dest="fit_x")
            p.add_argument("--y", dest="fit_y")
    return parser


def _merge_args(args):
    """Config document = file config overlaid by explicit CLI flags."""
    doc = {}
    if args.config:
        with open(args.config) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    doc["kind"] = args.kind
    flag_to_key = {
        "out": "out",
        "format": "format",
        "n": "N",
        "gamma_over_chi": "gamma_over_chi",
        "duration": "duration",
        "tol": "tol",
        "workers": "workers",
        "dynamic": "dynamic",
        "t": "t",
        "steady": "steady",
        "theta_points": "theta_points",
        "phi_points": "phi_points",
        "fit_in": "in",
        "fit_x": "x",
        "fit_y": "y",
    }
    for attr, key in flag_to_key.items():
        val = getattr(args, attr, None)
        if val is not None:
            doc[key] = val
    if "workers" not in doc:
        env = os.environ.get("SQUEEZENH_WORKERS")
        if env:
            try:
                doc["workers"] = int(env)
            except ValueError:
                raise ConfigError(
                    f"SQUEEZENH_WORKERS={env!r} is not an integer"
                ) from None
    return doc


def cli_main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.kind is None:
            raise ConfigError(parser.format_usage().rstrip())
        conf = parse_config(_merge_args(args))
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return _DISPATCH[conf.kind](conf)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
