"""Study-level experiment recipes: sweeps, traces, scaling studies, baselines.

Each experiment is a deterministic function of its parameters: fixed grids,
no randomness, rows assembled in grid order even when points run on a
worker pool. Times are the dimensionless chi*t.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .basis import SpinState
from .operators import ModelParams, build_h_eff, build_h_tact, build_jz, expectation
from .dynamics import (
    EvolutionTrace,
    propagate,
    survival_probability,
    steady_state,
    detect_steady_time,
    _steady_from_trajectory,
)
from .squeezing import (
    SqueezingSnapshot,
    PowerLawFit,
    squeezing_parameter,
    husimi_q,
    detect_t_min,
    fit_power_law,
)

# 5 points per decade from 1e2 to 10^3.5, the runtime-capped scaling grid
N_GRID_DEFAULT = (100, 178, 316, 562, 1000, 1778, 3162)

# interior dip must undercut steady xi^2 by this fraction to count as the
# optimum; shallower dips are plateau-type and t_min is the settling time
DIP_SIGNIFICANCE = 0.05

TIME_CAP = 20.0


def steady_scaling_gamma(n_atoms):
    """The gamma/chi = 1/(0.03 N) rule of the steady scaling study."""
    return 1.0 / (0.03 * n_atoms)


GAMMA_RULES = {"1/(0.03N)": steady_scaling_gamma}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one experiment invocation.

    Populated by the config parser in the cli module; field applicability
    depends on kind (steady | evolve | sweep | scaling-steady |
    scaling-dynamic | qfunc | baselines | fit).
    """

    kind: str
    n_atoms: int = 0
    n_grid: tuple = N_GRID_DEFAULT
    gamma_over_chi: float = 0.0
    gamma_grid: tuple = ()
    gamma_rule: str = "1/(0.03N)"
    duration: float = 0.0
    t: float = 0.0
    use_steady_state: bool = False
    dynamic: bool = False
    q_times: tuple = ()
    theta_points: int = 181
    phi_points: int = 361
    rel_tol: float = 0.01
    per_decade: int = 400
    tol: float = 1e-8
    workers: int = 1
    out_dir: str = "."
    out_format: str = "csv"
    fit_in: str = ""
    fit_x: str = ""
    fit_y: str = ""


def sample_grid(t_lo, t_hi, per_decade=400, linear_from=2.0):
    """Geometric time grid, switching to linear spacing past linear_from.

    Geometric spacing keeps about per_decade samples per decade near t = 0
    where the squeezing minimum lives; the linear tail bounds the late-time
    step so settling detection keeps resolution.
    """
    if t_lo <= 0 or t_hi <= t_lo:
        raise ValueError("need 0 < t_lo < t_hi")
    t_geo_hi = min(t_hi, linear_from)
    n_geo = max(2, int(round(per_decade * np.log10(t_geo_hi / t_lo))) + 1)
    grid = np.geomspace(t_lo, t_geo_hi, n_geo)
    if t_hi > linear_from:
        step = linear_from * np.log(10.0) / per_decade
        tail = np.arange(linear_from + step, t_hi + step / 2, step)
        grid = np.concatenate([grid, tail])
    return grid


class EvolutionResult(NamedTuple):
    trace: EvolutionTrace
    q_snapshots: tuple


class BaselineResult(NamedTuple):
    """Numerically exact Hermitian optimum plus the textbook asymptotics."""

    xi2_min: float
    t_min: float
    xi2_asymptotic: float
    t_asymptotic: float


class SweepResult(NamedTuple):
    gammas: np.ndarray
    xi2: np.ndarray
    alpha_min: np.ndarray
    oat: BaselineResult
    tact: BaselineResult


class ScalingRow(NamedTuple):
    n_atoms: int
    xi2: float
    alpha_min: float
    t: float
    log10_p: float
    kind: str  # "interior" dip or steady "plateau"

    @property
    def p(self):
        return 10.0**self.log10_p

    @property
    def log10_total_time(self):
        return float(np.log10(self.t) - self.log10_p)


class ScalingStudy(NamedTuple):
    rows: tuple
    xi2_fit: PowerLawFit
    t_fit: object  # PowerLawFit or None


class DynamicSweepRow(NamedTuple):
    gamma_over_chi: float
    xi2_min: float
    t_min: float
    log10_p: float
    kind: str

    @property
    def log10_total_time(self):
        return float(np.log10(self.t_min) - self.log10_p)


class DynamicSweepResult(NamedTuple):
    rows: tuple
    xi2_monotone_increasing_with_gamma: bool
    t_monotone_decreasing_with_gamma: bool


def _snapshot(t, state, jz_op):
    xi2, alpha, _ = squeezing_parameter(state)
    return SqueezingSnapshot(
        t=float(t),
        xi2=float(xi2),
        alpha_min=float(alpha),
        p=survival_probability(state),
        jz_mean=float(expectation(jz_op, state.amplitudes).real),
    )


# a dip with survival probability still above this is twisting-only
# transient structure: with dissipation on, the true conditional optimum
# costs real post-selection probability, while the early one-axis dip
# happens before the norm has decayed (P ~ 0.99 there, <= 0.4 at genuine
# optima across the studied parameter plane)
P_TWISTING_GATE = 0.75


def _classify_stop(times, xi2, p, xi2_ss, mode, rel_tol, dissipative):
    """Stop decision on the trace so far; returns "interior"/"plateau"/None.

    Interior: a dip significantly below steady xi^2 whose survival
    probability is past the twisting gate, with the curve already risen
    well back toward steady (optimum safely bracketed). Plateau: the
    trailing half of the trace sits inside the settle band (a pending dip
    breaks this by dropping below the band). Without a steady value
    (gamma = 0), the 3x-rise rule brackets the Hermitian minimum.
    """
    x = np.asarray(xi2)
    t = np.asarray(times)
    i_min = int(np.argmin(x))
    x_min = x[i_min]
    if xi2_ss is None:
        if dissipative:
            return None
        if x[i_min:].max() >= 3.0 * x_min:
            return "interior"
        return None
    if (
        mode == "dynamic"
        and x_min < (1.0 - DIP_SIGNIFICANCE) * xi2_ss
        and (not dissipative or p[i_min] < P_TWISTING_GATE)
    ):
        risen = x[i_min:].max()
        if risen >= min(3.0 * x_min, x_min + 0.6 * (xi2_ss - x_min)):
            return "interior"
    trailing = t > t[-1] / 2.0
    if trailing.sum() >= 8:
        inband = np.abs(x - xi2_ss) / xi2_ss < rel_tol
        if inband[trailing].all():
            return "plateau"
    return None


def _run_trace(
    params,
    h,
    duration=None,
    xi2_ss=None,
    mode="dynamic",
    rel_tol=0.01,
    per_decade=400,
    tol=1e-8,
    cap=TIME_CAP,
    q_times=(),
    q_grid_shape=(181, 361),
    acquire_ss=None,
):
    """March the adaptive sampling grid, collecting snapshots.

    With duration set, runs the fixed window with no stop rule. Otherwise
    extends until _classify_stop fires or the time cap is reached. When
    acquire_ss is given (a state -> xi2 callable, used where the steady
    eigensolve is too costly up front), the steady value is acquired from
    the trajectory itself once the norm has decayed past the twisting
    gate. Returns (trace, kind, q_snapshots, xi2_ss).
    """
    sector = params.sector
    jz_op = build_jz(sector)
    dissipative = params.gamma > 0
    t_lo = 0.01 * params.n_atoms ** (-2.0 / 3.0)
    t_hi = duration if duration is not None else cap
    grid = sample_grid(t_lo, t_hi, per_decade)
    if len(q_times):
        grid = np.union1d(grid, np.asarray(q_times, dtype=float))
    q_wanted = set(float(t) for t in q_times)

    state = SpinState.all_down(sector)
    snaps = []
    qsnaps = []
    t_prev = 0.0
    kind = None
    check_every = 40

    best_im = -np.inf

    def classify(force=False):
        nonlocal xi2_ss, best_im
        if acquire_ss is not None and snaps[-1].p < P_TWISTING_GATE:
            # re-acquire while the trace runs: a slower-decaying pair
            # found later supersedes any earlier capture
            got = acquire_ss(state)
            if got is not None and got[1] > best_im:
                xi2_ss, best_im = got
        if xi2_ss is None and dissipative and not force:
            return None
        return _classify_stop(
            [s.t for s in snaps],
            [s.xi2 for s in snaps],
            [s.p for s in snaps],
            xi2_ss,
            mode,
            rel_tol,
            dissipative,
        )

    for i, t in enumerate(grid):
        state = propagate(state, h, t - t_prev, tol=tol)
        t_prev = t
        snaps.append(_snapshot(t, state, jz_op))
        if float(t) in q_wanted:
            n_th, n_ph = q_grid_shape
            theta = np.linspace(0.0, np.pi, n_th)
            phi = np.linspace(0.0, 2.0 * np.pi, n_ph)
            qsnaps.append((float(t), husimi_q(state, theta, phi)))
        if duration is None and (i + 1) % check_every == 0:
            kind = classify()
            if kind is not None:
                break
    if duration is None and kind is None:
        kind = classify(force=True)
        if kind is None and xi2_ss is not None:
            raise RuntimeError(
                "trace neither bracketed an interior minimum nor settled "
                f"by chi t = {cap}"
            )
    grid_desc = f"geometric-linear per_decade={per_decade} t_lo={t_lo:.6g}"
    trace = EvolutionTrace(params, tuple(snaps), grid_desc)
    return trace, kind, tuple(qsnaps), xi2_ss


def run_evolution(
    n_atoms,
    gamma_over_chi,
    duration,
    per_decade=400,
    tol=1e-8,
    q_times=(),
    q_grid_shape=(181, 361),
):
    """Conditional no-jump trajectory from the all-down state.

    Samples xi^2, alpha_min, survival probability, and <Jz> on the standard
    grid over (0, duration]. Optional Husimi Q snapshots at the listed
    times. gamma_over_chi = 0 is the Hermitian one-axis baseline.
    """
    if duration is None or duration <= 0:
        raise ValueError("duration must be > 0")
    params = ModelParams(n_atoms, gamma_over_chi)
    trace, _, qsnaps, _ = _run_trace(
        params,
        build_h_eff(params),
        duration=duration,
        per_decade=per_decade,
        tol=tol,
        q_times=q_times,
        q_grid_shape=q_grid_shape,
    )
    return EvolutionResult(trace, qsnaps)


def _hermitian_minimum(params, h, per_decade, tol):
    """gamma = 0 optimum via the adaptive 3x-rise trace, refined."""
    trace, _, _, _ = _run_trace(params, h, xi2_ss=None, per_decade=per_decade, tol=tol)
    est = detect_t_min(trace)
    return trace, est


def baseline_oat(n_atoms, per_decade=400, tol=1e-9):
    """Numerically exact Hermitian one-axis-twisting optimum.

    Same pipeline as run_evolution at gamma = 0; the asymptotic law
    (1.15 N^(-2/3) at chi t = 1.2 N^(-2/3)) rides along for reference.
    """
    params = ModelParams(n_atoms, 0.0)
    _, est = _hermitian_minimum(params, build_h_eff(params), per_decade, tol)
    return BaselineResult(
        est.xi2_min,
        est.t_min,
        1.15 * n_atoms ** (-2.0 / 3.0),
        1.2 * n_atoms ** (-2.0 / 3.0),
    )


def baseline_tact(n_atoms, per_decade=400, tol=1e-9):
    """Numerically exact two-axis counter-twisting optimum.

    Asymptotics for reference: 4/N at chi t = ln(4N)/(2N).
    """
    params = ModelParams(n_atoms, 0.0)
    _, est = _hermitian_minimum(params, build_h_tact(params), per_decade, tol)
    return BaselineResult(
        est.xi2_min,
        est.t_min,
        4.0 / n_atoms,
        np.log(4.0 * n_atoms) / (2.0 * n_atoms),
    )


def _steady_pair(params):
    pair = steady_state(build_h_eff(params))
    xi2, alpha, _ = squeezing_parameter(pair.right_eigenvector)
    return pair, float(xi2), float(alpha)


def _sweep_point(args):
    n_atoms, gamma = args
    _, xi2, alpha = _steady_pair(ModelParams(n_atoms, gamma))
    return xi2, alpha


def _map_grid(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_steady_sweep(n_atoms, gamma_grid, workers=1):
    """Steady-state xi^2 and alpha across a gamma/chi grid, with baselines."""
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if np.any(gamma_grid <= 0):
        raise ValueError("gamma grid must be positive")
    vals = _map_grid(_sweep_point, [(n_atoms, g) for g in gamma_grid], workers)
    xi2 = np.array([v[0] for v in vals])
    alpha = np.array([v[1] for v in vals])
    return SweepResult(
        gamma_grid, xi2, alpha, baseline_oat(n_atoms), baseline_tact(n_atoms)
    )


def _steady_row(args):
    n_atoms, rel_tol, per_decade, tol = args
    params = ModelParams(n_atoms, steady_scaling_gamma(n_atoms))
    _, xi2_ss, alpha = _steady_pair(params)
    trace, _, _, _ = _run_trace(
        params,
        build_h_eff(params),
        xi2_ss=xi2_ss,
        mode="steady",
        rel_tol=rel_tol,
        per_decade=per_decade,
        tol=tol,
    )
    t_s = detect_steady_time(trace, rel_tol, xi2_ss)
    i = int(np.searchsorted(trace.times, t_s))
    return ScalingRow(
        n_atoms, xi2_ss, alpha, float(t_s), _log10_p_from_trace(trace, i), "plateau"
    )


def _log10_p_from_trace(trace, i):
    # p = e^{2 log_norm} stays representable at every study scale here;
    # a zero would mean the run left that regime, which deserves a failure
    p = trace.p[i]
    if p > 0.0:
        return float(np.log10(p))
    raise RuntimeError("survival probability underflowed the snapshot")


def run_scaling_steady(
    n_grid=N_GRID_DEFAULT, rel_tol=0.01, per_decade=400, tol=1e-8, workers=1
):
    """Steady-state scaling study along gamma/chi = 1/(0.03 N).

    Per N: steady xi^2 and angle, settling time t_s, survival at t_s, and
    the fitted power law of xi^2(N).
    """
    items = [(int(n), rel_tol, per_decade, tol) for n in n_grid]
    rows = tuple(_map_grid(_steady_row, items, workers))
    fit = fit_power_law([r.n_atoms for r in rows], [r.xi2 for r in rows])
    return ScalingStudy(rows, fit, None)


# above this dimension the eigensolve behind the steady value costs more
# than the trace itself, so the trace runs first on the chance that a deep
# dip (3x rise off the minimum) classifies the optimum without it
_EAGER_STEADY_DIM = 3500


def _dynamic_optimum(params, rel_tol, per_decade, tol):
    """Locate the optimal squeezing of one conditional trajectory.

    A dip more than DIP_SIGNIFICANCE below steady xi^2 is an interior
    optimum (quadratically refined argmin); otherwise the optimum is the
    steady plateau and t_min is the settling time.
    """
    h = build_h_eff(params)
    if params.sector.dim <= _EAGER_STEADY_DIM:
        _, xi2_ss, _ = _steady_pair(params)
        trace, kind, _, xi2_ss = _run_trace(
            params,
            h,
            xi2_ss=xi2_ss,
            mode="dynamic",
            rel_tol=rel_tol,
            per_decade=per_decade,
            tol=tol,
        )
    else:

        def acquire(state):
            pair = _steady_from_trajectory(h, state)
            if pair is None:
                return None
            xi2 = float(squeezing_parameter(pair.right_eigenvector)[0])
            return xi2, float(pair.eigenvalue.imag)

        trace, kind, _, xi2_ss = _run_trace(
            params,
            h,
            rel_tol=rel_tol,
            per_decade=per_decade,
            tol=tol,
            acquire_ss=acquire,
        )
        if xi2_ss is None and params.gamma > 0:
            # trajectory seeding never converged: eigensolve after all
            _, xi2_ss, _ = _steady_pair(params)
            kind = _classify_stop(
                trace.times,
                trace.xi2,
                trace.p,
                xi2_ss,
                "dynamic",
                rel_tol,
                True,
            )
        if kind is None:
            raise RuntimeError(
                "trace neither bracketed an interior minimum nor "
                f"settled by chi t = {TIME_CAP}"
            )
    if kind == "interior":
        est = detect_t_min(trace)
        i = int(np.argmin(trace.xi2))
        return trace, kind, float(est.t_min), float(est.xi2_min), i
    t_s = detect_steady_time(trace, rel_tol, xi2_ss)
    i = int(np.searchsorted(trace.times, t_s))
    return trace, kind, float(t_s), float(xi2_ss), i


def _dynamic_row(args):
    n_atoms, gamma, rel_tol, per_decade, tol = args
    params = ModelParams(n_atoms, gamma)
    trace, kind, t_opt, xi2_opt, i = _dynamic_optimum(params, rel_tol, per_decade, tol)
    return ScalingRow(
        n_atoms,
        xi2_opt,
        float(trace.alpha_min[i]),
        t_opt,
        _log10_p_from_trace(trace, i),
        kind,
    )


def run_scaling_dynamic(
    n_grid=N_GRID_DEFAULT,
    gamma_over_chi=0.1,
    rel_tol=0.01,
    per_decade=400,
    tol=1e-8,
    workers=1,
):
    """Optimal-squeezing scaling study at fixed gamma/chi.

    Per N: the conditional optimum (xi^2_min, chi t_min, survival), with
    power-law fits of both xi^2_min(N) and t_min(N).
    """
    items = [(int(n), gamma_over_chi, rel_tol, per_decade, tol) for n in n_grid]
    rows = tuple(_map_grid(_dynamic_row, items, workers))
    xi2_fit = fit_power_law([r.n_atoms for r in rows], [r.xi2 for r in rows])
    t_fit = fit_power_law([r.n_atoms for r in rows], [r.t for r in rows])
    return ScalingStudy(rows, xi2_fit, t_fit)


def _gamma_point(args):
    n_atoms, gamma, rel_tol, per_decade, tol = args
    params = ModelParams(n_atoms, gamma)
    trace, kind, t_opt, xi2_opt, i = _dynamic_optimum(params, rel_tol, per_decade, tol)
    return DynamicSweepRow(gamma, xi2_opt, t_opt, _log10_p_from_trace(trace, i), kind)


def run_gamma_sweep_dynamic(
    n_atoms, gamma_grid, rel_tol=0.01, per_decade=400, tol=1e-8, workers=1
):
    """Optimal squeezing versus gamma/chi at fixed N, with monotonicity report."""
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if np.any(gamma_grid <= 0):
        raise ValueError("gamma grid must be positive")
    items = [(n_atoms, float(g), rel_tol, per_decade, tol) for g in gamma_grid]
    rows = tuple(_map_grid(_gamma_point, items, workers))
    order = np.argsort([r.gamma_over_chi for r in rows])
    xi2_sorted = np.array([rows[i].xi2_min for i in order])
    t_sorted = np.array([rows[i].t_min for i in order])
    return DynamicSweepResult(
        rows,
        bool(np.all(np.diff(xi2_sorted) >= 0)),
        bool(np.all(np.diff(t_sorted) <= 0)),
    )
