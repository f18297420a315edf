"""Experiment drivers: grids, baselines, optimum search, stop rules."""

import numpy as np
import pytest
import scipy.linalg as sla

import oracles
import squeezenh.experiments as ex
from squeezenh.basis import SpinSector, SpinState
from squeezenh.operators import ModelParams, build_h_eff, build_h_tact
from squeezenh.squeezing import squeezing_parameter
from squeezenh.experiments import (
    sample_grid,
    baseline_oat,
    baseline_tact,
    run_evolution,
    run_steady_sweep,
    run_gamma_sweep_dynamic,
    run_scaling_steady,
    steady_scaling_gamma,
    _classify_stop,
    _dynamic_optimum,
)


def _dense_minimum(n, h_dense, t_lo, t_hi, samples=4000):
    """Golden-refined brute-force minimum of xi^2(t) via dense expm."""
    psi0 = np.zeros(n + 1, dtype=complex)
    psi0[0] = 1.0

    def xi2_at(t):
        psi = sla.expm(-1j * t * h_dense) @ psi0
        var, _ = oracles.variance_scan_min(psi, n, n_angles=4001)
        phi = psi / np.linalg.norm(psi)
        m = np.arange(n + 1) - n / 2.0
        jnorm = abs(np.vdot(phi, m * phi).real)
        return n * var / jnorm**2

    ts = np.linspace(t_lo, t_hi, samples)
    vals = [xi2_at(t) for t in ts]
    i = int(np.argmin(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, samples - 1)]
    for _ in range(40):
        m1 = lo + 0.382 * (hi - lo)
        m2 = lo + 0.618 * (hi - lo)
        if xi2_at(m1) < xi2_at(m2):
            hi = m2
        else:
            lo = m1
    t_best = 0.5 * (lo + hi)
    return t_best, xi2_at(t_best)


def test_sample_grid_structure():
    g = sample_grid(1e-3, 20.0, 400)
    assert g[0] == pytest.approx(1e-3)
    assert g[-1] <= 20.0 + 1e-12
    assert np.all(np.diff(g) > 0)
    # geometric until unit scale: constant ratio, about 400 per decade
    ratios = g[1:50] / g[:49]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    assert ratios[0] == pytest.approx(10.0 ** (1.0 / 400.0), rel=1e-3)
    # linear tail: constant step
    tail = g[g > 2.0]
    steps = np.diff(tail)
    assert np.allclose(steps, steps[0], rtol=1e-9)


def test_sample_grid_short_window():
    g = sample_grid(0.01, 0.05, 100)
    assert g[0] == pytest.approx(0.01)
    assert g[-1] == pytest.approx(0.05)
    assert np.all(np.diff(g) > 0)


def test_oat_baseline_matches_brute_force():
    n = 18
    params = ModelParams(n, 0.0)
    jx, _, _ = oracles.dicke_matrices(n)
    t_ref, xi2_ref = _dense_minimum(n, jx @ jx, 0.05, 0.5, samples=400)
    base = baseline_oat(n)
    assert base.xi2_min == pytest.approx(xi2_ref, rel=1e-5)
    assert base.t_min == pytest.approx(t_ref, rel=1e-3)
    assert base.xi2_asymptotic == pytest.approx(1.15 * n ** (-2.0 / 3.0))
    assert base.t_asymptotic == pytest.approx(1.2 * n ** (-2.0 / 3.0))


def test_tact_baseline_matches_brute_force():
    n = 14
    h = build_h_tact(ModelParams(n, 0.0))
    t_ref, xi2_ref = _dense_minimum(n, h.to_dense(), 0.02, 0.4, samples=400)
    base = baseline_tact(n)
    assert base.xi2_min == pytest.approx(xi2_ref, rel=1e-5)
    assert base.t_min == pytest.approx(t_ref, rel=1e-3)


def test_tact_beats_oat_at_fixed_n():
    oat = baseline_oat(20)
    tact = baseline_tact(20)
    assert tact.xi2_min < oat.xi2_min
    assert tact.t_min < oat.t_min


def test_run_evolution_consistent_with_baseline_pipeline():
    res = run_evolution(20, 0.0, duration=0.5)
    base = baseline_oat(20)
    i = int(np.argmin(res.trace.xi2))
    assert res.trace.xi2[i] == pytest.approx(base.xi2_min, rel=1e-4)
    assert np.all(res.trace.p == pytest.approx(1.0, abs=1e-9))
    assert res.q_snapshots == ()


def test_run_evolution_validates_duration():
    with pytest.raises(ValueError, match="duration"):
        run_evolution(10, 0.5, duration=0.0)


def test_run_evolution_collects_q_snapshots():
    res = run_evolution(10, 0.5, duration=0.2, q_times=(0.1, 0.2))
    assert [t for t, _ in res.q_snapshots] == [0.1, 0.2]
    for _, grid in res.q_snapshots:
        assert grid.values.shape == (181, 361)
        assert grid.norm_integral() == pytest.approx(1.0, abs=1e-3)


def test_steady_scaling_gamma_rule():
    assert steady_scaling_gamma(100) == pytest.approx(1.0 / 3.0)
    assert steady_scaling_gamma(1000) == pytest.approx(1.0 / 30.0)


def test_classify_stop_requires_significant_dip():
    t = np.linspace(0.01, 1.0, 200)
    ss = 1.0
    # dip to 0.97 ss: not significant, settles -> plateau
    x = ss + 0.5 * np.exp(-8 * t) - 0.53 * np.exp(-9 * t)
    p = np.exp(-t)
    kind = _classify_stop(t, x, p, ss, "dynamic", 0.01, True)
    assert kind in (None, "plateau")
    assert kind != "interior"


def test_classify_stop_interior_needs_low_survival():
    # deep dip + full rise, but survival still ~1 at the dip: twisting
    # transient, must not classify as the conditional optimum
    t = np.linspace(0.01, 2.0, 400)
    x = 1.0 - 0.9 * np.exp(-(((t - 0.3) / 0.1) ** 2))
    p_high = np.full_like(t, 0.99)
    # vetoed dip with the curve settled: the optimum is the plateau
    assert _classify_stop(t, x, p_high, 1.0, "dynamic", 0.01, True) == "plateau"
    p_low = np.full_like(t, 0.3)
    assert (
        _classify_stop(t, x, p_low, 1.0, "dynamic", 0.01, True) == "interior"
    )
    # without dissipation the survival gate does not apply
    assert (
        _classify_stop(t, x, p_high, 1.0, "dynamic", 0.01, False) == "interior"
    )


def test_classify_stop_interior_rise_fraction():
    # dip to 0.4 ss that only climbs back to 0.5: not yet bracketed
    t = np.linspace(0.01, 1.0, 100)
    x = np.concatenate([np.linspace(1.0, 0.4, 50), np.linspace(0.4, 0.5, 50)])
    p = np.full_like(t, 0.2)
    assert _classify_stop(t, x, p, 1.0, "dynamic", 0.01, True) is None
    # climbing back to 0.8 of the way exceeds the 0.6 fraction
    x2 = np.concatenate([np.linspace(1.0, 0.4, 50), np.linspace(0.4, 0.88, 50)])
    assert _classify_stop(t, x2, p, 1.0, "dynamic", 0.01, True) == "interior"


def test_classify_stop_no_steady_reference():
    t = np.linspace(0.01, 1.0, 100)
    x = np.concatenate([np.linspace(1.0, 0.1, 50), np.linspace(0.1, 0.5, 50)])
    p = np.exp(-t)
    # gamma = 0: 3x rise brackets the minimum without a steady value
    assert _classify_stop(t, x, p, None, "dynamic", 0.01, False) == "interior"
    # dissipative without a steady value: never classify
    assert _classify_stop(t, x, p, None, "dynamic", 0.01, True) is None


def test_classify_stop_plateau():
    t = np.linspace(0.01, 4.0, 400)
    x = 1.0 + 0.5 * np.exp(-6 * t)
    p = np.exp(-t)
    assert _classify_stop(t, x, p, 1.0, "steady", 0.01, True) == "plateau"
    # still far from settled
    early = slice(0, 80)
    assert _classify_stop(t[early], x[early], p[early], 1.0, "steady", 0.01, True) is None


def test_dynamic_optimum_lazy_matches_eager():
    params = ModelParams(120, 0.5)
    eager = _dynamic_optimum(params, 0.01, 400, 1e-8)
    old = ex._EAGER_STEADY_DIM
    try:
        ex._EAGER_STEADY_DIM = 10
        lazy = _dynamic_optimum(params, 0.01, 400, 1e-8)
    finally:
        ex._EAGER_STEADY_DIM = old
    assert lazy[1] == eager[1]
    assert lazy[2] == pytest.approx(eager[2], rel=1e-9)
    assert lazy[3] == pytest.approx(eager[3], rel=1e-6)


def test_steady_sweep_has_interior_minimum():
    gammas = np.linspace(0.2, 1.0, 9)
    res = run_steady_sweep(20, gammas)
    i = int(np.argmin(res.xi2))
    assert 0 < i < len(gammas) - 1
    assert res.oat.xi2_min > res.tact.xi2_min


def test_gamma_sweep_dynamic_monotonicity_flags():
    gammas = np.array([0.4673, 1.19, 1.6393])
    res = run_gamma_sweep_dynamic(20, gammas)
    assert res.xi2_monotone_increasing_with_gamma
    assert res.t_monotone_decreasing_with_gamma
    kinds = [r.kind for r in res.rows]
    assert kinds == ["plateau", "plateau", "interior"]


def test_scaling_steady_small_grid():
    res = run_scaling_steady(n_grid=(40, 80, 160))
    xi2 = [r.xi2 for r in res.rows]
    assert xi2[0] > xi2[1] > xi2[2]
    assert res.xi2_fit.exponent < -0.8
    for r in res.rows:
        assert 0.0 < r.t <= 20.0
        assert r.log10_p < 0.0
        assert r.kind == "plateau"
