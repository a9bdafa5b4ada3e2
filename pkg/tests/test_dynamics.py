import numpy as np
import pytest
from scipy import stats

from shs6v.dynamics import (LEFT_FINITE, TRUNCATED, HeightField,
                            OccupancyWindow, RandomEnvironment,
                            enumerate_multistep_unfused, enumerate_step,
                            ensemble_initial, ensemble_step_fused,
                            ensemble_step_unfused, evolve_exact, make_initial,
                            step_fused, step_recursion, step_unfused)
from shs6v.errors import ParameterError, StateSpaceTooLarge, WindowOverflow
from shs6v.params import ModelParams, scaled_params, certified_margin
from shs6v.weights import build_table


def test_empty_window_stays_empty(p_basic):
    env = RandomEnvironment(p_basic, 1)
    w = OccupancyWindow(0, np.zeros(10, dtype=np.int64))
    out = step_unfused(w, 0, env)
    assert np.all(out.values == 0)


def test_single_particle_stay_probability(p_basic):
    # empirical frequency over 10^6 replicas vs (1 + q alpha)/(1 + alpha)
    R, W = 10**6, 24
    vals = np.zeros((R, W), dtype=np.int8)
    vals[:, 2] = 1
    env = RandomEnvironment(p_basic, 123)
    ensemble_step_unfused(vals, 0, env, 0)
    stay = float((vals[:, 2] == 1).mean())
    a = p_basic.alpha_t(0)
    want = (1 + p_basic.q * a) / (1 + a)
    sigma = np.sqrt(want * (1 - want) / R)
    assert abs(stay - want) < 4 * sigma
    # jump-length tail is geometric with ratio theta
    th = p_basic.theta(0)
    d1 = float((vals[:, 3] == 1).mean())
    want1 = a * (1 - p_basic.q) / (1 + a) * (1 - th)
    assert abs(d1 - want1) < 4 * np.sqrt(want1 / R)


def test_two_particle_law_chi2(p_basic):
    # exact one-step law vs 10^6 samples on a 4-site window
    init = (1, 0, 1, 0) + (0,) * 20
    law = enumerate_step(init, p_basic, p_basic.alpha_t(0), 1)
    R = 10**6
    vals = np.tile(np.array(init, dtype=np.int8), (R, 1))
    env = RandomEnvironment(p_basic, 77)
    ensemble_step_unfused(vals, 0, env, 0)
    keys, counts = np.unique(vals, axis=0, return_counts=True)
    observed = {tuple(int(v) for v in k): int(c) for k, c in zip(keys, counts)}
    cats = [k for k, p in law.probs.items() if p * R >= 10]
    exp = np.array([law.probs[k] * R for k in cats])
    obs = np.array([observed.get(k, 0) for k in cats])
    other_exp = R - exp.sum()
    other_obs = R - obs.sum()
    if other_exp > 5:
        exp = np.append(exp, other_exp)
        obs = np.append(obs, other_obs)
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    pval = stats.chi2.sf(chi2, len(exp) - 1)
    assert pval > 1e-3


def test_sequential_equals_recursion_pathwise(p_basic):
    env = RandomEnvironment(p_basic, 999)
    w1 = OccupancyWindow(0, np.array([2, 0, 1, 1, 0, 0] + [0] * 30))
    w2 = w1.copy()
    h = HeightField(t=0, x_left=0, base=0.0, eta=w2.values.copy())
    for t in range(10**4):
        w1 = step_unfused(w1, t, env, boundary="absorb")
        h, w2 = step_recursion(h, w2, t, env)
        assert np.array_equal(w1.values, w2.values), f"paths diverged at t={t}"


def test_particle_conservation_and_flux_bounds(p_j2):
    env = RandomEnvironment(p_j2, 5)
    w = OccupancyWindow(0, np.array([1, 2, 0, 1] + [0] * 46))
    h = HeightField(t=0, x_left=0, base=0.0, eta=w.values.copy())
    n0 = w.particle_count()
    Ns = [h.N_array().copy()]
    for t in range(400):
        w = step_unfused(w, t, env, heights=h, boundary="error")
        assert w.particle_count() == n0
        Ns.append(h.N_array().copy())
    Ns = np.array(Ns)
    drops = Ns[:-1] - Ns[1:]
    assert set(np.unique(drops)) <= {0, 1}  # one line per step at most


def test_single_site_window_matches_table_row(p_j2):
    # marginalizing the landing positions of emitted lines recovers the
    # weight-table row of the occupied site
    tbl = build_table(p_j2, p_j2.alpha, p_j2.J, validate=False)
    for m in range(p_j2.I + 1):
        law = enumerate_step((m,) + (0,) * 30, p_j2, p_j2.alpha, p_j2.J,
                             table=tbl)
        marg = {}
        for out, pr in law.probs.items():
            i2 = out[0]
            marg[i2] = marg.get(i2, 0.0) + pr
        for i2, got in marg.items():
            j2 = m - i2
            assert got == pytest.approx(tbl.weight(m, 0, i2, j2),
                                        abs=1e-12 + law.missing)


def test_fused_equals_unfused_small():
    p = ModelParams(q=1.5, I=3, J=2, alpha=-0.08)
    init = (2, 1) + (0,) * 35
    fused = enumerate_step(init, p, p.alpha, p.J, prune=1e-16)
    unf = enumerate_multistep_unfused(init, p, 0, p.J, prune=1e-16)
    keys = set(fused.probs) | set(unf.probs)
    tv = 0.5 * sum(abs(fused.probs.get(k, 0.0) - unf.probs.get(k, 0.0))
                   for k in keys)
    assert tv <= 1e-9 + fused.missing + unf.missing


def test_evolve_exact_matches_multistep(p_j2):
    init = (1, 0, 2) + (0,) * 30
    alphas = [p_j2.alpha_t(t) for t in range(2)]
    a = evolve_exact(init, p_j2, alphas, 1, prune=1e-16)
    b = enumerate_multistep_unfused(init, p_j2, 0, 2, prune=1e-16)
    keys = set(a.probs) | set(b.probs)
    tv = 0.5 * sum(abs(a.probs.get(k, 0.0) - b.probs.get(k, 0.0)) for k in keys)
    assert tv < 1e-12


def test_enumeration_missing_mass_recorded(p_basic):
    init = (2, 2) + (0,) * 4  # deliberately tight buffer
    law = enumerate_step(init, p_basic, p_basic.alpha_t(0), 1)
    assert law.missing > 0
    assert sum(law.probs.values()) + law.missing == pytest.approx(1.0, abs=1e-13)


def test_window_overflow_raises(p_basic):
    env = RandomEnvironment(p_basic, 2)
    w = OccupancyWindow(0, np.array([0, 0, 2]))
    with pytest.raises(WindowOverflow):
        for t in range(200):
            w = step_unfused(w, t, env, boundary="error")


def test_boundary_modes(p_basic):
    env = RandomEnvironment(p_basic, 3)
    w = OccupancyWindow(0, np.array([0, 1, 2]), TRUNCATED)
    n = w.particle_count()
    for t in range(100):
        w = step_unfused(w, t, env, boundary="absorb")
    assert w.particle_count() <= n
    w2 = OccupancyWindow(0, np.array([0, 1, 2]))
    for t in range(100):
        w2 = step_unfused(w2, t, env, boundary="ring")
        assert w2.particle_count() == 3  # ring preserves particles


def test_state_space_guard(p_basic):
    with pytest.raises(StateSpaceTooLarge):
        enumerate_step((2,) * 20, p_basic, p_basic.alpha, 1)


def test_make_initial_kinds(p_scaled):
    flat = make_initial("flat", 0, 8, p_scaled, density=0)
    assert np.all(flat.values == 0)
    with pytest.raises(ParameterError):
        make_initial("flat", 0, 8, p_scaled, density=9)
    cust = make_initial("custom", -2, 4, p_scaled, custom=[1, 0, 2, 0])
    assert cust.x_left == -2 and cust.values.tolist() == [1, 0, 2, 0]
    step = make_initial("step", -5, 12, p_scaled, seed=4)
    assert np.all(step.values[:5] == 0)  # sites -5..-1 empty
    with pytest.raises(ParameterError):
        make_initial("nope", 0, 4, p_scaled)


def test_product_initial_marginals_chi2(p_scaled):
    from shs6v.stationary import pi_rho, solve_chi

    chi = solve_chi(p_scaled, p_scaled.rho)
    pmf = pi_rho(p_scaled, chi).pmf
    vals = ensemble_initial("product_pi_rho", 0, 50, 20000, p_scaled,
                            pmf=pmf, seed=17)
    counts = np.bincount(vals.ravel(), minlength=p_scaled.I + 1)
    n = vals.size
    chi2 = float((((counts - n * pmf) ** 2) / (n * pmf)).sum())
    assert stats.chi2.sf(chi2, p_scaled.I) > 1e-3


def test_certified_margin(p_scaled):
    m = certified_margin(p_scaled, 1e-12)
    assert m >= 1
    r = p_scaled.influence_ratio()
    assert r**m <= 1e-12 < r ** (m - 2)


@pytest.mark.slow
def test_stationarity_chi2(p_scaled):
    """Product-measure marginals survive 1000 steps away from the edges."""
    from shs6v.stationary import pi_rho, solve_chi

    chi = solve_chi(p_scaled, p_scaled.rho)
    dist = pi_rho(p_scaled, chi)
    R, W, T = 256, 64, 1000
    vals = ensemble_initial("product_pi_rho", 0, W, R, p_scaled,
                            pmf=dist.pmf, seed=29)
    env = RandomEnvironment(p_scaled, 31)
    for t in range(T):
        ensemble_step_unfused(vals, t, env, 0, boundary="absorb")
    interior = vals[:, 10:W - 10]
    counts = np.bincount(interior.ravel(), minlength=p_scaled.I + 1)
    n = interior.size
    chi2 = float((((counts - n * dist.pmf) ** 2) / (n * dist.pmf)).sum())
    pval = stats.chi2.sf(chi2, p_scaled.I)
    assert pval > 0.01, f"chi2={chi2:.1f} p={pval:.4f}"


@pytest.mark.slow
def test_fused_matches_unfused_height_drop_mc():
    """Fused one-step mean height drop at a tagged site vs the unfused
    two-step mean, within 3 sigma at 10^6 replicas."""
    p = scaled_params(2, 2, 0.8, 1.0, 0.04)
    from shs6v.stationary import pi_rho, solve_chi

    pmf = pi_rho(p, solve_chi(p, 1.0)).pmf
    R, W, tag = 10**6, 5 + 14, 4
    tbl = build_table(p, p.alpha, p.J, validate=False)
    base = ensemble_initial("product_pi_rho", 0, W, R, p, pmf=pmf, seed=57)
    base[:, 5:] = 0  # five product sites plus empty buffer

    vals_f = base.astype(np.int8).copy()
    env_f = RandomEnvironment(p, 61)
    ensemble_step_fused(vals_f, 0, env_f, 0, tbl)
    drop_f = base[:, :tag + 1].sum(axis=1) - vals_f[:, :tag + 1].sum(axis=1)

    vals_u = base.astype(np.int8).copy()
    env_u = RandomEnvironment(p, 62)
    for t in range(p.J):
        ensemble_step_unfused(vals_u, t, env_u, 0, boundary="absorb")
    drop_u = base[:, :tag + 1].sum(axis=1) - vals_u[:, :tag + 1].sum(axis=1)

    se = np.sqrt(drop_f.var() / R + drop_u.var() / R)
    assert abs(drop_f.mean() - drop_u.mean()) < 3 * se
