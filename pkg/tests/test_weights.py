import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_admissible
from shs6v.errors import ParameterError
from shs6v.params import ModelParams, scaled_params
from shs6v.weights import build_table, build_j1_table, l_general, l_j1


def test_empty_vertex_is_identity(p_basic):
    assert l_general(p_basic, p_basic.alpha, 1, 0, 0, 0, 0) == pytest.approx(1.0)


def test_line_conservation_zero(p_basic):
    assert l_general(p_basic, p_basic.alpha, 1, 1, 0, 0, 0) == 0.0


def test_degenerate_rapidity_closed_forms():
    # alpha = -1/q makes the raw formula 0/0; the values must still come out
    p = ModelParams(q=2.0, I=2, J=1, alpha=-0.5)
    assert l_general(p, -0.5, 1, 1, 0, 1, 0) == pytest.approx(0.0, abs=1e-12)
    assert l_general(p, -0.5, 1, 1, 0, 0, 1) == pytest.approx(1.0, rel=1e-12)
    assert l_general(p, -0.5, 1, 1, 1, 2, 0) == pytest.approx(1.0, rel=1e-12)
    assert l_general(p, -0.5, 1, 1, 1, 1, 1) == pytest.approx(0.0, abs=1e-12)


def test_j1_closed_form_values():
    p = ModelParams(q=2.0, I=2, J=1, alpha=-0.5)
    # (m=0, j1=0) keeps weight 1 on (0,0)
    assert l_j1(p, -0.5, 0, 0, 0, 0) == 1.0
    assert l_j1(p, -0.5, 1, 1, 2, 0) == pytest.approx(1.0)
    assert l_j1(p, -0.5, 1, 1, 1, 1) == pytest.approx(0.0)


def test_j1_matches_general_random():
    rng = np.random.default_rng(7)
    for _ in range(40):
        p = random_admissible(rng, I_max=4, J_max=1)
        a = p.alpha
        for m in range(p.I + 1):
            for j1 in (0, 1):
                for i2 in range(p.I + 1):
                    j2 = m + j1 - i2
                    if j2 in (0, 1):
                        g = l_general(p, a, 1, m, j1, i2, j2)
                        c = l_j1(p, a, m, j1, i2, j2)
                        assert g == pytest.approx(c, rel=1e-12, abs=1e-12)


def test_j1_rows_sum_to_one(p_basic):
    for m in range(p_basic.I + 1):
        for j1 in (0, 1):
            tot = sum(l_j1(p_basic, p_basic.alpha, m, j1, i2, m + j1 - i2)
                      for i2 in range(p_basic.I + 1)
                      if m + j1 - i2 in (0, 1))
            assert tot == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_row_stochasticity_property(seed):
    rng = np.random.default_rng(seed)
    p = random_admissible(rng, I_max=4, J_max=4)
    tbl = build_table(p, p.alpha, p.J)
    sums = tbl.entries.sum(axis=(2, 3))
    assert np.max(np.abs(sums - 1.0)) < 1e-10
    assert np.min(tbl.entries) >= 0.0


def test_table_matches_j1_formula(p_basic):
    t_gen = build_table(p_basic, p_basic.alpha, 1)
    t_cf = build_j1_table(p_basic, p_basic.alpha)
    assert np.max(np.abs(t_gen.entries - t_cf.entries)) < 1e-12


def test_scaled_mode_table():
    p = scaled_params(2, 2, 0.8, 1.0, 0.01)
    tbl = build_table(p, p.alpha, 2)
    sums = tbl.entries.sum(axis=(2, 3))
    assert np.max(np.abs(sums - 1.0)) < 1e-10


def test_rotated_rapidity_tables(p_j2):
    # every alpha(t) in the fused family gives a stochastic table
    for t in range(p_j2.J):
        tbl = build_j1_table(p_j2, p_j2.alpha_t(t))
        sums = tbl.entries.sum(axis=(2, 3))
        mask = np.ones_like(sums, dtype=bool)
        assert np.max(np.abs(sums[mask] - 1.0)) < 1e-12


def test_out_of_range_indices_raise(p_basic):
    with pytest.raises(ParameterError):
        l_general(p_basic, p_basic.alpha, 1, 5, 0, 5, 0)
    with pytest.raises(ParameterError):
        l_j1(p_basic, p_basic.alpha, 1, 2, 1, 0)


def test_condition1_region():
    assert ModelParams(q=2.0, I=2, J=1, alpha=-0.1).condition1_holds()
    assert not ModelParams(q=2.0, I=2, J=1, alpha=-0.5).condition1_holds()
    assert not ModelParams(q=2.0, I=2, J=1, alpha=0.1).condition1_holds()
    assert not ModelParams(q=0.9, I=2, J=1, alpha=-0.1).condition1_holds()
    with pytest.raises(ParameterError):
        ModelParams(q=2.0, I=2, J=1, alpha=-0.5).require_condition1()
