import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from balance_qubo import DataBudget, PenaltyConfig, synth_instance
from balance_qubo.experiments import (
    TuningRow,
    default_caps,
    default_tuning_grid,
    energy_landscape,
    ladder_compare,
    probability_sweep,
    select_best,
    to_csv,
    to_json,
    tune_dpa,
)
from balance_qubo.formulation import dominance_lambda0, dpa_term
from balance_qubo.segments import QualityVariant, SegmentTable

from conftest import TABLE1, brute_force_mckp

# -- probability sweep -----------------------------------------------------------


def test_sweep_ample_cap_valid_equals_onehot_rate(ref_table):
    rep = probability_sweep(ref_table, [25.0], shots=200, trials=2, seed=1, sweeps=200)
    e = rep.entry(25.0, "dpa")
    assert e.feasible and e.oracle_vmaf == pytest.approx(188.59)
    # every one-hot assignment fits, so validity is decided by the one-hot rows alone
    assert 0.9 <= e.p_valid <= 1.0
    assert e.p_optimal <= e.p_valid


def test_sweep_flags_infeasible_cap(ref_table):
    rep = probability_sweep(ref_table, [2.0, 10.0], methods=["dpa", "slack"], shots=10, trials=1, sweeps=10)
    for m in ("dpa", "slack"):
        e = rep.entry(2.0, m)
        assert not e.feasible and e.p_valid is None and e.oracle_vmaf is None
        assert rep.entry(10.0, m).feasible


@pytest.mark.parametrize("seed", range(5))
def test_sweep_single_shot_is_binary(ref_table, seed):
    rep = probability_sweep(ref_table, [10.0], methods=["dpa", "slack"], shots=1, trials=1, seed=seed, sweeps=20)
    for e in rep.entries:
        assert e.p_valid in (0.0, 1.0) and e.p_optimal in (0.0, 1.0)
        assert e.p_optimal <= e.p_valid


def test_sweep_report_consistency_and_determinism(ref_table):
    caps = default_caps(ref_table, 4)
    kw = dict(methods=["dpa", "slack"], shots=50, trials=3, seed=9, sweeps=50)
    a = probability_sweep(ref_table, caps, **kw)
    b = probability_sweep(ref_table, caps, jobs=3, **kw)
    assert to_json(a) == to_json(b)
    assert to_csv(a.csv_rows()) == to_csv(b.csv_rows())
    for e in a.entries:
        assert e.trials == 3 and len(e.valid_per_trial) == 3
        assert 0 <= e.p_optimal <= e.p_valid <= 1
        assert all(o <= v for o, v in zip(e.optimal_per_trial, e.valid_per_trial))
        assert e.p_valid == pytest.approx(np.mean(e.valid_per_trial))


def test_sweep_validation(ref_table):
    with pytest.raises(ValueError):
        probability_sweep(ref_table, [])
    with pytest.raises(ValueError):
        probability_sweep(ref_table, [10.0], trials=0)


def test_default_caps(ref_table):
    caps = default_caps(ref_table)
    assert len(caps) == 8
    assert caps[0] == pytest.approx(2.59) and caps[-1] == pytest.approx(20.26)


# -- energy landscape ------------------------------------------------------------


def test_landscape_argmin_reference(ref_table, budget10):
    grid = energy_landscape(ref_table, budget10, PenaltyConfig())
    assert np.array(grid.energies).shape == (4, 4)
    assert grid.argmin_labels() == ("720p", "480p")


def test_landscape_corner_cell(ref_table, budget10):
    grid = energy_landscape(ref_table, budget10, PenaltyConfig())
    expected = -(84.65 + 89.03) - dpa_term(0.96 + 1.63, 10.0, 5.6, 8.9, 1.69)
    assert grid.energies[3][3] == pytest.approx(expected, rel=1e-12)
    assert -173.68 - dpa_term(2.59, 10.0, 5.6, 8.9, 1.69) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("method", ["dpa", "slack"])
def test_landscape_uniform_table(method):
    seg = tuple(QualityVariant(l, 70.0, 1.5) for l in ("a", "b", "c"))
    grid = energy_landscape(SegmentTable((seg, seg)), DataBudget(10.0), PenaltyConfig(method=method))
    flat = np.array(grid.energies).ravel()
    assert np.allclose(flat, flat[0], rtol=0, atol=1e-9)


def test_landscape_requires_two_segments():
    with pytest.raises(ValueError):
        energy_landscape(synth_instance(3, 3, 0), DataBudget(50.0))


def test_landscape_slack_feasible_cells_have_zero_penalty(ref_table, budget10):
    grid = energy_landscape(ref_table, budget10, PenaltyConfig(method="slack"))
    for a in range(4):
        for b in range(4):
            v = TABLE1[0][a][1] + TABLE1[1][b][1]
            d = TABLE1[0][a][2] + TABLE1[1][b][2]
            if d <= 10.0:
                assert grid.energies[a][b] == pytest.approx(-v, abs=1e-6)
            else:
                assert grid.energies[a][b] > -v
    assert grid.argmin_labels() == ("720p", "480p")


@pytest.mark.parametrize("cap", [5.0, 10.0, 15.0, 25.0])
def test_landscape_argmin_matches_oracle(ref_table, cap):
    cfg = PenaltyConfig(lambda0=dominance_lambda0(ref_table))
    grid = energy_landscape(ref_table, DataBudget(cap), cfg)
    ref = brute_force_mckp(TABLE1, cap)
    assert grid.argmin() == ref[0]


def test_landscape_csv_layout(ref_table, budget10):
    rows = list(energy_landscape(ref_table, budget10).csv_rows())
    assert rows[0] == ("segment1\\segment2", "1080p", "720p", "480p", "360p")
    assert [r[0] for r in rows[1:]] == ["1080p", "720p", "480p", "360p"]
    assert json.loads(to_json(energy_landscape(ref_table, budget10)))["argmin"] == ["720p", "480p"]


# -- ladder comparison -----------------------------------------------------------


def test_ladder_reference_cap10(ref_table):
    e = ladder_compare(ref_table, [10.0]).entries[0]
    assert e.ladder_level == "480p"
    assert e.ladder_vmaf == pytest.approx(180.27) and e.ladder_data_mb == pytest.approx(6.74)
    assert e.balance_choices == ("720p", "480p") and e.balance_vmaf == pytest.approx(183.72)


def test_ladder_both_infeasible(ref_table):
    e = ladder_compare(ref_table, [2.0]).entries[0]
    assert e.ladder_level is None and e.ladder_vmaf is None
    assert e.balance_choices is None and e.balance_vmaf is None


def test_ladder_unconstrained(ref_table):
    e = ladder_compare(ref_table, [30.0]).entries[0]
    assert e.ladder_level == "1080p"
    assert e.balance_choices == ("1080p", "1080p")
    assert e.balance_vmaf == pytest.approx(e.ladder_vmaf)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(2, 4), st.integers(0, 10_000))
def test_ladder_dominance_and_monotone_optimum(n, m, seed):
    table = synth_instance(n, m, seed)
    caps = np.linspace(table.min_usage() * 0.9, table.max_usage() * 1.05, 12)
    entries = ladder_compare(table, caps).entries
    prev = -np.inf
    for e in entries:
        if e.ladder_vmaf is not None:
            assert e.balance_vmaf >= e.ladder_vmaf - 1e-9
        if e.balance_vmaf is not None:
            assert e.balance_vmaf >= prev - 1e-9
            prev = e.balance_vmaf


# -- tuning ------------------------------------------------------------------------


def test_tune_singleton_grid(ref_table, budget10):
    rep = tune_dpa(ref_table, budget10, {"mu1": [5.6], "mu2": [8.9], "mu3": [1.69]}, shots=50, trials=2, sweeps=50)
    assert len(rep.rows) == 1
    assert rep.best.triple == (5.6, 8.9, 1.69)


def test_select_best_tiebreak():
    a = TuningRow(5.6, 8.9, 1.69, 0.5, 0.3)
    b = TuningRow(2.8, 8.9, 1.69, 0.5, 0.3)
    c = TuningRow(8.4, 8.9, 1.69, 0.9, 0.1)
    assert select_best([a, b, c]) is b
    assert select_best([TuningRow(1, 1, 2, 0.4, 0.3), TuningRow(1, 1, 3, 0.6, 0.3)]).mu3 == 3
    with pytest.raises(ValueError):
        select_best([])


def test_tune_mu2_span(ref_table, budget10):
    grid = {"mu1": [5.6], "mu2": [0.1, 8.9], "mu3": [1.69]}
    rep = tune_dpa(ref_table, budget10, grid, shots=50, trials=2, sweeps=50)
    assert [r.mu2 for r in rep.rows] == [0.1, 8.9]
    for r in rep.rows:
        assert 0 <= r.p_optimal <= r.p_valid <= 1
    assert rep.best is select_best(rep.rows)


def test_tune_validation(ref_table, budget10):
    with pytest.raises(ValueError):
        tune_dpa(ref_table, budget10, {"mu1": [], "mu2": [1], "mu3": [2]})
    with pytest.raises(ValueError):
        tune_dpa(ref_table, budget10, {"mu1": [1], "mu2": [1], "mu3": [1.0]})
    with pytest.raises(ValueError):
        tune_dpa(ref_table, DataBudget(2.0), {"mu1": [1], "mu2": [1], "mu3": [2]}, shots=5, trials=1, sweeps=5)


def test_default_grid_is_centred():
    g = default_tuning_grid()
    assert [len(g[k]) for k in ("mu1", "mu2", "mu3")] == [3, 3, 3]
    assert g["mu1"][1] == 5.6 and g["mu2"][1] == 8.9 and g["mu3"][1] == 1.69
