import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balance_qubo.formulation import (
    PenaltyConfig,
    FormulationError,
    SolutionClass,
    add_dpa_penalty,
    add_onehot_penalty,
    add_slack_penalty,
    build,
    build_objective,
    classify,
    decode,
    default_lambda,
    dominance_lambda0,
    dpa_term,
    encode,
    slack_bit_count,
)
from balance_qubo.qubo import MAXIMIZE, MINIMIZE, QuboModel, SlackVar, energy
from balance_qubo.segments import DataBudget, QualityVariant, SegmentTable, synth_instance
from balance_qubo.solvers import enumerate_exact

# Levels ordered 1080p, 720p, 480p, 360p.
X_720_480 = [0, 1, 0, 0, 0, 0, 1, 0]
X_1080_1080 = [1, 0, 0, 0, 1, 0, 0, 0]


def one_table(*pairs):
    return SegmentTable(((tuple(QualityVariant(f"q{j}", v, d) for j, (v, d) in enumerate(pairs))),))


# -- independent scalar reference (no QUBO expansion) --------------------------


def scalar_parts(table, budget, cfg, x):
    """(objective, onehot_residual_sq, inequality_penalty) computed directly from bits."""
    m = table.n_levels
    obj = 0.0
    resid_sq = 0.0
    usage_mb = 0.0
    usage_units = 0
    for i, seg in enumerate(table.segments):
        bits = x[i * m : (i + 1) * m]
        resid_sq += (sum(bits) - 1) ** 2
        for j, var in enumerate(seg):
            if bits[j]:
                obj += var.vmaf
                usage_mb += var.data_mb
                usage_units += round(var.data_mb / budget.unit_mb)
    if cfg.method == "slack":
        slack = sum(b << k for k, b in enumerate(x[table.n_segments * m :]))
        u_max = round(budget.d_max_mb / budget.unit_mb)
        pen = -cfg.lambda1 * (u_max - usage_units - slack) ** 2
    else:
        thr = budget.d_max_mb / cfg.mu3
        r = (usage_mb - thr) / (budget.d_max_mb - thr)
        pen = cfg.mu1 * r - cfg.mu2 * r * r
    return obj, resid_sq, pen


def scalar_energy(table, budget, cfg, x):
    obj, resid_sq, pen = scalar_parts(table, budget, cfg, x)
    return -(obj - cfg.lambda0 * resid_sq + pen)


# -- objective -----------------------------------------------------------------


def test_build_objective_reference(ref_table):
    m = build_objective(ref_table)
    assert m.num_vars == 8 and m.sense == MAXIMIZE
    assert m.linear[0] == 92.90
    assert not m.quadratic


def test_build_objective_small():
    m = build_objective(one_table((10, 1), (20, 2)))
    assert m.linear == {0: 10, 1: 20}


# -- one-hot penalty -----------------------------------------------------------


def _onehot_only(table, lam):
    m = QuboModel(0, MAXIMIZE)
    for role in build_objective(table).registry:
        m.add_variable(role)
    return add_onehot_penalty(m, table, lam)


@pytest.mark.parametrize(
    "x, expected",
    [
        ([0] * 8, -2 * 3.0),
        (X_720_480, 0.0),
        ([1, 1, 0, 0, 0, 0, 1, 0], -3.0),
    ],
)
def test_onehot_contributions(ref_table, x, expected):
    assert energy(_onehot_only(ref_table, 3.0), x) == pytest.approx(expected, abs=1e-12)


def test_onehot_exhaustive(ref_table):
    table = SegmentTable(ref_table.segments[:1] + (ref_table.segments[1][:3] + ref_table.segments[1][3:],))
    m = _onehot_only(table, 7.5)
    for x in itertools.product((0, 1), repeat=m.num_vars):
        counts = [sum(x[0:4]), sum(x[4:8])]
        e = energy(m, x)
        if counts == [1, 1]:
            assert e == 0.0
        else:
            assert e <= -7.5 + 1e-12


# -- slack penalty -------------------------------------------------------------


def test_slack_bit_count_paper_vs_full():
    assert slack_bit_count(1000, "paper") == 10
    assert slack_bit_count(1000, "full_range") == 10
    assert slack_bit_count(1024, "paper") == 10
    assert slack_bit_count(1024, "full_range") == 11
    with pytest.raises(FormulationError):
        slack_bit_count(0)


def _slack_only(table, budget, lam, mode="paper"):
    m = QuboModel(0, MAXIMIZE)
    for role in build_objective(table).registry:
        m.add_variable(role)
    return add_slack_penalty(m, table, budget, lam, mode)


def test_slack_registers_k_bits(ref_table, budget10):
    m = _slack_only(ref_table, budget10, 1.0)
    assert m.num_vars == 18
    assert [r.bit for r in m.registry[8:]] == list(range(1, 11))
    assert all(isinstance(r, SlackVar) for r in m.registry[8:])


def test_slack_zero_penalty_for_exact_fill(ref_table, budget10):
    m = _slack_only(ref_table, budget10, 2.0)
    # usage 546 + 406 = 952 units; slack 48 = 16 + 32 -> bits k=5, k=6
    x = encode(m, (1, 2), 48)
    assert x[8:] == [0, 0, 0, 0, 1, 1, 0, 0, 0, 0]
    assert energy(m, x) == 0.0


def test_slack_over_cap_penalty_bound(ref_table, budget10):
    lam = 2.0
    m = _slack_only(ref_table, budget10, lam)
    worst = None
    for s in range(1 << 10):
        e = energy(m, encode(m, (0, 0), s))
        assert e <= -lam * 1026**2
        worst = e if worst is None else max(worst, e)
    assert worst == pytest.approx(-lam * 1026**2)


def test_slack_completeness_full_range_small():
    table = SegmentTable(
        (
            tuple(QualityVariant(f"q{j}", 50 + j, d) for j, d in enumerate((0.03, 0.05, 0.02))),
            tuple(QualityVariant(f"q{j}", 60 + j, d) for j, d in enumerate((0.04, 0.01, 0.06))),
        )
    )
    budget = DataBudget(0.08)
    m = _slack_only(table, budget, 1.0, "full_range")
    k = m.num_vars - 6
    for a, b in itertools.product(range(3), repeat=2):
        used = round(table.segments[0][a].data_mb * 100) + round(table.segments[1][b].data_mb * 100)
        pens = [energy(m, encode(m, (a, b), s)) for s in range(1 << k)]
        if used <= 8:
            assert max(pens) == 0.0
        else:
            assert max(pens) <= -1.0


# -- DPA -----------------------------------------------------------------------


def test_dpa_scalar_reference_values():
    assert dpa_term(10 / 1.69, 10, 5.6, 8.9, 1.69) == pytest.approx(0.0, abs=1e-12)
    assert dpa_term(10.0, 10, 5.6, 8.9, 1.69) == pytest.approx(-3.3, abs=1e-12)
    thr = 10 / 1.69
    assert dpa_term(thr + 2 * (10 - thr), 10, 5.6, 8.9, 1.69) == pytest.approx(-24.4, abs=1e-12)


def _dpa_only(table, budget, *mus):
    m = QuboModel(0, MAXIMIZE)
    for role in build_objective(table).registry:
        m.add_variable(role)
    return add_dpa_penalty(m, table, budget, *mus)


@pytest.mark.parametrize("usage, expected", [(10 / 1.69, 0.0), (10.0, -3.3)])
def test_dpa_expansion_hits_reference_points(usage, expected):
    # one segment, choose the level whose data equals `usage`
    table = one_table((50.0, usage), (40.0, 1.0))
    m = _dpa_only(table, DataBudget(10.0), 5.6, 8.9, 1.69)
    assert energy(m, [1, 0]) == pytest.approx(expected, abs=1e-9)


def test_dpa_r_equals_two_via_energy():
    thr = 10 / 1.69
    table = one_table((50.0, thr + 2 * (10 - thr)), (40.0, 1.0))
    m = _dpa_only(table, DataBudget(10.0), 5.6, 8.9, 1.69)
    assert energy(m, [1, 0]) == pytest.approx(-24.4, abs=1e-9)


def test_dpa_adds_no_variables(ref_table, budget10):
    assert _dpa_only(ref_table, budget10, 5.6, 8.9, 1.69).num_vars == 8


def test_dpa_shape_random_bitstrings(ref_table, budget10):
    m = _dpa_only(ref_table, budget10, 5.6, 8.9, 1.69)
    rng = random.Random(3)
    d = [v.data_mb for seg in ref_table.segments for v in seg]
    for _ in range(1000):
        x = [rng.randint(0, 1) for _ in range(8)]
        usage = sum(di for di, xi in zip(d, x) if xi)
        assert energy(m, x) == pytest.approx(dpa_term(usage, 10.0, 5.6, 8.9, 1.69), rel=1e-9, abs=1e-9)


def test_dpa_rejects_mu3():
    with pytest.raises(FormulationError):
        PenaltyConfig(method="dpa", mu3=1.0)


# -- assembly ------------------------------------------------------------------


def test_build_variable_counts(ref_table, budget10):
    assert build(ref_table, budget10, PenaltyConfig()).num_vars == 8
    assert build(ref_table, budget10, PenaltyConfig(method="slack")).num_vars == 18


def test_build_is_minimization_and_frozen(ref_table, budget10):
    m = build(ref_table, budget10, PenaltyConfig())
    assert m.sense == MINIMIZE and m.frozen


def test_build_energy_720_480_dpa(ref_table, budget10):
    m = build(ref_table, budget10, PenaltyConfig())
    expected = -(90.58 + 93.14) - dpa_term(5.46 + 4.06, 10.0, 5.6, 8.9, 1.69)
    assert energy(m, X_720_480) == pytest.approx(expected, rel=1e-12)
    assert energy(m, X_720_480) == pytest.approx(-183.72 - dpa_term(9.52, 10.0, 5.6, 8.9, 1.69), rel=1e-12)


def test_default_lambdas(ref_table):
    cfg = PenaltyConfig().resolved(ref_table)
    assert cfg.lambda0 == cfg.lambda1 == 2 * 95.69 == default_lambda(ref_table)
    assert dominance_lambda0(ref_table) > 2 * (92.90 + 95.69)


@pytest.mark.parametrize("method", ["slack", "dpa"])
def test_expansion_matches_scalar_reference_table(ref_table, budget10, method):
    cfg = PenaltyConfig(method=method).resolved(ref_table)
    m = build(ref_table, budget10, cfg)
    rng = random.Random(4)
    for _ in range(300):
        x = [rng.randint(0, 1) for _ in range(m.num_vars)]
        assert energy(m, x) == pytest.approx(scalar_energy(ref_table, budget10, cfg, x), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 3), st.integers(2, 4), st.integers(0, 10**6), st.sampled_from(["slack", "dpa"]),
    st.floats(0.3, 1.2), st.sampled_from(["paper", "full_range"]),
)
def test_expansion_matches_scalar_reference_random(n, m, seed, method, frac, mode):
    table = synth_instance(n, m, seed)
    budget = DataBudget(round(max(table.max_usage() * frac, 0.05), 2))
    cfg = PenaltyConfig(method=method, slack_bits_mode=mode).resolved(table)
    model = build(table, budget, cfg)
    rng = random.Random(seed)
    for _ in range(50):
        x = [rng.randint(0, 1) for _ in range(model.num_vars)]
        ref = scalar_energy(table, budget, cfg, x)
        assert energy(model, x) == pytest.approx(ref, rel=1e-9, abs=1e-7)


def test_argmax_dominance_slack_small_instances():
    """Exact minimizers of the slack QUBO are one-hot feasible (feasible caps, <= 18 vars)."""
    for seed in range(6):
        table = synth_instance(2, 3, seed)
        for frac in (0.5, 0.8, 1.0):
            cap = round(max(table.min_usage(), table.max_usage() * frac), 2)
            budget = DataBudget(cap, 0.05)
            cfg = PenaltyConfig(method="slack", lambda0=2 * sum(max(v.vmaf for v in s) for s in table.segments) + 1)
            model = build(table, budget, cfg)
            assert model.num_vars <= 18
            best = enumerate_exact(model)
            a = decode(model, best.bitstring, table, budget)
            assert all(c is not None for c in a.choices), (seed, frac, a)


# -- decode / classify ---------------------------------------------------------


def test_decode_720_480(ref_table, budget10):
    m = build(ref_table, budget10, PenaltyConfig())
    a = decode(m, X_720_480, ref_table, budget10)
    assert a.labels == ("720p", "480p") and a.choices == (1, 2)
    assert a.total_vmaf == pytest.approx(183.72, abs=1e-12)
    assert a.total_data_mb == pytest.approx(9.52, abs=1e-12)
    assert a.valid


def test_decode_all_zero(ref_table, budget10):
    a = decode(build(ref_table, budget10, PenaltyConfig()), [0] * 8, ref_table, budget10)
    assert not a.valid
    assert "segment 1: 0 levels selected" in a.violations


def test_decode_over_cap(ref_table, budget10):
    a = decode(build(ref_table, budget10, PenaltyConfig()), X_1080_1080, ref_table, budget10)
    assert a.labels == ("1080p", "1080p")
    assert a.total_data_mb == pytest.approx(20.26, abs=1e-12)
    assert not a.valid


def test_decode_slack_bits_reported(ref_table, budget10):
    m = build(ref_table, budget10, PenaltyConfig(method="slack"))
    a = decode(m, encode(m, (1, 2), 48), ref_table, budget10)
    assert a.valid and a.slack_bits == (0, 0, 0, 0, 1, 1, 0, 0, 0, 0)


def test_decode_length_mismatch(ref_table, budget10):
    with pytest.raises(ValueError):
        decode(build(ref_table, budget10, PenaltyConfig()), [0] * 7, ref_table, budget10)


def test_validity_uses_exact_mb_not_units():
    # 0.004 MB rounds to 0 units but the exact sum 10.004 still exceeds a 10 MB cap
    table = one_table((90, 10.004), (80, 1.0))
    a = decode(build(table, DataBudget(10.0), PenaltyConfig(method="slack")), [1, 0] + [0] * 10, table, DataBudget(10.0))
    assert not a.valid


def test_classify(ref_table, budget10):
    m = build(ref_table, budget10, PenaltyConfig())
    opt = 183.72
    assert classify(decode(m, X_720_480, ref_table, budget10), opt) is SolutionClass.OPTIMAL
    assert classify(decode(m, encode(m, (2, 2)), ref_table, budget10), opt) is SolutionClass.VALID
    assert classify(decode(m, [1, 1, 0, 0, 0, 0, 1, 0], ref_table, budget10), opt) is SolutionClass.INVALID


def test_assignment_json_shape(ref_table, budget10):
    m = build(ref_table, budget10, PenaltyConfig())
    d = decode(m, X_720_480, ref_table, budget10).to_dict(SolutionClass.OPTIMAL)
    assert {"choices", "total_vmaf", "total_data_mb", "valid", "class"} <= d.keys()
    assert d["class"] == "optimal" and d["choices"] == ["720p", "480p"]
