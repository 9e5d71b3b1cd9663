import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvfoul.agreement import (
    RaterFileError,
    RaterTable,
    agreement_report,
    average_kappa,
    cohen_kappa,
    consensus_histogram,
    load_rater_table,
    pairwise_kappas,
    rater_accuracy,
    save_rater_table,
    simulate_chance_table,
)
from mvfoul.data import SEVERITIES
from mvfoul.numcore import ContractError


def brute_kappa(a, b):
    # exact rational arithmetic straight from the definition
    n = len(a)
    labels = set(a) | set(b)
    p_o = Fraction(sum(x == y for x, y in zip(a, b)), n)
    p_e = sum(Fraction(a.count(c), n) * Fraction(b.count(c), n) for c in labels)
    if p_e == 1:
        return 1.0
    return float((p_o - p_e) / (1 - p_e))


def table(decisions, truth=None, groups=None, labels=SEVERITIES):
    d = np.asarray(decisions)
    return RaterTable([f"a{i}" for i in range(d.shape[0])], d, np.zeros(d.shape[0]) if truth is None else truth,
                      [f"r{j}" for j in range(d.shape[1])], labels, groups)


def test_kappa_worked_examples():
    assert cohen_kappa([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 1.0
    assert cohen_kappa([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0
    assert cohen_kappa([0, 0, 1, 1], [1, 1, 0, 0]) == -1.0
    assert cohen_kappa([2, 2, 2], [2, 2, 2]) == 1.0  # both constant and equal


def test_kappa_errors():
    with pytest.raises(ContractError):
        cohen_kappa([0, 1], [0])
    with pytest.raises(ContractError):
        cohen_kappa([], [])
    with pytest.raises(ContractError):
        cohen_kappa([0, 5], [0, 1], labels=range(4))


def test_kappa_matches_brute_force():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        k, n = int(rng.integers(2, 6)), int(rng.integers(1, 40))
        a = rng.integers(0, k, size=n).tolist()
        b = [x if rng.random() < rng.random() else int(rng.integers(k)) for x in a]
        assert abs(cohen_kappa(a, b) - brute_kappa(a, b)) <= 1e-12


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50))
@settings(max_examples=300, deadline=None)
def test_kappa_symmetry_and_bound(pairs):
    a, b = [p[0] for p in pairs], [p[1] for p in pairs]
    k = cohen_kappa(a, b)
    assert k == cohen_kappa(b, a)
    assert k <= 1.0
    if a != b:
        # p_e < 1 whenever the vectors differ, so kappa is strictly below 1
        assert k < 1.0


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50), st.permutations(range(4)))
@settings(max_examples=200, deadline=None)
def test_kappa_relabeling_invariance(pairs, perm):
    a, b = [p[0] for p in pairs], [p[1] for p in pairs]
    relabel = lambda v: [perm[x] for x in v]  # noqa: E731
    assert abs(cohen_kappa(a, b) - cohen_kappa(relabel(a), relabel(b))) <= 1e-12


def test_average_kappa_is_mean_over_pairs():
    rng = np.random.default_rng(3)
    t = table(rng.integers(0, 4, size=(30, 3)))
    d = t.decisions
    pairs = [cohen_kappa(d[:, i], d[:, j]) for i, j in itertools.combinations(range(3), 2)]
    assert abs(average_kappa(t) - sum(pairs) / 3) <= 1e-15
    assert len(pairwise_kappas(t)) == 3


def test_average_kappa_identical_raters():
    col = np.array([0, 1, 2, 3, 1, 1])
    assert average_kappa(table(np.stack([col] * 4, axis=1))) == 1.0


def test_average_kappa_needs_two_raters():
    with pytest.raises(ContractError):
        average_kappa(table([[0], [1]]))


def test_chance_raters_have_kappa_near_zero():
    t = simulate_chance_table(1000, {"all": 5}, k=4, seed=11)
    assert abs(average_kappa(t)) <= 0.05


def test_consensus_histogram_examples():
    # distinct decisions per action: 1, 2, 2, 3, 4
    t = table([[0, 0, 0, 0], [0, 1, 1, 0], [2, 2, 3, 3], [0, 1, 2, 2], [0, 1, 2, 3]])
    assert consensus_histogram(t) == [20.0, 40.0, 20.0, 20.0]
    assert consensus_histogram(table([[1, 1], [2, 2]])) == [100.0, 0, 0, 0]
    assert consensus_histogram(table([[1, 0], [2, 3]])) == [0, 100.0, 0, 0]


def test_consensus_sums_to_100():
    t = simulate_chance_table(37, {"a": 3, "b": 6}, seed=1)
    for g in ("a", "b", None):
        assert abs(sum(consensus_histogram(t, g)) - 100.0) <= 1e-9


def test_rater_accuracy():
    truth = np.array([0, 1, 2, 3, 0, 1, 2, 3, 0, 1])
    seven = truth.copy()
    seven[:3] = (seven[:3] + 1) % 4
    t = table(np.stack([truth, (truth + 1) % 4, seven], axis=1), truth)
    assert rater_accuracy(t) == {"r0": 1.0, "r1": 0.0, "r2": 0.7}


def test_groups_select_columns():
    t = table(np.zeros((3, 4), dtype=int), groups=["x", "y", "x", "y"])
    assert t.group_names() == ["x", "y"] and t.columns("y") == [1, 3]
    with pytest.raises(ContractError):
        t.columns("z")


def test_table_validation():
    with pytest.raises(ContractError):
        table([[0, 4]])
    with pytest.raises(ContractError):
        table([[0, 1]], groups=["x"])


# ---------------------------------------------------------------------- I/O


def test_load_with_group_row_and_names(tmp_path):
    p = tmp_path / "raters.csv"
    p.write_text(
        "action_id,ground_truth,ref_1,ref_2,talent_1\n"
        "group,,high,high,talent\n"
        "a1,No offence,no offence,1,0\n"
        "a2,2,2,Offence + Yellow card,3\n"
    )
    t = load_rater_table(p)
    assert t.raters == ["ref_1", "ref_2", "talent_1"] and t.groups == ["high", "high", "talent"]
    assert t.decisions.tolist() == [[0, 1, 0], [2, 2, 3]] and t.ground_truth.tolist() == [0, 2]


def test_load_without_group_row_and_custom_labels(tmp_path):
    p = tmp_path / "raters.csv"
    p.write_text("action_id,ground_truth,r1,r2\nx,yes,yes,no\ny,no,no,no\n")
    t = load_rater_table(p, labels=("no", "yes"))
    assert t.groups is None and t.decisions.tolist() == [[1, 0], [0, 0]]


def test_foul_task_has_eight_codes(tmp_path):
    p = tmp_path / "raters.csv"
    p.write_text("action_id,ground_truth,r1,r2\nx,7,Dive/Simulation,6\n")
    assert load_rater_table(p, task="foul_type").decisions.tolist() == [[7, 6]]
    with pytest.raises(RaterFileError, match=":2:"):
        load_rater_table(p)  # 7 is outside the 4 severity codes


@pytest.mark.parametrize(
    "text, where",
    [
        ("", "empty"),
        ("id,truth,r1\n", "header"),
        ("action_id,ground_truth,r1\na,0,0,1\n", ":2:"),
        ("action_id,ground_truth,r1\na,0,red\n", "unknown label"),
        ("action_id,ground_truth,r1,r2\ngroup,,x\n", ":2:"),
    ],
)
def test_load_errors(tmp_path, text, where):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(RaterFileError, match=where):
        load_rater_table(p)


def test_unknown_task(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("action_id,ground_truth,r1\n")
    with pytest.raises(RaterFileError):
        load_rater_table(p, task="cards")


def test_save_load_round_trip(tmp_path):
    t = simulate_chance_table(20, {"high": 2, "talent": 3}, seed=4)
    save_rater_table(t, tmp_path / "t.csv")
    back = load_rater_table(tmp_path / "t.csv")
    assert back.action_ids == t.action_ids and back.groups == t.groups
    assert np.array_equal(back.decisions, t.decisions) and np.array_equal(back.ground_truth, t.ground_truth)


def test_report_per_group():
    t = simulate_chance_table(50, {"high": 3, "talent": 4}, seed=0)
    rep = agreement_report(t)
    assert set(rep["groups"]) == {"high", "talent"}
    assert rep["groups"]["talent"]["raters"] == ["rater_4", "rater_5", "rater_6", "rater_7"]
    assert len(rep["rater_accuracy"]) == 7
    single = agreement_report(simulate_chance_table(10, {"all": 1}))
    assert single["groups"]["all"]["average_kappa"] is None
