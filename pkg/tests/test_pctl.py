import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from policymc.errors import VerificationError
from policymc.induced import build_induced_dtmc
from policymc.lang import parse_model, parse_property
from policymc.mdp import build_explicit, enabled_actions
from policymc.pctl import (
    bounded_reach_probabilities,
    check_dtmc,
    check_mdp_extremal,
    reach_probabilities,
)
from policymc.policy import PolicyNet


@st.composite
def random_mdp_text(draw):
    """Single-variable MDP source with 2..5 states, 1..2 actions each, rational probabilities."""
    n = draw(st.integers(2, 5))
    lines = ["mdp", "module m", f"  s : [0..{n - 1}] init 0;"]
    for i in range(n):
        for a in range(draw(st.integers(1, 2))):
            k = draw(st.integers(1, min(3, n)))
            succ = draw(st.lists(st.integers(0, n - 1), min_size=k, max_size=k, unique=True))
            weights = draw(st.lists(st.integers(1, 5), min_size=k, max_size=k))
            total = sum(weights)
            rhs = " + ".join(f"{w}/{total}:(s'={j})" for w, j in zip(weights, succ))
            lines.append(f"  [a{a}] s={i} -> {rhs};")
    lines.append("endmodule")
    goal = draw(st.integers(0, n - 1))
    lines.append(f'label "goal" = s={goal};')
    lines.append(f'label "safe" = s!={draw(st.integers(0, n - 1))};')
    return "\n".join(lines) + "\n"


def _dense_reach(P, target):
    """Reference: graph pre-pass plus a dense linear solve."""
    n = len(target)
    reach = target.copy()
    while True:
        nxt = reach | ((P > 0) @ reach.astype(int) > 0)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    x = np.zeros(n)
    x[target] = 1.0
    maybe = reach & ~target
    idx = np.flatnonzero(maybe)
    if idx.size:
        A = np.eye(idx.size) - P[np.ix_(idx, idx)]
        b = P[np.ix_(idx, np.flatnonzero(target))].sum(axis=1)
        x[idx] = np.linalg.solve(A, b)
    return x


def _scheduler_values(mdp, target):
    """Reach probability from the initial state under every memoryless deterministic scheduler."""
    options = [enabled_actions(mdp, s) for s in range(mdp.n_states)]
    out = []
    for pick in itertools.product(*options):
        P = np.zeros((mdp.n_states, mdp.n_states))
        for s, a in enumerate(pick):
            succ, prob = mdp.distribution(s, a)
            P[s, succ] += prob
        out.append(_dense_reach(P, target)[mdp.initial_state])
    return out


@settings(max_examples=60, deadline=None)
@given(random_mdp_text())
def test_extremal_values_match_scheduler_enumeration(text):
    mdp = build_explicit(parse_model(text))
    vals = _scheduler_values(mdp, mdp.labels["goal"])
    q = parse_property('P=? [ F "goal" ]')
    assert check_mdp_extremal(mdp, q, "max").probability == pytest.approx(max(vals), abs=1e-8)
    assert check_mdp_extremal(mdp, q, "min").probability == pytest.approx(min(vals), abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(random_mdp_text(), st.integers(0, 6), st.integers(0, 2**31))
def test_dtmc_queries_agree_with_references(text, k, seed):
    mdp = build_explicit(parse_model(text))
    net = PolicyNet.for_model(mdp, (4,), np.random.default_rng(seed))
    d = build_induced_dtmc(mdp, net)
    P = sp.csr_matrix((d.prob, d.succ, d.ptr), shape=(d.n_states, d.n_states)).toarray()
    goal, safe = d.labels["goal"], d.labels["safe"]

    x = _dense_reach(P, goal)
    assert check_dtmc(d, parse_property('P=? [ F "goal" ]')).probability == pytest.approx(x[0], abs=1e-9)

    # bounded reachability by explicit powering
    y = goal.astype(float)
    for _ in range(k):
        y = np.where(goal, 1.0, P @ y)
    bk = check_dtmc(d, parse_property(f'P=? [ F<={k} "goal" ]')).probability
    assert bk == pytest.approx(y[0], abs=1e-12)
    assert bk <= x[0] + 1e-9

    # until: make every non-safe, non-goal state a dead end
    Pu = P.copy()
    dead = ~safe & ~goal
    Pu[dead] = 0.0
    Pu[dead, np.flatnonzero(dead)] = 1.0
    u = check_dtmc(d, parse_property('P=? [ "safe" U "goal" ]')).probability
    assert u == pytest.approx(_dense_reach(Pu, goal)[0], abs=1e-9)
    assert u <= x[0] + 1e-9


def test_iterative_and_direct_solvers_agree():
    rng = np.random.default_rng(0)
    n = 60
    P = rng.random((n, n)) * (rng.random((n, n)) < 0.1)
    P[np.arange(n), (np.arange(n) + 1) % n] += 0.05
    P[0] = 0.0
    P[0, 0] = 1.0
    P /= P.sum(axis=1, keepdims=True)
    target = np.zeros(n, dtype=bool)
    target[0] = True
    S = sp.csr_matrix(P)
    direct = reach_probabilities(S, target)
    iterative = reach_probabilities(S, target, direct_limit=0)
    assert np.max(np.abs(direct - iterative)) < 1e-8


def test_bounded_zero_steps_is_the_target_indicator():
    P = sp.csr_matrix(np.array([[0.5, 0.5], [0.0, 1.0]]))
    t = np.array([False, True])
    assert bounded_reach_probabilities(P, t, 0).tolist() == [0.0, 1.0]
    assert bounded_reach_probabilities(P, t, 3).tolist() == [0.875, 1.0]


def test_threshold_queries_and_formatting(toy_mdp):
    m = toy_mdp
    d = build_induced_dtmc(m, PolicyNet.constant(m.var_names, m.low, m.high, m.actions, "a0"))
    ok = check_dtmc(d, parse_property('P>=0.8 [ F "goal" ]'))
    no = check_dtmc(d, parse_property('P<0.5 [ F "goal" ]'))
    assert ok.satisfied is True and no.satisfied is False
    assert "Satisfied: yes" in ok.human()
    assert ok.key_values().startswith("probability=0.86 satisfied=true states=4 transitions=6")
    plain = check_dtmc(d, parse_property('P=? [ F "goal" ]'))
    assert plain.satisfied is None and "Satisfied" not in plain.human()


def test_action_labels_are_queryable(toy_mdp):
    m = toy_mdp
    d = build_induced_dtmc(m, PolicyNet.constant(m.var_names, m.low, m.high, m.actions, "a1"))
    assert check_dtmc(d, parse_property('P=? [ F "a1" ]')).probability == 1.0
    assert check_dtmc(d, parse_property('P=? [ F "a0" ]')).probability == pytest.approx(0.4)


def test_errors(toy_mdp):
    m = toy_mdp
    d = build_induced_dtmc(m, PolicyNet.constant(m.var_names, m.low, m.high, m.actions, "a0"))
    with pytest.raises(VerificationError, match="nonexistent"):
        check_dtmc(d, parse_property('P=? [ F "nonexistent" ]'))
    with pytest.raises(VerificationError, match="nonexistent"):
        check_mdp_extremal(m, parse_property('P=? [ F "nonexistent" ]'))
    with pytest.raises(VerificationError, match="until"):
        check_mdp_extremal(m, parse_property('P=? [ "goal" U "empty" ]'))
    with pytest.raises(ValueError):
        check_mdp_extremal(m, parse_property('P=? [ F "goal" ]'), "avg")


def test_extremal_bounded(toy_mdp):
    m = toy_mdp
    q = parse_property('P=? [ F<=1 "goal" ]')
    assert check_mdp_extremal(m, q, "max").probability == pytest.approx(0.3)
    assert check_mdp_extremal(m, q, "min").probability == 0.0


def test_max_one_needs_the_right_scheduler():
    # "risky" can strand the run in s=2; only "safe" reaches the goal with probability 1
    text = """mdp
module m
  s : [0..2] init 0;
  [risky] s=0 -> 1/2:(s'=0) + 1/2:(s'=2);
  [safe] s=0 -> 1/3:(s'=0) + 2/3:(s'=1);
  [stay] s>0 -> true;
endmodule
label "goal" = s=1;
"""
    m = build_explicit(parse_model(text))
    q = parse_property('P=? [ F "goal" ]')
    assert check_mdp_extremal(m, q, "max").probability == 1.0
    assert check_mdp_extremal(m, q, "min").probability == 0.0
