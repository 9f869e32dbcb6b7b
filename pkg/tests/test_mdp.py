from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from policymc.bridge import generate_bridge_model
from policymc.errors import ModelError
from policymc.lang import Num, _fold, _Parser, parse_model
from policymc.mdp import ModelExplorer, build_explicit, compile_expr, enabled_actions

from conftest import SMALL_BRIDGE


def _value(e, valuation):
    folded = _fold(e, dict(valuation), set(), (0, 0))
    assert isinstance(folded, Num)
    return folded.value


def reference_build(ast):
    """Sequential FIFO exploration with exact arithmetic, one state at a time."""
    names = ast.var_names
    init = tuple(v.init for v in ast.variables)
    index, order = {init: 0}, [init]
    queue = deque([init])
    rows = []
    while queue:
        s = queue.popleft()
        val = dict(zip(names, s))
        by_action = {}
        for cmd in ast.commands:
            if not _value(cmd.guard, val):
                continue
            dist = by_action.setdefault(cmd.action, {})
            for br in cmd.branches:
                nxt = dict(val)
                for var, e in br.updates:
                    nxt[var] = _value(e, val)
                t = tuple(nxt[n] for n in names)
                if t not in index:
                    index[t] = len(order)
                    order.append(t)
                    queue.append(t)
                dist[index[t]] = dist.get(index[t], Fraction(0)) + br.prob
        rows.append(by_action)
    return order, rows


@pytest.mark.parametrize("which", ["toy", "small_bridge"])
def test_build_matches_sequential_reference(which, toy_text):
    text = toy_text if which == "toy" else generate_bridge_model(SMALL_BRIDGE)
    ast = parse_model(text)
    mdp = build_explicit(ast)
    order, rows = reference_build(ast)
    assert [tuple(int(v) for v in r) for r in mdp.states] == order
    for s, by_action in enumerate(rows):
        got = [mdp.actions[a] for a in enabled_actions(mdp, s)]
        if not by_action:
            assert got == ["__sink"]
            continue
        assert got == sorted(by_action)
        for name, dist in by_action.items():
            succ, prob = mdp.distribution(s, mdp.action_index(name))
            assert dict(zip(succ.tolist(), prob.tolist())) == pytest.approx({k: float(v) for k, v in dist.items()},
                                                                               abs=1e-15)


def test_toy_statistics(toy_mdp):
    m = toy_mdp
    assert (m.n_states, m.n_choices, m.n_transitions) == (4, 5, 8)
    assert m.actions == ("a0", "a1", "end")
    assert m.valuation(0) == {"s": 0}
    assert m.labels_of(m.index_of([[2]])[0]) == {"goal"}
    assert m.index_of([[7], [3]]).tolist() == [-1, 3]


def test_rows_are_stochastic(small_mdp):
    sums = np.add.reduceat(small_mdp.prob, small_mdp.choice_ptr[:-1])
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_deadlocks_get_a_sink_self_loop():
    m = build_explicit(parse_model("mdp\nmodule m\n x : [0..1] init 0;\n [a] x=0 -> (x'=1);\nendmodule"))
    assert m.actions == ("__sink", "a")
    succ, prob = m.distribution(1, m.action_index("__sink"))
    assert succ.tolist() == [1] and prob.tolist() == [1.0]


def test_out_of_range_update_names_state_command_and_branch():
    text = "mdp\nmodule m\n x : [0..2] init 0;\n [a] x<3 -> 0.5:(x'=x+1) + 0.5:(x'=x);\nendmodule"
    with pytest.raises(ModelError) as info:
        build_explicit(parse_model(text))
    msg = str(info.value)
    assert "x to 3" in msg and "(x=2)" in msg and "[a]" in msg and "line 4" in msg and "branch 1" in msg


def test_state_cap():
    with pytest.raises(ModelError, match="cap|limit|exceed"):
        build_explicit(parse_model(generate_bridge_model(SMALL_BRIDGE)), cap=100)


def test_rewards_by_action(toy_mdp):
    # state rewards are attached to every choice leaving the state
    goal = int(toy_mdp.index_of([[2]])[0])
    assert toy_mdp.reward(goal, toy_mdp.action_index("end")) == 1.0
    assert toy_mdp.reward(0, toy_mdp.action_index("a0")) == 0.0


def test_export_files(toy_mdp, tmp_path):
    paths = toy_mdp.export(tmp_path / "l1")
    sta, tra, lab = (open(p).read().splitlines() for p in paths)
    assert sta[0] == "(s)" and sta[1] == "0:(0)"
    assert len(tra) == toy_mdp.n_transitions
    assert tra[0].split()[:3] == ["0", "a0", "1"]
    assert any(line.endswith("goal") for line in lab)


def test_build_is_deterministic(small_mdp):
    again = build_explicit(parse_model(generate_bridge_model(SMALL_BRIDGE)))
    for f in ("states", "state_ptr", "choice_action", "choice_ptr", "succ", "prob", "choice_reward"):
        assert np.array_equal(getattr(small_mdp, f), getattr(again, f))


def test_explorer_expansion_agrees_with_build(small_mdp):
    ex = ModelExplorer(small_mdp_ast())
    exp = ex.expand(small_mdp.states[:50])
    n_choices = int(small_mdp.state_ptr[50])
    got = [ex.actions[a] for a in exp.choice_action]
    assert got == [small_mdp.actions[a] for a in small_mdp.choice_action[:n_choices]]
    assert np.array_equal(exp.choice_state, np.repeat(np.arange(50), np.diff(small_mdp.state_ptr[:51])))


def small_mdp_ast():
    return parse_model(generate_bridge_model(SMALL_BRIDGE))


# ---------------------------------------------------------------------------
# vectorized compiler vs the constant folder

VARS = ("x", "y")


def exprs():
    leaf = st.one_of(st.sampled_from(VARS), st.integers(-4, 4).map(str))

    def extend(inner):
        return st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda t: f"({t[0]}{t[1]}{t[2]})"),
            st.tuples(st.sampled_from(["min", "max"]), inner, inner).map(lambda t: f"{t[0]}({t[1]},{t[2]})"),
            st.tuples(inner, st.integers(1, 5)).map(lambda t: f"mod({t[0]},{t[1]})"),
            inner.map(lambda s: f"(-{s})"),
        )

    return st.recursive(leaf, extend, max_leaves=8)


@settings(max_examples=200, deadline=None)
@given(exprs(), st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=1, max_size=8),
       st.sampled_from(["<", "<=", ">", ">=", "=", "!="]), st.booleans())
def test_compiled_expressions_agree_with_folding(text, rows, rel, bounded):
    e = _fold(_Parser(text).expr(), {}, set(VARS), (0, 0))
    vals = np.array(rows, dtype=np.int64)
    bounds = [(-6, 6), (-6, 6)] if bounded else None
    got = compile_expr(e, {"x": 0, "y": 1}, bounds)(vals)
    want = [_value(e, {"x": int(a), "y": int(b)}) for a, b in rows]
    assert got.tolist() == want
    cmp = _fold(_Parser(f"{text} {rel} 1").expr(), {}, set(VARS), (0, 0))
    got_b = compile_expr(cmp, {"x": 0, "y": 1}, bounds)(vals)
    assert got_b.tolist() == [_value(cmp, {"x": int(a), "y": int(b)}) for a, b in rows]


def test_checked_arithmetic_overflows_loudly():
    e = _fold(_Parser("x*x").expr(), {}, {"x"}, (0, 0))
    with pytest.raises(ModelError, match="overflow"):
        compile_expr(e, {"x": 0})(np.array([[2**40]], dtype=np.int64))
