from collections import deque

import numpy as np
import pytest

from policymc.bridge import action_name, generate_bridge_model, parse_action_name
from policymc.errors import EmptySelectionError, ModelError, PolicyError
from policymc.induced import (
    ActionReplacement,
    Lump,
    Remap,
    action_distribution,
    build_induced_dtmc,
    conditional_saliency,
    horizon_remap,
    joint_action_count,
    range_filter,
    state_saliency,
)
from policymc.lang import parse_model, parse_property
from policymc.mdp import ModelExplorer, enabled_actions
from policymc.pctl import check_dtmc
from policymc.policy import PolicyNet, forward, saliency

from conftest import SMALL_BRIDGE


@pytest.fixture(scope="module")
def nets(small_mdp):
    m = small_mdp
    return [PolicyNet.for_model(m, (16,), np.random.default_rng(seed)) for seed in range(3)]


def _observe_transformed(net, vals, mdp, transforms):
    v = np.array(vals, dtype=np.int64)
    for t in transforms:
        col = mdp.var_names.index(t.feature)
        lo, hi = int(mdp.low[col]), int(mdp.high[col])
        v[col] = t.table(lo, hi)[v[col] - lo]
    return net.observe(v)


def reference_chain(mdp, net, transforms=(), replacement=None):
    """One state at a time: argmax, first-enabled fallback, optional renaming."""
    start = mdp.initial_state
    order, seen = [start], {start: 0}
    queue = deque([start])
    rows, taken = [], []
    while queue:
        s = queue.popleft()
        en = enabled_actions(mdp, s)
        scores = forward(net, _observe_transformed(net, mdp.states[s], mdp, transforms))
        a = int(np.argmax(scores))
        a = a if a in en else en[0]
        if replacement is not None:
            parts = parse_action_name(mdp.actions[a])
            if parts and replacement.source in parts:
                new = action_name(tuple(replacement.target if k == replacement.source else k for k in parts))
                b = mdp.actions.index(new) if new in mdp.actions else -1
                a = b if b in en else en[0]
        succ, prob = mdp.distribution(s, a)
        row = {}
        for t, p in zip(succ.tolist(), prob.tolist()):
            if t not in seen:
                seen[t] = len(order)
                order.append(t)
                queue.append(t)
            row[seen[t]] = p
        rows.append(row)
        taken.append(mdp.actions[a])
    return order, rows, taken


def _chain_rows(d):
    return [d.row(i) for i in range(d.n_states)]


@pytest.mark.parametrize("case", ["plain", "lump", "remap", "replace"])
def test_matches_sequential_reference(small_mdp, nets, case):
    transforms, repl = (), None
    if case == "lump":
        transforms = (Lump("cond_b1", ((0, 3, 2), (4, 6, 5), (7, 9, 7))),)
    elif case == "remap":
        transforms = (Remap("cycle_year", value=1),)
    elif case == "replace":
        repl = ActionReplacement(0, 1)
    for net in nets:
        d = build_induced_dtmc(small_mdp, net, transforms, repl)
        order, rows, taken = reference_chain(small_mdp, net, transforms, repl)
        assert d.origin.tolist() == order
        assert _chain_rows(d) == rows
        assert d.action_names() == taken


def test_explorer_and_mdp_sources_agree(small_mdp, nets):
    ex = ModelExplorer(parse_model(generate_bridge_model(SMALL_BRIDGE)))
    for net in nets:
        for kw in ({}, {"replacement": ActionReplacement(1, 3)}, {"absorbing_label": "failed"}):
            a = build_induced_dtmc(small_mdp, net, **kw)
            b = build_induced_dtmc(ex, net, **kw)
            assert a.same_chain(b)
            assert b.origin is None
            for name in a.labels:
                assert np.array_equal(a.labels[name], b.labels[name])


def test_chain_is_stochastic_and_within_the_mdp(small_mdp, nets):
    d = build_induced_dtmc(small_mdp, nets[0])
    sums = np.add.reduceat(d.prob, d.ptr[:-1])
    assert np.allclose(sums, 1.0)
    assert np.array_equal(small_mdp.states[d.origin], d.states)
    assert d.n_states <= small_mdp.n_states


def test_absorbing_label_keeps_reachability(small_mdp, nets):
    q = parse_property('P=? [ F "failed" ]')
    for net in nets:
        full = build_induced_dtmc(small_mdp, net)
        cut = build_induced_dtmc(small_mdp, net, absorbing_label="failed")
        assert cut.n_states <= full.n_states
        assert check_dtmc(cut, q).probability == pytest.approx(check_dtmc(full, q).probability, abs=1e-12)
        for i in np.flatnonzero(cut.labels["failed"]):
            assert cut.row(int(i)) == {int(i): 1.0}
    with pytest.raises(ModelError):
        build_induced_dtmc(small_mdp, nets[0], absorbing_label="nope")


def test_taken_actions_are_labels(small_mdp, nets):
    d = build_induced_dtmc(small_mdp, nets[0])
    name = d.action_names()[0]
    assert d.has_label(name)
    assert d.label_mask(name)[0]
    assert name in d.labels_of(0)


def test_replacement_renamings():
    joint = [action_name((a, b, c)) for a in range(4) for b in range(4) for c in range(4)] + ["done", "init"]
    assert joint_action_count(joint) == 64
    r = ActionReplacement(1, 2).renamings(joint)
    assert len(r) == 37 and r["a1_0_1"] == "a2_0_2" and "a0_0_0" not in r
    assert ActionReplacement(1, 2).describe() == "1:2"
    with pytest.raises(ValueError):
        ActionReplacement(2, 2)


def test_replacement_falls_back_when_target_unaffordable(small_mdp):
    # a constant network that always asks for a1_1 (cost 2); replacing 1 -> 3 asks for a3_3 (cost 8 > B_max)
    m = small_mdp
    net = PolicyNet.constant(m.var_names, m.low, m.high, m.actions, "a1_1")
    d = build_induced_dtmc(m, net, replacement=ActionReplacement(1, 3))
    names = set(d.action_names())
    assert "a3_3" not in names
    assert np.all(d.policy_action[d.action != d.policy_action] == m.actions.index("a1_1"))


class TestTransforms:
    def test_lump_table(self):
        assert Lump("x", ((0, 3, 2), (4, 6, 5), (7, 9, 7))).table(0, 9).tolist() == [2, 2, 2, 2, 5, 5, 5, 7, 7, 7]

    @pytest.mark.parametrize("bins, msg", [(((0, 3, 2), (3, 9, 5)), "overlap"), (((0, 3, 2), (5, 9, 5)), "cover"),
                                           (((0, 12, 2),), "range"), (((0, 9, 11),), "representative")])
    def test_bad_lumps(self, bins, msg):
        with pytest.raises(ValueError, match=msg):
            Lump("x", bins).table(0, 9)

    def test_remap_forms(self):
        assert Remap("x", value=3).table(0, 4).tolist() == [3] * 5
        assert Remap("x", mapping=((0, 1), (1, 0))).table(0, 1).tolist() == [1, 0]
        with pytest.raises(ValueError, match="cover"):
            Remap("x", mapping=((0, 1),)).table(0, 1)
        with pytest.raises(ValueError):
            Remap("x")
        with pytest.raises(ValueError):
            Remap("x", value=1, mapping=((0, 0),))

    def test_horizon_remap(self):
        table = horizon_remap(20, 4).table(0, 20)
        assert table.tolist() == [16 + y % 4 for y in range(21)]
        assert table[[0, 4, 8, 12, 16, 20]].tolist() == [16] * 6

    def test_unknown_feature(self, small_mdp, nets):
        with pytest.raises(ValueError, match="unknown feature"):
            build_induced_dtmc(small_mdp, nets[0], [Remap("nope", value=0)])


def test_policy_model_mismatch(small_mdp, toy_mdp):
    net = PolicyNet.for_model(toy_mdp, (4,), np.random.default_rng(0))
    with pytest.raises(PolicyError):
        build_induced_dtmc(small_mdp, net)


def test_action_distribution(small_mdp, nets):
    d = build_induced_dtmc(small_mdp, nets[1])
    dist = action_distribution(d)
    counts = [c for c, _ in dist.values()]
    assert sum(counts) == d.n_states
    assert counts == sorted(counts, reverse=True)
    assert sum(f for _, f in dist.values()) == pytest.approx(1.0)


def test_conditional_saliency_statistics(small_mdp, nets):
    net = nets[2]
    d = build_induced_dtmc(small_mdp, net)
    pred = range_filter(d.var_names, {"cond_b1": (0, 2)})
    mask = pred(d.states)
    rows = conditional_saliency(d, net, pred)
    g = np.array([saliency(net, net.observe(d.states[i]), int(d.policy_action[i])) for i in np.flatnonzero(mask)])
    by_name = {r.feature: r for r in rows}
    for k, name in enumerate(d.var_names):
        assert by_name[name].mean == pytest.approx(g[:, k].mean(), rel=1e-9, abs=1e-12)
        assert by_name[name].std == pytest.approx(g[:, k].std(), rel=1e-9, abs=1e-12)
        assert by_name[name].count == int(mask.sum())
    assert [r.mean for r in rows] == sorted((r.mean for r in rows), reverse=True)
    assert conditional_saliency(d, net, mask) == rows
    assert state_saliency(d, net).shape == (d.n_states, len(d.var_names))


def test_empty_selection_is_a_distinct_error(small_mdp, nets):
    d = build_induced_dtmc(small_mdp, nets[0])
    with pytest.raises(EmptySelectionError):
        conditional_saliency(d, nets[0], np.zeros(d.n_states, dtype=bool))


def test_export(small_mdp, nets, tmp_path):
    d = build_induced_dtmc(small_mdp, nets[0])
    sta, tra, lab = d.export(tmp_path / "chain")
    lines = open(tra).read().splitlines()
    assert len(lines) == d.n_transitions
    src, dst, p = lines[0].split()
    assert (int(src), int(dst), float(p)) == (0, int(d.succ[0]), float(d.prob[0]))
    assert open(lab).read().splitlines()[0].endswith(d.action_names()[0])
