"""Policy-induced DTMC construction, observation transforms and explanation helpers.

The chain is built breadth-first from the initial state.  At every state the
policy sees the (optionally transformed) valuation, picks an action, the
optional replacement is applied, and only that action's distribution is
copied.  States keep their true valuations; transforms change only what the
policy observes.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from policymc.bridge import action_name, parse_action_name
from policymc.errors import EmptySelectionError, ModelError, PolicyError
from policymc.mdp import DEFAULT_STATE_CAP, SINK, ExplicitMdp, ModelExplorer, StateIndex, _label_line, discover
from policymc.policy import PolicyNet, forward, saliency, select_actions_batch

StatePredicate = Callable[[np.ndarray], np.ndarray]

# ---------------------------------------------------------------------------
# observation transforms


@dataclass(frozen=True)
class Lump:
    """Replace ``feature`` values in each inclusive bin ``(lo, hi, representative)``."""

    feature: str
    bins: tuple[tuple[int, int, int], ...]

    def table(self, low: int, high: int) -> np.ndarray:
        out = np.full(high - low + 1, np.iinfo(np.int64).min, dtype=np.int64)
        for lo, hi, rep in self.bins:
            if lo > hi:
                raise ValueError(f"lump bin {lo}-{hi} on {self.feature} is empty")
            if lo < low or hi > high:
                raise ValueError(f"lump bin {lo}-{hi} leaves the range [{low}..{high}] of {self.feature}")
            if not low <= rep <= high:
                raise ValueError(f"representative {rep} is outside the range [{low}..{high}] of {self.feature}")
            seg = out[lo - low:hi - low + 1]
            if np.any(seg != np.iinfo(np.int64).min):
                raise ValueError(f"lump bins on {self.feature} overlap")
            seg[:] = rep
        missing = np.flatnonzero(out == np.iinfo(np.int64).min)
        if missing.size:
            raise ValueError(f"lump bins on {self.feature} do not cover value {int(missing[0]) + low}")
        return out

    def describe(self) -> str:
        return f"lump {self.feature}: " + ", ".join(f"{lo}-{hi}->{rep}" for lo, hi, rep in self.bins)


@dataclass(frozen=True)
class Remap:
    """Show the policy a fixed ``value`` or a full ``mapping`` for ``feature``."""

    feature: str
    value: int | None = None
    mapping: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if (self.value is None) == (not self.mapping):
            raise ValueError("remap needs exactly one of a fixed value or a value map")

    def table(self, low: int, high: int) -> np.ndarray:
        if self.value is not None:
            if not low <= self.value <= high:
                raise ValueError(f"remap value {self.value} is outside the range [{low}..{high}] of {self.feature}")
            return np.full(high - low + 1, self.value, dtype=np.int64)
        out = {}
        for src, dst in self.mapping:
            if not (low <= src <= high and low <= dst <= high):
                raise ValueError(f"remap entry {src}:{dst} leaves the range [{low}..{high}] of {self.feature}")
            if src in out and out[src] != dst:
                raise ValueError(f"remap maps {self.feature}={src} twice")
            out[src] = dst
        missing = [v for v in range(low, high + 1) if v not in out]
        if missing:
            raise ValueError(f"remap of {self.feature} does not cover value {missing[0]}")
        return np.array([out[v] for v in range(low, high + 1)], dtype=np.int64)

    def describe(self) -> str:
        if self.value is not None:
            return f"remap {self.feature} -> {self.value}"
        return f"remap {self.feature}: " + ", ".join(f"{s}->{d}" for s, d in self.mapping)


Transform = Lump | Remap


def horizon_remap(t_max: int, cycle_len: int, feature: str = "year") -> Remap:
    """Map each year onto the matching position of the final budget cycle."""
    start = t_max - cycle_len
    return Remap(feature, mapping=tuple((y, start + y % cycle_len) for y in range(t_max + 1)))


class TransformPipeline:
    """Compiled transforms for a given variable layout."""

    def __init__(self, transforms: Sequence[Transform], var_names, low, high):
        self.transforms = tuple(transforms)
        self.steps = []
        names = list(var_names)
        for t in self.transforms:
            if t.feature not in names:
                raise ValueError(f"unknown feature {t.feature!r} in transform")
            col = names.index(t.feature)
            lo, hi = int(low[col]), int(high[col])
            self.steps.append((col, lo, t.table(lo, hi)))

    def __call__(self, vals: np.ndarray) -> np.ndarray:
        if not self.steps:
            return vals
        out = np.array(vals, dtype=np.int64, copy=True)
        for col, lo, table in self.steps:
            out[:, col] = table[out[:, col] - lo]
        return out


# ---------------------------------------------------------------------------
# action replacement


@dataclass(frozen=True)
class ActionReplacement:
    """Substitute per-bridge action ``source`` by ``target`` in every joint action."""

    source: int
    target: int

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("replacement source and target must differ")
        if min(self.source, self.target) < 0:
            raise ValueError("per-bridge action indices are nonnegative")

    def renamings(self, actions: Sequence[str]) -> dict[str, str]:
        """Joint-action renamings induced on an action table (names not parsing as joint actions are kept)."""
        out = {}
        for name in actions:
            parts = parse_action_name(name)
            if parts is None or self.source not in parts:
                continue
            out[name] = action_name(tuple(self.target if k == self.source else k for k in parts))
        return out

    def describe(self) -> str:
        return f"{self.source}:{self.target}"


def joint_action_count(actions: Sequence[str]) -> int:
    return sum(1 for a in actions if parse_action_name(a) is not None)


# ---------------------------------------------------------------------------
# the chain


@dataclass
class InducedDtmc:
    """Sparse chain over policy-reachable states; row ``i`` is ``succ/prob[ptr[i]:ptr[i+1]]``."""

    var_names: tuple[str, ...]
    low: np.ndarray
    high: np.ndarray
    states: np.ndarray
    ptr: np.ndarray
    succ: np.ndarray
    prob: np.ndarray
    labels: dict[str, np.ndarray]
    actions: tuple[str, ...]
    action: np.ndarray  # action actually taken, index into ``actions``
    policy_action: np.ndarray  # the network's own choice before replacement
    origin: np.ndarray | None
    transforms: tuple = ()
    replacement: ActionReplacement | None = None
    absorbing_label: str | None = None
    initial: int = 0
    _index: StateIndex | None = field(default=None, repr=False)
    _strides: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_transitions(self) -> int:
        return len(self.succ)

    def has_label(self, name: str) -> bool:
        return name in self.labels or name in self.actions

    def label_mask(self, name: str) -> np.ndarray:
        if name in self.labels:
            return self.labels[name]
        if name in self.actions:
            return self.action == self.actions.index(name)
        raise KeyError(name)

    def action_names(self) -> list[str]:
        return [self.actions[a] for a in self.action]

    def labels_of(self, i: int) -> list[str]:
        names = [n for n, m in self.labels.items() if m[i]]
        names.append(self.actions[self.action[i]])
        return names

    def row(self, i: int) -> dict[int, float]:
        lo, hi = self.ptr[i], self.ptr[i + 1]
        return {int(s): float(p) for s, p in zip(self.succ[lo:hi], self.prob[lo:hi])}

    def index_of(self, vals: np.ndarray) -> np.ndarray:
        vals = np.atleast_2d(np.asarray(vals, dtype=np.int64))
        inside = np.all((vals >= self.low) & (vals <= self.high), axis=1)
        out = np.full(len(vals), -1, dtype=np.int64)
        if inside.any():
            out[inside] = self._index.lookup((vals[inside] - self.low) @ self._strides)
        return out

    def export(self, prefix: str | os.PathLike) -> list[str]:
        """Write ``.sta``, ``.tra`` (``src dst prob``) and ``.lab`` files."""
        from policymc.io import atomic_write

        prefix = str(prefix)
        sta = ["(" + ",".join(self.var_names) + ")"]
        sta += [f"{i}:(" + ",".join(str(int(v)) for v in row) + ")" for i, row in enumerate(self.states)]
        src = np.repeat(np.arange(self.n_states), np.diff(self.ptr))
        tra = [f"{s} {int(d)} {p:.17g}" for s, d, p in zip(src.tolist(), self.succ, self.prob)]
        names = self.action_names()
        lab = [_label_line(i, self.labels, names[i]) for i in range(self.n_states)]
        paths = [prefix + ".sta", prefix + ".tra", prefix + ".lab"]
        for path, lines in zip(paths, (sta, tra, lab)):
            atomic_write(path, "\n".join(lines) + "\n")
        return paths

    def same_chain(self, other: "InducedDtmc") -> bool:
        """Bit-identical states, transitions and taken actions."""
        return (
            self.actions == other.actions
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.ptr, other.ptr)
            and np.array_equal(self.succ, other.succ)
            and np.array_equal(self.prob, other.prob)
            and np.array_equal(self.action, other.action)
        )


class _MdpSource:
    def __init__(self, mdp: ExplicitMdp):
        self.mdp = mdp
        self.var_names, self.low, self.high = mdp.var_names, mdp.low, mdp.high
        self.actions = mdp.actions
        self.strides = mdp._strides
        init = mdp.initial_state
        self.init_vals = mdp.states[[init]]
        self.init_origin = np.array([init], dtype=np.int64)

    def expand(self, vals, origin):
        m = self.mdp
        starts, ends = m.state_ptr[origin], m.state_ptr[origin + 1]
        counts = ends - starts
        choice_state = np.repeat(np.arange(len(origin)), counts)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        choices = np.repeat(starts - offsets, counts) + np.arange(counts.sum())
        choice_action = m.choice_action[choices].astype(np.int64)

        def pick(sel):
            c = choices[sel]
            lo, hi = m.choice_ptr[c], m.choice_ptr[c + 1]
            n = hi - lo
            off = np.concatenate([[0], np.cumsum(n)[:-1]])
            t = np.repeat(lo - off, n) + np.arange(n.sum())
            succ = m.succ[t].astype(np.int64)
            return n, m.states[succ], m.prob[t], succ

        return choice_state, choice_action, pick

    def labels(self, vals, origin):
        return {name: mask[origin] for name, mask in self.mdp.labels.items()}


class _ExplorerSource:
    def __init__(self, ex: ModelExplorer):
        self.ex = ex
        self.var_names, self.low, self.high = ex.var_names, ex.low, ex.high
        self.actions = ex.actions
        self.strides = ex.strides
        self.init_vals = ex.init.copy()
        self.init_origin = None

    def expand(self, vals, origin):
        exp = self.ex.expand(vals)

        def pick(sel):
            lo, hi = exp.choice_ptr[sel], exp.choice_ptr[sel + 1]
            n = hi - lo
            off = np.concatenate([[0], np.cumsum(n)[:-1]])
            t = np.repeat(lo - off, n) + np.arange(n.sum())
            return n, exp.succ_vals[t], exp.prob[t], None

        return exp.choice_state, exp.choice_action, pick

    def labels(self, vals, origin):
        return self.ex.label_masks(vals)


def _action_map(source_actions: Sequence[str], net: PolicyNet) -> tuple[np.ndarray, tuple[str, ...], int]:
    """Source action id -> chain action id; returns (map, chain action table, sink id)."""
    src = {a for a in source_actions if a != SINK}
    mine = {a for a in net.actions if a != SINK}
    if src != mine:
        extra = sorted(src - mine)[:3] or sorted(mine - src)[:3]
        raise PolicyError(f"policy action table does not match the model (differs on {', '.join(extra)})")
    # sink gets an id past the policy's outputs unless the policy itself has one
    actions = tuple(net.actions) if SINK in net.actions else tuple(net.actions) + (SINK,)
    sink = actions.index(SINK)
    amap = np.array([actions.index(a) for a in source_actions], dtype=np.int64)
    return amap, actions, sink


def build_induced_dtmc(
    model: ExplicitMdp | ModelExplorer,
    net: PolicyNet,
    transforms: Sequence[Transform] = (),
    replacement: ActionReplacement | None = None,
    extra_labelers: Sequence[tuple[str, StatePredicate]] = (),
    absorbing_label: str | None = None,
    cap: int = DEFAULT_STATE_CAP,
) -> InducedDtmc:
    """Breadth-first construction of the chain induced by ``net`` on ``model``.

    ``model`` may be a built MDP or a :class:`ModelExplorer`, in which case
    only policy-reachable states are ever generated.  With
    ``absorbing_label`` set, states carrying that label get a self-loop
    instead of being expanded (reachability probabilities of that label are
    unchanged).
    """
    source = _MdpSource(model) if isinstance(model, ExplicitMdp) else _ExplorerSource(model)
    if tuple(net.var_names) != tuple(source.var_names):
        raise PolicyError("policy features do not match the model variables")
    amap, actions, sink = _action_map(source.actions, net)
    n_net = len(net.actions)
    pipeline = TransformPipeline(transforms, source.var_names, source.low, source.high)

    repl = None
    if replacement is not None:
        renamed = replacement.renamings(net.actions)
        repl = np.arange(n_net)
        for a, b in renamed.items():
            repl[net.actions.index(a)] = net.actions.index(b) if b in net.actions else -1

    absorb_fn = None
    if absorbing_label is not None:
        if isinstance(source, _MdpSource):
            if absorbing_label not in source.mdp.labels:
                raise ModelError(f"unknown label {absorbing_label!r}")
        elif absorbing_label not in source.ex.labels:
            raise ModelError(f"unknown label {absorbing_label!r}")

        def absorb_fn(vals, origin):
            return source.labels(vals, origin)[absorbing_label]

    space = int(np.prod((source.high - source.low + 1).astype(object)))
    index = StateIndex(space)
    encode = lambda v: (v - source.low) @ source.strides  # noqa: E731
    frontier, frontier_origin = source.init_vals, source.init_origin
    index.add(encode(frontier), 0)
    n_states = 1
    layer_vals, layer_origin = [frontier], [frontier_origin]
    counts, succ_parts, prob_parts, taken_parts, chosen_parts = [], [], [], [], []

    while len(frontier):
        n = len(frontier)
        choice_state, choice_action, pick = source.expand(frontier, frontier_origin)
        chain_action = amap[choice_action]
        is_net = chain_action < n_net
        enabled = np.zeros((n, n_net), dtype=bool)
        enabled[choice_state[is_net], chain_action[is_net]] = True
        has_net = enabled.any(axis=1)

        scores = forward(net, net.observe(pipeline(frontier)))
        chosen = select_actions_batch(scores, enabled)
        taken = chosen.copy()
        if repl is not None:
            target = repl[chosen]
            ok = (target >= 0) & enabled[np.arange(n), np.maximum(target, 0)]
            taken = np.where(ok, target, np.argmax(enabled, axis=1))
        chosen = np.where(has_net, chosen, sink)
        taken = np.where(has_net, taken, sink)

        # locate the choice carrying the taken action for every state
        key = choice_state * (len(actions) + 1) + chain_action
        want = np.arange(n) * (len(actions) + 1) + taken
        pos = np.searchsorted(key, want)
        if np.any(pos >= len(key)) or np.any(key[np.minimum(pos, len(key) - 1)] != want):
            raise PolicyError("selected action is not enabled (construction bug)")
        n_succ, succ_vals, prob, succ_origin = pick(pos)

        if absorb_fn is not None:
            stop = absorb_fn(frontier, frontier_origin)
            if stop.any():
                row = np.repeat(np.arange(n), n_succ)
                keep = ~stop[row]
                n_succ = np.where(stop, 1, n_succ)
                # kept rows plus one self-loop per stopped row, regrouped by row
                rows = np.concatenate([row[keep], np.flatnonzero(stop)])
                vals_all = np.concatenate([succ_vals[keep], frontier[stop]])
                probs_all = np.concatenate([prob[keep], np.ones(int(stop.sum()))])
                order = np.argsort(rows, kind="stable")
                succ_vals, prob = vals_all[order], probs_all[order]
                if succ_origin is not None:
                    succ_origin = np.concatenate([succ_origin[keep], frontier_origin[stop]])[order]

        codes = encode(succ_vals)
        succ_idx, new_pos = discover(index, codes, np.arange(len(codes)), n_states)
        n_states += len(new_pos)
        if n_states > cap:
            raise ModelError(f"induced chain exceeds the cap of {cap} states")
        counts.append(n_succ)
        succ_parts.append(succ_idx)
        prob_parts.append(prob)
        taken_parts.append(taken)
        chosen_parts.append(chosen)
        frontier = succ_vals[new_pos]
        frontier_origin = None if succ_origin is None else succ_origin[new_pos]
        if len(frontier):
            layer_vals.append(frontier)
            layer_origin.append(frontier_origin)

    states = np.concatenate(layer_vals)
    origin = None if source.init_origin is None else np.concatenate(layer_origin)
    labels = source.labels(states, origin)
    for name, fn in extra_labelers:
        if name in labels or name in actions:
            raise ValueError(f"extra label {name!r} clashes with an existing label")
        labels[name] = np.asarray(fn(states), dtype=bool)
    taken_all = np.concatenate(taken_parts).astype(np.int32)
    if SINK not in net.actions and not np.any(taken_all == sink):
        actions = actions[:-1]
    ptr = np.concatenate([[0], np.cumsum(np.concatenate(counts))]).astype(np.int64)
    return InducedDtmc(
        var_names=tuple(source.var_names),
        low=source.low,
        high=source.high,
        states=states,
        ptr=ptr,
        succ=np.concatenate(succ_parts).astype(np.int64),
        prob=np.concatenate(prob_parts),
        labels=labels,
        actions=actions,
        action=taken_all,
        policy_action=np.concatenate(chosen_parts).astype(np.int32),
        origin=origin,
        transforms=tuple(transforms),
        replacement=replacement,
        absorbing_label=absorbing_label,
        _index=index,
        _strides=source.strides,
    )


# ---------------------------------------------------------------------------
# explanations


def action_distribution(dtmc: InducedDtmc) -> dict[str, tuple[int, float]]:
    """State count and fraction per taken action, most frequent first (ties by name)."""
    counts = np.bincount(dtmc.action, minlength=len(dtmc.actions))
    total = int(counts.sum())
    items = [(dtmc.actions[a], int(c)) for a, c in enumerate(counts) if c]
    items.sort(key=lambda kv: (-kv[1], kv[0]))
    return {name: (c, c / total) for name, c in items}


@dataclass(frozen=True)
class SaliencyRow:
    feature: str
    mean: float
    std: float
    count: int


def state_saliency(dtmc: InducedDtmc, net: PolicyNet, mask: np.ndarray | None = None) -> np.ndarray:
    """Per-state |d score / d feature| for the action the policy selected."""
    sel = np.arange(dtmc.n_states) if mask is None else np.flatnonzero(mask)
    pipeline = TransformPipeline(dtmc.transforms, dtmc.var_names, dtmc.low, dtmc.high)
    obs = net.observe(pipeline(dtmc.states[sel]))
    chosen = dtmc.policy_action[sel].astype(np.int64)
    if np.any(chosen >= len(net.actions)):
        chosen = np.where(chosen < len(net.actions), chosen, np.argmax(forward(net, obs), axis=1))
    return saliency(net, obs, chosen)


def conditional_saliency(dtmc: InducedDtmc, net: PolicyNet, state_filter=None) -> list[SaliencyRow]:
    """Mean and population std of saliency over the selected states, ranked by mean.

    ``state_filter`` is a boolean mask over chain states or a predicate on
    the (n, d) valuation array; None selects every state.
    """
    if state_filter is None:
        mask = np.ones(dtmc.n_states, dtype=bool)
    elif callable(state_filter):
        mask = np.asarray(state_filter(dtmc.states), dtype=bool)
    else:
        mask = np.asarray(state_filter, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise EmptySelectionError("state filter matches no states of the induced chain")
    g = state_saliency(dtmc, net, mask)
    means, stds = g.mean(axis=0), g.std(axis=0)
    order = sorted(range(len(dtmc.var_names)), key=lambda k: (-means[k], k))
    return [SaliencyRow(dtmc.var_names[k], float(means[k]), float(stds[k]), count) for k in order]


def range_filter(var_names: Sequence[str], bounds: dict[str, tuple[int, int]]) -> StatePredicate:
    """Predicate selecting states with every named feature inside its inclusive range."""
    cols = [(list(var_names).index(name), lo, hi) for name, (lo, hi) in bounds.items()]

    def pred(vals: np.ndarray) -> np.ndarray:
        ok = np.ones(len(vals), dtype=bool)
        for c, lo, hi in cols:
            ok &= (vals[:, c] >= lo) & (vals[:, c] <= hi)
        return ok

    return pred
