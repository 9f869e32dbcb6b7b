"""Explicit-state MDP construction by breadth-first reachability.

Expressions are compiled to closures over numpy arrays so that a whole BFS
layer is expanded at once.  Discovery order is still exactly that of a
sequential FIFO exploration that visits successors in (command, branch)
order: within a layer, new states are ranked by (parent index, command
index, branch index).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from policymc.errors import ModelError
from policymc.lang import Binary, Call, Expr, ModelAst, Num, Unary, Var

SINK = "__sink"
DEFAULT_STATE_CAP = 5_000_000
_DENSE_LOOKUP_LIMIT = 1 << 25

Evaluator = Callable[[np.ndarray], np.ndarray]

# ---------------------------------------------------------------------------
# expression compilation


def _overflow(message: str) -> ModelError:
    return ModelError(f"64-bit integer overflow while evaluating {message}")


def _checked_add(a, b):
    r = a + b
    if np.any(((a ^ r) & (b ^ r)) < 0):
        raise _overflow("'+'")
    return r


def _checked_sub(a, b):
    r = a - b
    if np.any(((a ^ b) & (a ^ r)) < 0):
        raise _overflow("'-'")
    return r


def _checked_mul(a, b):
    r = a * b
    nz = a != 0
    if np.any(nz):
        an, bn, rn = np.broadcast_to(a, r.shape)[nz], np.broadcast_to(b, r.shape)[nz], r[nz]
        bad = (rn // an != bn) | ((an == -1) & (bn == np.iinfo(np.int64).min))
        if np.any(bad):
            raise _overflow("'*'")
    return r


def _checked_neg(a):
    if np.any(a == np.iinfo(np.int64).min):
        raise _overflow("unary '-'")
    return -a


_UNCHECKED = {"+": np.add, "-": np.subtract, "*": np.multiply}
_CHECKED = {"+": _checked_add, "-": _checked_sub, "*": _checked_mul}
_COMPARE = {
    "=": np.equal,
    "!=": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "|": np.logical_or,
}
_I64_MIN, _I64_MAX = int(np.iinfo(np.int64).min), int(np.iinfo(np.int64).max)


def _fits(lo: int, hi: int) -> bool:
    return _I64_MIN <= lo and hi <= _I64_MAX


def _interval(op: str, a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    if op == "+":
        return a[0] + b[0], a[1] + b[1]
    if op == "-":
        return a[0] - b[1], a[1] - b[0]
    corners = [x * y for x in a for y in b]
    return min(corners), max(corners)


def _compile(e: Expr, index: dict[str, int], bounds):
    """Return (fn, lo, hi).  ``fn`` may return a numpy scalar for constants.

    The interval [lo, hi] encloses every value the expression can take over
    the declared variable ranges; arithmetic whose interval fits in int64 is
    evaluated without overflow checks.
    """
    if isinstance(e, Num):
        value = e.value
        if isinstance(value, bool):
            c = np.bool_(value)
            return (lambda vals: c), int(value), int(value)
        if not isinstance(value, int):
            raise ModelError(f"non-integer constant {value} in state expression")
        c = np.int64(value)
        return (lambda vals: c), value, value
    if isinstance(e, Var):
        col = index[e.name]
        lo, hi = bounds[col] if bounds is not None else (_I64_MIN, _I64_MAX)
        return (lambda vals: vals[:, col]), lo, hi
    if isinstance(e, Unary):
        inner, lo, hi = _compile(e.operand, index, bounds)
        if e.op == "!":
            return (lambda vals: np.logical_not(inner(vals))), 0, 1
        if _fits(-hi, -lo) and lo > _I64_MIN:
            return (lambda vals: np.negative(inner(vals))), -hi, -lo
        return (lambda vals: _checked_neg(inner(vals))), -hi, -lo
    if isinstance(e, Binary):
        (left, llo, lhi), (right, rlo, rhi) = _compile(e.left, index, bounds), _compile(e.right, index, bounds)
        if e.op == "&":
            def conj(vals):
                lv = left(vals)
                if np.ndim(lv) and not lv.any():
                    return lv
                return np.logical_and(lv, right(vals))
            return conj, 0, 1
        if e.op in _COMPARE:
            fn = _COMPARE[e.op]
            return (lambda vals: fn(left(vals), right(vals))), 0, 1
        lo, hi = _interval(e.op, (llo, lhi), (rlo, rhi))
        safe = _fits(llo, lhi) and _fits(rlo, rhi) and _fits(lo, hi)
        fn = (_UNCHECKED if safe else _CHECKED)[e.op]
        return (lambda vals: fn(left(vals), right(vals))), lo, hi
    if isinstance(e, Call):
        parts = [_compile(a, index, bounds) for a in e.args]
        args = [p[0] for p in parts]
        if e.fn in ("min", "max"):
            red = np.minimum if e.fn == "min" else np.maximum
            pick = min if e.fn == "min" else max

            def fminmax(vals):
                out = args[0](vals)
                for a in args[1:]:
                    out = red(out, a(vals))
                return out
            return fminmax, pick(p[1] for p in parts), pick(p[2] for p in parts)
        a0, a1 = args
        dlo, dhi = parts[1][1], parts[1][2]
        m = max(abs(dlo), abs(dhi))
        never_zero = dlo > 0 or dhi < 0

        def fmod(vals):
            d = a1(vals)
            if not never_zero and np.any(d == 0):
                raise ModelError("mod by zero")
            return np.mod(a0(vals), d)
        return fmod, -m + 1 if m else 0, m - 1 if m else 0
    raise AssertionError(e)  # pragma: no cover


def compile_expr(e: Expr, index: dict[str, int], bounds=None) -> Evaluator:
    """Compile ``e`` to a function of a (n, d) int64 valuation array returning an (n,) array.

    ``bounds`` (one (low, high) pair per column) enables overflow-check
    elision; without it every arithmetic operation is checked.
    """
    fn = _compile(e, index, bounds)[0]

    def evaluate(vals: np.ndarray) -> np.ndarray:
        out = fn(vals)
        if np.ndim(out) == 0:
            return np.full(len(vals), out, dtype=np.asarray(out).dtype)
        return out

    return evaluate


# ---------------------------------------------------------------------------
# successor generation


@dataclass
class Expansion:
    """Enabled choices and transitions for a batch of source states.

    Choices are sorted by (state, action id); transitions of choice ``c`` are
    ``choice_ptr[c]:choice_ptr[c+1]`` in branch order with duplicates merged.
    ``order`` lists transition positions in BFS discovery order
    (state, command, branch).
    """

    choice_state: np.ndarray
    choice_action: np.ndarray
    choice_ptr: np.ndarray
    succ_vals: np.ndarray
    prob: np.ndarray
    order: np.ndarray


@dataclass
class _CompiledCommand:
    action: int
    guard: Evaluator
    probs: list[float]
    updates: list[list[tuple[int, int]]]  # per branch: (column, index into exprs)
    exprs: list[Evaluator]
    line: int


class ModelExplorer:
    """Compiled form of a :class:`ModelAst` that expands batches of valuations on demand."""

    def __init__(self, ast: ModelAst):
        self.ast = ast
        self.var_names = ast.var_names
        self.index = {name: i for i, name in enumerate(self.var_names)}
        self.low = np.array([v.low for v in ast.variables], dtype=np.int64)
        self.high = np.array([v.high for v in ast.variables], dtype=np.int64)
        self.init = np.array([[v.init for v in ast.variables]], dtype=np.int64)
        widths = [int(h - l + 1) for l, h in zip(self.low, self.high)]
        space = 1
        for w in widths:
            space *= w
        if space > 2**62:
            raise ModelError("product of variable ranges exceeds 2^62; narrow the variable ranges")
        self.space_size = space
        strides = []
        acc = 1
        for w in reversed(widths):
            strides.append(acc)
            acc *= w
        self.strides = np.array(strides[::-1], dtype=np.int64)

        names = sorted({c.action for c in ast.commands})
        self.command_actions = tuple(names)
        # __sink is always present internally so ids stay stable across layers
        self.actions = tuple(sorted(names + [SINK])) if SINK not in names else tuple(names)
        self.action_id = {a: i for i, a in enumerate(self.actions)}
        bounds = [(int(l), int(h)) for l, h in zip(self.low, self.high)]
        compile_ = lambda e: compile_expr(e, self.index, bounds)  # noqa: E731
        self.commands = []
        for c in ast.commands:
            # an update expression shared by several branches is evaluated once
            exprs, slot = [], {}
            updates = []
            for b in c.branches:
                row = []
                for n, v in b.updates:
                    if v not in slot:
                        slot[v] = len(exprs)
                        exprs.append(compile_(v))
                    row.append((self.index[n], slot[v]))
                updates.append(row)
            self.commands.append(
                _CompiledCommand(
                    action=self.action_id[c.action],
                    guard=compile_(c.guard),
                    probs=[float(b.prob) for b in c.branches],
                    updates=updates,
                    exprs=exprs,
                    line=c.line,
                )
            )
        self.labels = {name: compile_(e) for name, e in ast.labels}
        self.rewards = [
            (None if r.action is None else self.action_id.get(r.action, -1), compile_(r.guard), float(r.value))
            for r in ast.rewards
        ]

    def encode(self, vals: np.ndarray) -> np.ndarray:
        return (vals - self.low) @ self.strides

    def describe(self, row: np.ndarray) -> str:
        return "(" + ",".join(f"{n}={int(v)}" for n, v in zip(self.var_names, row)) + ")"

    def expand(self, vals: np.ndarray) -> Expansion:
        """Compute enabled choices and successor valuations for every row of ``vals``.

        States with no enabled command get a self-loop under the reserved
        ``__sink`` action.
        """
        n = len(vals)
        d = vals.shape[1]
        c_state, c_meta = [], []  # per enabled command: states, (action, command)
        t_vals, t_meta = [], []  # per branch segment: successors, (first choice, size, branch, prob)
        n_choices = 0
        for ci, cmd in enumerate(self.commands):
            mask = cmd.guard(vals)
            idx = np.flatnonzero(mask)
            if idx.size == 0:
                continue
            src = vals[idx]
            c_state.append(idx)
            c_meta.append((cmd.action, ci, idx.size))
            values = {}
            for bi, (p, updates) in enumerate(zip(cmd.probs, cmd.updates)):
                new = src.copy()
                for col, k in updates:
                    if k not in values:
                        v = values[k] = cmd.exprs[k](src)
                        if v.min() < self.low[col] or v.max() > self.high[col]:
                            self._range_error(cmd, bi, col, src, v)
                    new[:, col] = values[k]
                t_vals.append(new)
                t_meta.append((n_choices, idx.size, bi, p))
            n_choices += idx.size

        cs = np.concatenate(c_state) if c_state else np.zeros(0, dtype=np.int64)
        sizes = np.array([m[2] for m in c_meta], dtype=np.int64)
        ca = np.repeat(np.array([m[0] for m in c_meta], dtype=np.int64), sizes)
        cc = np.repeat(np.array([m[1] for m in c_meta], dtype=np.int64), sizes)
        seg_first = np.array([m[0] for m in t_meta], dtype=np.int64)
        seg_size = np.array([m[1] for m in t_meta], dtype=np.int64)
        seg_start = np.concatenate([[0], np.cumsum(seg_size)[:-1]]) if len(t_meta) else seg_size
        tc = np.repeat(seg_first - seg_start, seg_size) + np.arange(int(seg_size.sum()))
        tb = np.repeat(np.array([m[2] for m in t_meta], dtype=np.int64), seg_size)
        tp = np.repeat(np.array([m[3] for m in t_meta], dtype=np.float64), seg_size)
        tv = np.concatenate(t_vals) if t_vals else np.zeros((0, d), dtype=np.int64)
        enabled_any = np.zeros(n, dtype=bool)
        enabled_any[cs] = True
        dead = np.flatnonzero(~enabled_any)
        if dead.size:
            sink = self.action_id[SINK]
            base = len(cs)
            cs = np.concatenate([cs, dead])
            ca = np.concatenate([ca, np.full(dead.size, sink, dtype=np.int64)])
            cc = np.concatenate([cc, np.full(dead.size, len(self.commands), dtype=np.int64)])
            tc = np.concatenate([tc, np.arange(base, base + dead.size)])
            tb = np.concatenate([tb, np.zeros(dead.size, dtype=np.int64)])
            tv = np.concatenate([tv, vals[dead]])
            tp = np.concatenate([tp, np.ones(dead.size)])

        # at most one command per (state, action)
        key = cs * (len(self.actions) + 1) + ca
        if key.size:
            uniq, counts = np.unique(key, return_counts=True)
            if np.any(counts > 1):
                k = int(uniq[np.argmax(counts > 1)])
                s, a = divmod(k, len(self.actions) + 1)
                raise ModelError(
                    f"two commands with action [{self.actions[a]}] are enabled in state {self.describe(vals[s])}"
                )

        # choices sorted by (state, action)
        corder = np.lexsort((ca, cs))
        rank = np.empty_like(corder)
        rank[corder] = np.arange(corder.size)
        cs_sorted, ca_sorted = cs[corder], ca[corder]
        t_new_choice = rank[tc]
        # transitions sorted by (choice, branch); merge duplicate successors within a choice
        torder = np.lexsort((tb, t_new_choice))
        t_choice_sorted = t_new_choice[torder]
        tv_sorted = tv[torder]
        tp_sorted = tp[torder]
        codes = self.encode(tv_sorted) if len(tv_sorted) else np.zeros(0, dtype=np.int64)
        first = np.ones(len(codes), dtype=bool)
        if len(codes):
            # duplicates only matter within one choice; detect via (choice, code) pairs
            pair_order = np.lexsort((np.arange(len(codes)), codes, t_choice_sorted))
            pc, pk = t_choice_sorted[pair_order], codes[pair_order]
            dup = np.zeros(len(codes), dtype=bool)
            dup[1:] = (pc[1:] == pc[:-1]) & (pk[1:] == pk[:-1])
            if dup.any():
                group = np.cumsum(~dup) - 1
                leaders = pair_order[~dup]
                sums = np.zeros(leaders.size)
                np.add.at(sums, group, tp_sorted[pair_order])
                first[pair_order[dup]] = False
                tp_sorted = tp_sorted.copy()
                tp_sorted[leaders] = sums
        keep = np.flatnonzero(first)
        t_choice_final = t_choice_sorted[keep]
        choice_ptr = np.zeros(len(cs_sorted) + 1, dtype=np.int64)
        np.add.at(choice_ptr, t_choice_final + 1, 1)
        choice_ptr = np.cumsum(choice_ptr)
        # discovery order: (state, command, branch) over the kept transitions
        cmd_of = cc[corder][t_choice_final]
        state_of = cs_sorted[t_choice_final]
        branch_of = tb[torder][keep]
        order = np.lexsort((branch_of, cmd_of, state_of))
        return Expansion(cs_sorted, ca_sorted, choice_ptr, tv_sorted[keep], tp_sorted[keep], order)

    def _range_error(self, cmd: _CompiledCommand, bi: int, col: int, src: np.ndarray, v: np.ndarray):
        # report the first branch that assigns the offending expression
        k_bad = next(k for c, k in cmd.updates[bi] if c == col)
        for b, updates in enumerate(cmd.updates):
            if any(k == k_bad for _, k in updates):
                bi = b
                break
        row = int(np.flatnonzero((v < self.low[col]) | (v > self.high[col]))[0])
        raise ModelError(
            f"update drives {self.var_names[col]} to {int(v[row])}, outside "
            f"[{int(self.low[col])}..{int(self.high[col])}], in state {self.describe(src[row])}, "
            f"command [{self.actions[cmd.action]}] (line {cmd.line}), branch {bi + 1}"
        )

    def label_masks(self, vals: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.asarray(fn(vals), dtype=bool) for name, fn in self.labels.items()}

    def choice_rewards(self, vals: np.ndarray, choice_state: np.ndarray, choice_action: np.ndarray) -> np.ndarray:
        out = np.zeros(len(choice_state))
        if not self.rewards or len(choice_state) == 0:
            return out
        for action, guard, value in self.rewards:
            if action is None:
                sel = np.arange(len(choice_state))
            else:
                sel = np.flatnonzero(choice_action == action)
            if sel.size == 0:
                continue
            hit = guard(vals[choice_state[sel]])
            out[sel[hit]] += value
        return out


class StateIndex:
    """Valuation code -> state index map (dense table for small spaces, dict otherwise)."""

    def __init__(self, space_size: int):
        self.dense = space_size <= _DENSE_LOOKUP_LIMIT
        if self.dense:
            self.table = np.full(space_size, -1, dtype=np.int64)
        else:
            self.table = {}

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        if self.dense:
            return self.table[codes]
        get = self.table.get
        return np.fromiter((get(int(c), -1) for c in codes), dtype=np.int64, count=len(codes))

    def add(self, codes: np.ndarray, start: int) -> None:
        if self.dense:
            self.table[codes] = np.arange(start, start + len(codes))
        else:
            for k, c in enumerate(codes.tolist()):
                self.table[c] = start + k


def discover(index: StateIndex, succ_codes: np.ndarray, order: np.ndarray, next_index: int):
    """Assign indices to unseen successors in discovery order.

    Returns the successor index array and the positions (into ``succ_codes``)
    of the first occurrence of each new state, in discovery order.
    """
    ordered = succ_codes[order]
    _, first = np.unique(ordered, return_index=True)
    first = np.sort(first)
    cand = ordered[first]
    known = index.lookup(cand)
    fresh = known < 0
    index.add(cand[fresh], next_index)
    return index.lookup(succ_codes), order[first[fresh]]


# ---------------------------------------------------------------------------
# explicit MDP


@dataclass
class ExplicitMdp:
    """Reachable MDP in compressed sparse form.

    Choice ``c`` of state ``s`` (``state_ptr[s] <= c < state_ptr[s+1]``) has
    action ``choice_action[c]`` and successors ``succ[choice_ptr[c]:choice_ptr[c+1]]``.
    Action ids index the lexicographically sorted ``actions`` table, so the
    per-state choice lists are in lexicographic order of action name.
    """

    var_names: tuple[str, ...]
    low: np.ndarray
    high: np.ndarray
    states: np.ndarray
    actions: tuple[str, ...]
    state_ptr: np.ndarray
    choice_action: np.ndarray
    choice_ptr: np.ndarray
    succ: np.ndarray
    prob: np.ndarray
    choice_reward: np.ndarray
    labels: dict[str, np.ndarray]
    initial: dict[int, float] = field(default_factory=lambda: {0: 1.0})
    _lookup: StateIndex | None = field(default=None, repr=False)
    _strides: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_choices(self) -> int:
        return len(self.choice_action)

    @property
    def n_transitions(self) -> int:
        return len(self.succ)

    @property
    def initial_state(self) -> int:
        return next(iter(self.initial))

    def action_index(self, name: str) -> int:
        return self.actions.index(name)

    def choices(self, s: int) -> range:
        return range(int(self.state_ptr[s]), int(self.state_ptr[s + 1]))

    def distribution(self, s: int, action: int) -> tuple[np.ndarray, np.ndarray]:
        for c in self.choices(s):
            if self.choice_action[c] == action:
                lo, hi = self.choice_ptr[c], self.choice_ptr[c + 1]
                return self.succ[lo:hi], self.prob[lo:hi]
        raise KeyError(f"action {self.actions[action]} not enabled in state {s}")

    def reward(self, s: int, action: int) -> float:
        for c in self.choices(s):
            if self.choice_action[c] == action:
                return float(self.choice_reward[c])
        raise KeyError(f"action {self.actions[action]} not enabled in state {s}")

    def labels_of(self, s: int) -> set[str]:
        return {name for name, mask in self.labels.items() if mask[s]}

    def valuation(self, s: int) -> dict[str, int]:
        return dict(zip(self.var_names, (int(v) for v in self.states[s])))

    def index_of(self, vals: np.ndarray) -> np.ndarray:
        """State indices for a (n, d) valuation array (-1 for unreachable valuations)."""
        vals = np.atleast_2d(np.asarray(vals, dtype=np.int64))
        inside = np.all((vals >= self.low) & (vals <= self.high), axis=1)
        out = np.full(len(vals), -1, dtype=np.int64)
        if inside.any():
            out[inside] = self._lookup.lookup((vals[inside] - self.low) @ self._strides)
        return out

    def export(self, prefix: str | os.PathLike) -> list[str]:
        """Write ``.sta``, ``.tra`` and ``.lab`` files next to ``prefix``."""
        from policymc.io import atomic_write

        prefix = str(prefix)
        sta = ["(" + ",".join(self.var_names) + ")"]
        sta += [f"{i}:(" + ",".join(str(int(v)) for v in row) + ")" for i, row in enumerate(self.states)]
        tra = []
        for s in range(self.n_states):
            for c in self.choices(s):
                name = self.actions[self.choice_action[c]]
                for t in range(self.choice_ptr[c], self.choice_ptr[c + 1]):
                    tra.append(f"{s} {name} {int(self.succ[t])} {self.prob[t]:.17g}")
        lab = [_label_line(i, self.labels, None) for i in range(self.n_states)]
        paths = [prefix + ".sta", prefix + ".tra", prefix + ".lab"]
        for path, lines in zip(paths, (sta, tra, lab)):
            atomic_write(path, "\n".join(lines) + "\n")
        return paths


def _label_line(i: int, labels: dict[str, np.ndarray], extra: str | None) -> str:
    names = [name for name, mask in labels.items() if mask[i]]
    if extra is not None:
        names.append(extra)
    return f"{i}: " + " ".join(names) if names else f"{i}:"


def enabled_actions(mdp: ExplicitMdp, state_index: int) -> list[int]:
    """Enabled action ids of a state, in lexicographic order of action name."""
    lo, hi = mdp.state_ptr[state_index], mdp.state_ptr[state_index + 1]
    return [int(a) for a in mdp.choice_action[lo:hi]]


def build_explicit(ast: ModelAst, cap: int = DEFAULT_STATE_CAP, explorer: ModelExplorer | None = None) -> ExplicitMdp:
    """Enumerate the reachable state space of ``ast`` breadth-first."""
    ex = explorer or ModelExplorer(ast)
    index = StateIndex(ex.space_size)
    frontier = ex.init.copy()
    index.add(ex.encode(frontier), 0)
    n_states = 1
    layers_states = [frontier]
    choice_action, counts, succ_parts, prob_parts, reward_parts = [], [], [], [], []
    state_choice_counts = []
    while len(frontier):
        exp = ex.expand(frontier)
        codes = ex.encode(exp.succ_vals)
        succ_idx, new_pos = discover(index, codes, exp.order, n_states)
        n_states += len(new_pos)
        if n_states > cap:
            raise ModelError(f"state count exceeds the cap of {cap}")
        state_choice_counts.append(np.bincount(exp.choice_state, minlength=len(frontier)))
        choice_action.append(exp.choice_action)
        counts.append(np.diff(exp.choice_ptr))
        succ_parts.append(succ_idx)
        prob_parts.append(exp.prob)
        reward_parts.append(ex.choice_rewards(frontier, exp.choice_state, exp.choice_action))
        frontier = exp.succ_vals[new_pos]
        if len(frontier):
            layers_states.append(frontier)

    states = np.concatenate(layers_states)
    per_state = np.concatenate(state_choice_counts)
    state_ptr = np.concatenate([[0], np.cumsum(per_state)])
    ch_counts = np.concatenate(counts)
    choice_ptr = np.concatenate([[0], np.cumsum(ch_counts)])
    succ_dtype = np.int32 if n_states < 2**31 else np.int64
    labels = ex.label_masks(states)
    actions = ex.actions
    all_actions = np.concatenate(choice_action).astype(np.int32)
    if SINK not in ex.command_actions:
        sink = ex.action_id[SINK]
        if not np.any(all_actions == sink):
            actions = tuple(a for a in actions if a != SINK)
            all_actions = np.where(all_actions > sink, all_actions - 1, all_actions).astype(np.int32)
    mdp = ExplicitMdp(
        var_names=ex.var_names,
        low=ex.low,
        high=ex.high,
        states=states,
        actions=actions,
        state_ptr=state_ptr.astype(np.int64),
        choice_action=all_actions,
        choice_ptr=choice_ptr.astype(np.int64),
        succ=np.concatenate(succ_parts).astype(succ_dtype),
        prob=np.concatenate(prob_parts),
        choice_reward=np.concatenate(reward_parts),
        labels=labels,
        initial={0: 1.0},
        _lookup=index,
        _strides=ex.strides,
    )
    return mdp


def valuation_array(var_names: Sequence[str], valuation: dict[str, int]) -> np.ndarray:
    return np.array([[valuation[n] for n in var_names]], dtype=np.int64)
