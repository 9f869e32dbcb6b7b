"""Reachability model checking on induced DTMCs and extremal reachability on MDPs.

DTMC queries use the usual qualitative precomputation (prob-0 / prob-1
states by graph search) followed by a sparse direct solve of the remaining
linear system; bounded queries are plain matrix-vector iteration.  MDP
queries use value iteration with graph-based precomputation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import spsolve

from policymc.errors import VerificationError
from policymc.lang import PctlQuery, format_property

DIRECT_SOLVE_LIMIT = 50_000
ITERATIVE_TOLERANCE = 1e-10
VI_TOLERANCE = 1e-10
ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CheckResult:
    query: str
    probability: float
    satisfied: bool | None
    states: int
    transitions: int
    seconds: float

    def human(self) -> str:
        lines = [f"Property: {self.query}", f"Result: {self.probability!r}"]
        if self.satisfied is not None:
            lines.append(f"Satisfied: {'yes' if self.satisfied else 'no'}")
        lines.append(f"States: {self.states}  Transitions: {self.transitions}  Time: {self.seconds:.3f}s")
        return "\n".join(lines)

    def key_values(self) -> str:
        sat = "" if self.satisfied is None else str(self.satisfied).lower()
        return (f"probability={self.probability!r} satisfied={sat} states={self.states} "
                f"transitions={self.transitions} time={self.seconds:.6f}")


def _compare(p: float, comparator: str, bound: float) -> bool:
    return {"<": p < bound, "<=": p <= bound, ">": p > bound, ">=": p >= bound}[comparator]


def backward_reachable(pred: sp.csr_matrix, sources: np.ndarray) -> np.ndarray:
    """States from which some state in ``sources`` is reachable.

    ``pred`` is the reversed adjacency (row i lists predecessors of i).
    """
    n = pred.shape[0]
    reached = np.zeros(n, dtype=bool)
    src = np.flatnonzero(sources)
    if src.size == 0:
        return reached
    # super-source n points at every source
    extra = sp.csr_matrix((np.ones(src.size), (np.full(src.size, 0), src)), shape=(1, n))
    g = sp.vstack([sp.hstack([pred, sp.csr_matrix((n, 1))]), sp.hstack([extra, sp.csr_matrix((1, 1))])]).tocsr()
    order = breadth_first_order(g, n, directed=True, return_predecessors=False)
    reached[order[order < n]] = True
    return reached


def _transition_matrix(dtmc) -> sp.csr_matrix:
    n = dtmc.n_states
    return sp.csr_matrix((dtmc.prob, dtmc.succ, dtmc.ptr), shape=(n, n))


def _check_stochastic(dtmc) -> None:
    sums = np.add.reduceat(dtmc.prob, dtmc.ptr[:-1]) if dtmc.n_transitions else np.zeros(0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
    if bad.size or np.any(np.diff(dtmc.ptr) == 0):
        row = int(bad[0]) if bad.size else int(np.flatnonzero(np.diff(dtmc.ptr) == 0)[0])
        raise VerificationError(f"row {row} of the chain is not stochastic")


def _restrict(P: sp.csr_matrix, absorbing: np.ndarray) -> sp.csr_matrix:
    """Drop outgoing edges of ``absorbing`` states (graph analysis only)."""
    keep = sp.diags((~absorbing).astype(np.float64))
    return (keep @ P).tocsr()


def reach_probabilities(P: sp.csr_matrix, target: np.ndarray, avoid: np.ndarray | None = None,
                        direct_limit: int = DIRECT_SOLVE_LIMIT) -> np.ndarray:
    """Probability of reaching ``target`` from every state without visiting ``avoid`` first."""
    n = P.shape[0]
    avoid = np.zeros(n, dtype=bool) if avoid is None else avoid & ~target
    G = _restrict(P, target | avoid)
    G.eliminate_zeros()
    pred = G.T.tocsr()
    can_reach = backward_reachable(pred, target)
    s0 = ~can_reach
    s1 = ~backward_reachable(pred, s0)
    maybe = ~(s0 | s1)
    x = np.zeros(n)
    x[s1] = 1.0
    idx = np.flatnonzero(maybe)
    if idx.size == 0:
        return x
    A = P[idx][:, idx]
    b = np.asarray(P[idx][:, np.flatnonzero(s1)].sum(axis=1)).ravel()
    if idx.size <= direct_limit:
        M = (sp.identity(idx.size, format="csc") - A.tocsc())
        sol = spsolve(M, b)
        sol = np.atleast_1d(sol)
    else:
        sol = _iterate(A.tocsr(), b)
    x[idx] = np.clip(sol, 0.0, 1.0)
    return x


def _iterate(A: sp.csr_matrix, b: np.ndarray, max_iter: int = 10_000_000) -> np.ndarray:
    x = np.zeros_like(b)
    for _ in range(max_iter):
        nxt = A @ x + b
        if np.max(np.abs(nxt - x), initial=0.0) <= ITERATIVE_TOLERANCE:
            return nxt
        x = nxt
    raise VerificationError("iterative solver did not converge")


def bounded_reach_probabilities(P: sp.csr_matrix, target: np.ndarray, steps: int,
                                avoid: np.ndarray | None = None) -> np.ndarray:
    """Probability of reaching ``target`` within ``steps`` transitions (target made absorbing)."""
    x = target.astype(np.float64)
    hold = target if avoid is None else target | avoid
    for _ in range(steps):
        nxt = np.where(hold, x, P @ x)
        if np.array_equal(nxt, x):
            # exact fixpoint: all further iterations are identical
            break
        x = nxt
    return x


def _masks(model, q: PctlQuery) -> tuple[np.ndarray, np.ndarray | None]:
    for name in q.labels:
        if not model.has_label(name):
            raise VerificationError(f"unknown label {name!r}")
    target = model.label_mask(q.target)
    avoid = None
    if q.path == "until":
        avoid = ~model.label_mask(q.constraint) & ~target
    return target, avoid


def _result(q: PctlQuery, p: float, states: int, transitions: int, t0: float) -> CheckResult:
    p = float(min(max(p, 0.0), 1.0))
    sat = None if q.comparator is None else _compare(p, q.comparator, q.bound)
    return CheckResult(format_property(q), p, sat, states, transitions, time.perf_counter() - t0)


def check_dtmc(dtmc, q: PctlQuery) -> CheckResult:
    """Exact probability of ``q``'s path formula from the chain's initial state."""
    t0 = time.perf_counter()
    target, avoid = _masks(dtmc, q)
    _check_stochastic(dtmc)
    P = _transition_matrix(dtmc)
    if q.path == "bounded_eventually":
        x = bounded_reach_probabilities(P, target, q.steps, avoid)
    else:
        x = reach_probabilities(P, target, avoid)
    p = float(x[dtmc.initial])
    return _result(q, p, dtmc.n_states, dtmc.n_transitions, t0)


# ---------------------------------------------------------------------------
# MDPs


def _choice_matrix(mdp) -> sp.csr_matrix:
    return sp.csr_matrix((mdp.prob, mdp.succ, mdp.choice_ptr), shape=(mdp.n_choices, mdp.n_states))


def _state_any(mdp, choice_flags: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(choice_flags.astype(np.int8), mdp.state_ptr[:-1]).astype(bool)


def _state_all(mdp, choice_flags: np.ndarray) -> np.ndarray:
    return np.minimum.reduceat(choice_flags.astype(np.int8), mdp.state_ptr[:-1]).astype(bool)


def _prob0_max(mdp, C: sp.csr_matrix, target: np.ndarray) -> np.ndarray:
    """States with max probability 0: target unreachable under every scheduler."""
    reached = target.copy()
    Cb = C.astype(bool).astype(np.int8)
    while True:
        hit = (Cb @ reached.astype(np.int8)) > 0
        nxt = reached | _state_any(mdp, hit)
        if np.array_equal(nxt, reached):
            return ~reached
        reached = nxt


def _prob0_min(mdp, C: sp.csr_matrix, target: np.ndarray) -> np.ndarray:
    """States with min probability 0: some scheduler avoids the target surely."""
    forced = target.copy()
    Cb = C.astype(bool).astype(np.int8)
    while True:
        hit = (Cb @ forced.astype(np.int8)) > 0
        nxt = forced | _state_all(mdp, hit)
        if np.array_equal(nxt, forced):
            return ~forced
        forced = nxt


def _prob1_max(mdp, C: sp.csr_matrix, target: np.ndarray) -> np.ndarray:
    """States with max probability 1 (nested fixpoint)."""
    Cb = C.astype(bool).astype(np.int8)
    u = np.ones(mdp.n_states, dtype=bool)
    while True:
        stay = (Cb @ (~u).astype(np.int8)) == 0
        r = target.copy()
        while True:
            ok = stay & ((Cb @ r.astype(np.int8)) > 0)
            nxt = target | _state_any(mdp, ok)
            if np.array_equal(nxt, r):
                break
            r = nxt
        if np.array_equal(r, u):
            return u
        u = r


def check_mdp_extremal(mdp, q: PctlQuery, mode: str = "max") -> CheckResult:
    """Min or max reachability probability over all schedulers of the full MDP."""
    t0 = time.perf_counter()
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    if q.path not in ("eventually", "bounded_eventually"):
        raise VerificationError(f"unsupported path operator for MDP checking: {q.path}")
    for name in q.labels:
        if name not in mdp.labels:
            raise VerificationError(f"unknown label {name!r}")
    target = mdp.labels[q.target]
    C = _choice_matrix(mdp)
    reduce = np.maximum.reduceat if mode == "max" else np.minimum.reduceat
    starts = mdp.state_ptr[:-1]
    if q.path == "bounded_eventually":
        x = target.astype(np.float64)
        for _ in range(q.steps):
            x = np.where(target, 1.0, reduce(C @ x, starts))
    else:
        zero = _prob0_max(mdp, C, target) if mode == "max" else _prob0_min(mdp, C, target)
        one = _prob1_max(mdp, C, target) if mode == "max" else target
        x = np.zeros(mdp.n_states)
        x[one] = 1.0
        unknown = ~(zero | one)
        while True:
            nxt = np.where(unknown, reduce(C @ x, starts), x)
            delta = np.max(np.abs(nxt - x), initial=0.0)
            x = nxt
            if delta <= VI_TOLERANCE:
                break
    p = sum(w * float(x[s]) for s, w in mdp.initial.items())
    return _result(q, p, mdp.n_states, mdp.n_transitions, t0)
