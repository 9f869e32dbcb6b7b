"""Scripted verification and explanation experiments on the bridge network.

Each scenario returns a :class:`ScenarioReport` made of named tables.  Reports
hold only deterministic content (probabilities, sizes, rankings); wall-clock
timings are collected separately so that repeated runs give identical files.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from policymc.bridge import BridgeConfig, condition_names, generate_bridge_model
from policymc.config import ScenarioConfig
from policymc.errors import EmptySelectionError
from policymc.induced import (
    InducedDtmc,
    Remap,
    action_distribution,
    build_induced_dtmc,
    conditional_saliency,
    horizon_remap,
    joint_action_count,
    range_filter,
)
from policymc.lang import parse_model, parse_property
from policymc.mdp import ExplicitMdp, ModelExplorer, build_explicit
from policymc.pctl import check_dtmc, check_mdp_extremal
from policymc.policy import PolicyNet

BASELINE_LABELS = ("failed", "any_critical", "any_poor", "budget_empty")

# ---------------------------------------------------------------------------
# reports


@dataclass
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)


@dataclass
class ScenarioReport:
    name: str
    title: str
    tables: list[Table]
    notes: list[str] = field(default_factory=list)

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_text(self) -> str:
        out = [self.title, "=" * len(self.title)]
        out += self.notes
        for t in self.tables:
            out += ["", f"[{t.name}]"]
            cells = [list(t.columns)] + [[_fmt_text(v) for v in row] for row in t.rows]
            widths = [max(len(r[k]) for r in cells) for k in range(len(t.columns))]
            right = [bool(t.rows) and all(_numeric(row[k]) or row[k] is None for row in t.rows)
                     for k in range(len(t.columns))]
            for i, r in enumerate(cells):
                out.append("  ".join(c.rjust(w) if rj else c.ljust(w) for c, w, rj in zip(r, widths, right)).rstrip())
                if i == 0:
                    out.append("  ".join("-" * w for w in widths))
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        buf.write(f"# scenario: {self.name}\n")
        for t in self.tables:
            buf.write(f"# table: {t.name}\n")
            w.writerow(t.columns)
            for row in t.rows:
                w.writerow([_fmt_csv(v) for v in row])
        return buf.getvalue()


def _numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _fmt_text(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}" if v == 0 or 1e-3 <= abs(v) < 1e6 else f"{v:.4e}"
    return str(v)


def _fmt_csv(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_report_csv(text: str) -> tuple[str, list[Table]]:
    """Inverse of :meth:`ScenarioReport.to_csv`: scenario name and typed tables."""
    name = None
    tables: list[Table] = []
    pending = None
    for line in text.splitlines():
        if line.startswith("# scenario: "):
            name = line[len("# scenario: "):]
        elif line.startswith("# table: "):
            pending = line[len("# table: "):]
        else:
            row = next(csv.reader([line]))
            if pending is not None:
                tables.append(Table(pending, tuple(row)))
                pending = None
            else:
                tables[-1].rows.append(tuple(_parse_cell(c) for c in row))
    return name, tables


# ---------------------------------------------------------------------------
# shared context


class ScenarioContext:
    """Model builds and baseline chains shared across scenarios, cached per budget."""

    def __init__(self, bridge: BridgeConfig, net: PolicyNet, settings: ScenarioConfig = ScenarioConfig(),
                 mdps: dict[int, ExplicitMdp] | None = None):
        self.bridge = bridge
        self.net = net
        self.settings = settings
        self._mdps = dict(mdps or {})
        self._explorers: dict[int, ModelExplorer] = {}
        self._dtmcs: dict[tuple, InducedDtmc] = {}
        self.timings: dict[str, float] = {}

    def _budget(self, b_max: int | None) -> int:
        return self.bridge.b_max if b_max is None else b_max

    def explorer(self, b_max: int | None = None) -> ModelExplorer:
        b = self._budget(b_max)
        if b not in self._explorers:
            t0 = time.perf_counter()
            text = generate_bridge_model(self.bridge.with_budget(b))
            self._explorers[b] = ModelExplorer(parse_model(text))
            self.timings[f"parse_model_b{b}"] = time.perf_counter() - t0
        return self._explorers[b]

    def mdp(self, b_max: int | None = None) -> ExplicitMdp:
        b = self._budget(b_max)
        if b not in self._mdps:
            ex = self.explorer(b)
            t0 = time.perf_counter()
            self._mdps[b] = build_explicit(ex.ast, explorer=ex)
            self.timings[f"build_mdp_b{b}"] = time.perf_counter() - t0
        return self._mdps[b]

    def source(self, b_max: int | None = None) -> ExplicitMdp | ModelExplorer:
        """The built MDP when available, else an on-demand explorer (same chains either way)."""
        b = self._budget(b_max)
        return self._mdps[b] if b in self._mdps else self.explorer(b)

    def dtmc(self, key: str = "baseline", b_max: int | None = None, **kwargs) -> InducedDtmc:
        b = self._budget(b_max)
        k = (key, b)
        if k not in self._dtmcs:
            t0 = time.perf_counter()
            self._dtmcs[k] = build_induced_dtmc(self.source(b), self.net, **kwargs)
            self.timings[f"build_dtmc_{key}_b{b}"] = time.perf_counter() - t0
        return self._dtmcs[k]

    def check(self, dtmc: InducedDtmc, label: str, timing_key: str):
        res = check_dtmc(dtmc, parse_property(f'P=? [ F "{label}" ]'))
        self.timings[timing_key] = res.seconds
        return res

    def dn_only(self) -> PolicyNet:
        return PolicyNet.constant(self.net.var_names, self.net.low, self.net.low + self.net.width,
                                  self.net.actions, "a" + "_".join("0" * self.bridge.n_bridges))


def _query(label: str) -> str:
    return f'P=? [ F "{label}" ]'


# ---------------------------------------------------------------------------
# scenarios


def run_baseline(ctx: ScenarioContext) -> ScenarioReport:
    d = ctx.dtmc()
    mdp = ctx.mdp()
    rows = []
    for label in BASELINE_LABELS:
        res = ctx.check(d, label, f"baseline_{label}")
        lo = check_mdp_extremal(mdp, parse_property(_query(label)), "min")
        rows.append((_query(label), res.probability, res.states, res.transitions, lo.probability))
    dn = build_induced_dtmc(mdp, ctx.dn_only())
    dn_rows = [(_query(label), check_dtmc(dn, parse_property(_query(label))).probability, dn.n_states, dn.n_transitions)
               for label in BASELINE_LABELS]
    notes = [
        f"B_max={ctx.bridge.b_max}, T_max={ctx.bridge.t_max}; full MDP: {mdp.n_states} states, "
        f"{mdp.n_transitions} transitions",
        "mdp_min is the minimum over all schedulers of the full MDP.",
    ]
    return ScenarioReport("baseline", "Baseline verification of the trained policy", [
        Table("verification", ("query", "probability", "states", "transitions", "mdp_min"), rows),
        Table("dn_only_reference", ("query", "probability", "states", "transitions"), dn_rows),
    ], notes)


def run_lumping(ctx: ScenarioContext) -> ScenarioReport:
    lump = ctx.settings.lump
    base = ctx.check(ctx.dtmc(), "failed", "lumping_baseline")
    d = build_induced_dtmc(ctx.source(), ctx.net, transforms=[lump])
    res = ctx.check(d, "failed", "lumping_lumped")
    rows = [
        ("baseline", _query("failed"), base.probability, base.states, base.transitions, 0.0),
        (lump.describe(), _query("failed"), res.probability, res.states, res.transitions,
         res.probability - base.probability),
    ]
    return ScenarioReport("lumping", f"Feature lumping on {lump.feature}", [
        Table("lumping", ("configuration", "query", "probability", "states", "transitions", "delta"), rows),
    ], ["The lumped policy is re-verified on the unmodified MDP."])


def run_global_saliency(ctx: ScenarioContext) -> ScenarioReport:
    d = ctx.dtmc()
    ranking = conditional_saliency(d, ctx.net)
    rows = [(k + 1, r.feature, r.mean, r.std) for k, r in enumerate(ranking)]
    return ScenarioReport("global_saliency", "Global feature importance ranking", [
        Table("ranking", ("rank", "feature", "mean_abs_grad", "std_abs_grad"), rows),
    ], [f"Saliency averaged over all {d.n_states} states of the induced chain."])


def run_budget_sweep(ctx: ScenarioContext, b_values=None) -> ScenarioReport:
    b_values = tuple(ctx.settings.budget_values if b_values is None else b_values)
    rows = []
    for b in b_values:
        d = ctx.dtmc(b_max=b)
        res = ctx.check(d, "budget_empty", f"budget_sweep_b{b}")
        rows.append((b, res.probability, res.states, res.transitions))
    return ScenarioReport("budget_sweep", "Budget sensitivity of budget exhaustion", [
        Table("budget_sweep", ("b_max", "probability", "states", "transitions"), rows),
    ], [f"Query: {_query('budget_empty')}; the model is regenerated for each B_max."])


def run_cycle_remap(ctx: ScenarioContext, k_values=None) -> ScenarioReport:
    k_values = tuple(ctx.settings.cycle_values if k_values is None else k_values)
    rows = []
    for k in k_values:
        d = build_induced_dtmc(ctx.source(), ctx.net, transforms=[Remap("cycle_year", value=k)])
        res = ctx.check(d, "budget_empty", f"cycle_remap_k{k}")
        rows.append((k, res.probability, res.states, res.transitions))
    return ScenarioReport("cycle_remap", "Cycle awareness: cycle_year remapped to a fixed value", [
        Table("cycle_remap", ("fixed_cycle_year", "probability", "states", "transitions"), rows),
    ], [f"Query: {_query('budget_empty')}. A flat profile means the policy ignores cycle position."])


def run_horizon_remap(ctx: ScenarioContext) -> ScenarioReport:
    remap = horizon_remap(ctx.bridge.t_max, ctx.bridge.cycle_len)
    base = ctx.check(ctx.dtmc(), "failed", "horizon_baseline")
    d = build_induced_dtmc(ctx.source(), ctx.net, transforms=[remap])
    res = ctx.check(d, "failed", "horizon_remap")
    delta = res.probability - base.probability
    rows = [
        ("baseline", base.probability, base.states, base.transitions, 0.0),
        ("horizon remap", res.probability, res.states, res.transitions, delta),
    ]
    start = ctx.bridge.t_max - ctx.bridge.cycle_len
    direction = "higher" if delta > 0 else "lower" if delta < 0 else "equal"
    return ScenarioReport("horizon_remap", "Horizon gaming: year remapped into the final cycle", [
        Table("horizon_remap", ("configuration", "probability", "states", "transitions", "delta"), rows),
    ], [f"year y is shown to the policy as {start} + (y mod {ctx.bridge.cycle_len}).",
        f"Query: {_query('failed')}; remapped probability is {direction} than baseline."])


def run_worst_bridge(ctx: ScenarioContext) -> ScenarioReport:
    d = ctx.dtmc()
    conds = condition_names(ctx.bridge)
    poor, good = ctx.settings.poor, ctx.settings.good
    top, full = [], []
    for i, c in enumerate(conds):
        bounds = {c2: (good if j != i else poor) for j, c2 in enumerate(conds)}
        try:
            ranking = conditional_saliency(d, ctx.net, range_filter(d.var_names, bounds))
        except EmptySelectionError:
            top.append((f"bridge {i + 1}", 0, "(no states)", "(no states)", "(no states)"))
            continue
        cells = [f"{r.feature} ({r.mean:.3f})" for r in ranking[:3]]
        cells += ["-"] * (3 - len(cells))
        top.append((f"bridge {i + 1}", ranking[0].count, *cells))
        full += [(f"bridge {i + 1}", k + 1, r.feature, r.mean, r.std, r.count) for k, r in enumerate(ranking)]
    return ScenarioReport("worst_bridge", "Conditional saliency when one bridge is in poor condition", [
        Table("top3", ("worst_bridge", "states", "rank_1", "rank_2", "rank_3"), top),
        Table("full_ranking", ("worst_bridge", "rank", "feature", "mean_abs_grad", "std_abs_grad", "states"), full),
    ], [f"Designated bridge condition in [{poor[0]},{poor[1]}], others in [{good[0]},{good[1]}]."])


def run_actions(ctx: ScenarioContext) -> ScenarioReport:
    d = ctx.dtmc()
    dist = action_distribution(d)
    labeling = [(name, count, frac) for name, (count, frac) in dist.items()]
    dn = "a" + "_".join("0" * ctx.bridge.n_bridges)
    dn_count = dist.get(dn, (0, 0.0))[0]
    repl = ctx.settings.replacement
    renamed = repl.renamings(ctx.net.actions)
    n_joint = joint_action_count(ctx.net.actions)
    base = ctx.check(d, "budget_empty", "actions_baseline")
    rd = build_induced_dtmc(ctx.source(), ctx.net, replacement=repl)
    res = ctx.check(rd, "budget_empty", "actions_replaced")
    rows = [
        (f"baseline (no replacement, B_max={ctx.bridge.b_max})", base.probability, base.states, base.transitions),
        (f"replace {repl.describe()} ({len(renamed)} actions)", res.probability, res.states, res.transitions),
    ]
    changed = int(np.sum(rd.action != rd.policy_action))
    notes = [
        f"{len(renamed)} of {n_joint} joint actions remapped",
        f"{dn} is selected in {dn_count} of {d.n_states} states.",
        f"Replacement changed the executed action in {changed} of {rd.n_states} states of the replaced chain.",
    ]
    return ScenarioReport("actions", "Action labeling and action replacement", [
        Table("action_labeling", ("action", "states", "fraction"), labeling),
        Table("action_replacement", ("configuration", "probability", "states", "transitions"), rows),
    ], notes)


SCENARIOS: dict[str, Callable[[ScenarioContext], ScenarioReport]] = {
    "baseline": run_baseline,
    "lumping": run_lumping,
    "global_saliency": run_global_saliency,
    "budget_sweep": run_budget_sweep,
    "cycle_remap": run_cycle_remap,
    "horizon_remap": run_horizon_remap,
    "worst_bridge": run_worst_bridge,
    "actions": run_actions,
}


def run_scenario(name: str, ctx: ScenarioContext) -> ScenarioReport:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)} or 'all'")
    t0 = time.perf_counter()
    report = SCENARIOS[name](ctx)
    ctx.timings[f"scenario_{name}"] = time.perf_counter() - t0
    return report
