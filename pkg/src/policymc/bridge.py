"""Generator for the multi-bridge maintenance MDP.

Bridges carry an NBI condition rating 0..9 (0 = failed, absorbing).  Each
year a joint action picks Do Nothing / Minor / Major / Replacement per
bridge; Do Nothing lets the bridge deteriorate by at most one level, the
maintenance actions improve it deterministically.  A shared budget is
reloaded to ``b_max`` in the last year of every cycle, before that year's
cost is deducted.

The default deterioration numbers are synthetic placeholders, chosen only so
that stay probabilities fall with condition severity.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from fractions import Fraction

from policymc.lang import format_value

ACTION_CODES = ("DN", "MN", "MJ", "RP")
MAX_CONDITION = 9

# stay probability under DN for conditions 1..9
DEFAULT_STAY = tuple(Fraction(x) for x in ("0.50", "0.60", "0.70", "0.80", "0.85", "0.88", "0.90", "0.94", "0.96"))


@dataclass(frozen=True)
class BridgeConfig:
    n_bridges: int = 3
    b_max: int = 10
    t_max: int = 20
    cycle_len: int = 4
    costs: tuple[int, int, int, int] = (0, 1, 2, 4)
    stay_prob: tuple[Fraction, ...] = DEFAULT_STAY
    drop_multipliers: tuple[Fraction, ...] = (Fraction(1), Fraction("1.1"), Fraction("1.2"))
    minor_gain: int = 1
    major_gain: int = 3
    replace_to: int = MAX_CONDITION
    init_conditions: tuple[int, ...] = (7, 8, 9)

    def __post_init__(self):
        object.__setattr__(self, "stay_prob", tuple(Fraction(p) for p in self.stay_prob))
        object.__setattr__(self, "drop_multipliers", tuple(Fraction(m) for m in self.drop_multipliers))
        object.__setattr__(self, "costs", tuple(int(c) for c in self.costs))
        object.__setattr__(self, "init_conditions", tuple(int(c) for c in self.init_conditions))
        self.validate()

    def validate(self) -> None:
        if self.n_bridges < 1:
            raise ValueError("n_bridges must be at least 1")
        if self.b_max < 0 or self.t_max < 1 or self.cycle_len < 1:
            raise ValueError("b_max must be >= 0, t_max and cycle_len >= 1")
        if len(self.costs) != 4 or any(c < 0 for c in self.costs) or self.costs[0] != 0:
            raise ValueError("costs must be four nonnegative values with cost(DN) = 0")
        if len(self.stay_prob) != MAX_CONDITION or any(not 0 < p <= 1 for p in self.stay_prob):
            raise ValueError("stay_prob needs 9 values in (0,1] for conditions 1..9")
        if len(self.drop_multipliers) != self.n_bridges or any(m < 0 for m in self.drop_multipliers):
            raise ValueError("drop_multipliers needs one nonnegative value per bridge")
        if not self.init_conditions or any(not 1 <= c <= MAX_CONDITION for c in self.init_conditions):
            raise ValueError("init_conditions must be nonempty and within 1..9")
        if len(set(self.init_conditions)) != len(self.init_conditions):
            raise ValueError("init_conditions must be distinct")
        if self.minor_gain < 0 or self.major_gain < 0 or not 0 <= self.replace_to <= MAX_CONDITION:
            raise ValueError("maintenance effects out of range")

    @property
    def c_max(self) -> int:
        return self.n_bridges * self.costs[3]

    def with_budget(self, b_max: int) -> "BridgeConfig":
        return replace(self, b_max=b_max)

    def drop_prob(self, bridge: int, condition: int) -> Fraction:
        """Probability that ``bridge`` (0-based) drops one level from ``condition`` under DN."""
        base = 1 - self.stay_prob[condition - 1]
        return min(Fraction(1), base * self.drop_multipliers[bridge])

    def joint_actions(self) -> list[tuple[int, ...]]:
        return list(itertools.product(range(4), repeat=self.n_bridges))


def action_name(a) -> str:
    return "a" + "_".join(str(k) for k in a)


def parse_action_name(name: str) -> tuple[int, ...] | None:
    if not name.startswith("a"):
        return None
    parts = name[1:].split("_")
    if not all(p.isdigit() for p in parts):
        return None
    return tuple(int(p) for p in parts)


def joint_action_cost(a, cfg: BridgeConfig = BridgeConfig()) -> int:
    """Total budget units of a joint action given as index tuple or ``a{k1}_{k2}_...`` name."""
    if isinstance(a, str):
        parsed = parse_action_name(a)
        if parsed is None:
            raise ValueError(f"not a joint action name: {a!r}")
        a = parsed
    return sum(cfg.costs[k] for k in a)


def condition_names(cfg: BridgeConfig) -> list[str]:
    return [f"cond_b{i + 1}" for i in range(cfg.n_bridges)]


def _maintained(cfg: BridgeConfig, var: str, k: int) -> str:
    if k == 1:
        return f"({var}'=min({MAX_CONDITION}, {var}+{cfg.minor_gain}))"
    if k == 2:
        return f"({var}'=min({MAX_CONDITION}, {var}+{cfg.major_gain}))"
    return f"({var}'={cfg.replace_to})"


def generate_bridge_model(cfg: BridgeConfig = BridgeConfig()) -> str:
    """Emit the network model as guarded-command source text.

    Probabilities of DN bridges depend on their current condition, so every
    joint action gets one command per combination of DN-bridge conditions.
    """
    conds = condition_names(cfg)
    n = cfg.n_bridges
    last = cfg.cycle_len - 1
    alive = " & ".join(f"{c}>0" for c in conds)
    failed = " | ".join(f"{c}=0" for c in conds)
    lines = [
        f"// {n}-bridge maintenance network, B_max={cfg.b_max}, T_max={cfg.t_max}, cycle={cfg.cycle_len}",
        "mdp",
        "",
        f"const int B_MAX = {cfg.b_max};",
        f"const int T_MAX = {cfg.t_max};",
        f"const int CYCLE = {cfg.cycle_len};",
        "",
        "module network",
    ]
    for c in conds:
        lines.append(f"  {c} : [0..{MAX_CONDITION}] init {max(cfg.init_conditions)};")
    lines += [
        "  budget : [0..B_MAX] init B_MAX;",
        "  cycle_year : [0..CYCLE-1] init 0;",
        "  year : [0..T_MAX] init 0;",
        "  init_done : [0..1] init 0;",
        "",
    ]
    combos = list(itertools.product(cfg.init_conditions, repeat=n))
    p_init = format_value(Fraction(1, len(combos)))
    init_branches = []
    for combo in combos:
        upd = "&".join(f"({c}'={v})" for c, v in zip(conds, combo))
        init_branches.append(f"{p_init}:{upd}&(init_done'=1)")
    lines.append("  // uniform initial conditions")
    lines.append("  [init] init_done=0 -> " + " + ".join(init_branches) + ";")
    lines.append("")
    # reload indicator: max(0, cycle_year-(CYCLE-2)) is 1 exactly when cycle_year = CYCLE-1
    reload = f"max(0, cycle_year-{last - 1})"
    clock = f"(cycle_year'=mod(cycle_year+1, CYCLE))&(year'=year+1)"
    for a in cfg.joint_actions():
        cost = joint_action_cost(a, cfg)
        name = action_name(a)
        budget_upd = f"(budget'=budget+{reload}*(B_MAX-budget)-{cost})" if cost else f"(budget'=budget+{reload}*(B_MAX-budget))"
        dn = [i for i, k in enumerate(a) if k == 0]
        lines.append(f"  // {name}: " + ", ".join(ACTION_CODES[k] for k in a) + f", cost {cost}")
        for dn_conds in itertools.product(range(1, MAX_CONDITION + 1), repeat=len(dn)):
            guard = ["init_done=1", "year<T_MAX"]
            fixed = dict(zip(dn, dn_conds))
            for i, c in enumerate(conds):
                guard.append(f"{c}={fixed[i]}" if i in fixed else f"{c}>0")
            if cost:
                guard.append(f"budget>={cost}")
            maint = [_maintained(cfg, conds[i], k) for i, k in enumerate(a) if k != 0]
            outcomes = []
            for i in dn:
                drop = cfg.drop_prob(i, fixed[i])
                opts = []
                if drop < 1:
                    opts.append((1 - drop, fixed[i]))
                if drop > 0:
                    opts.append((drop, fixed[i] - 1))
                outcomes.append([(p, f"({conds[i]}'={v})") for p, v in opts])
            branches = []
            for pick in itertools.product(*outcomes):
                p = Fraction(1)
                for q, _ in pick:
                    p *= q
                upd = [u for _, u in pick] + maint + [budget_upd, clock]
                branches.append((p, "&".join(upd)))
            if len(branches) == 1:
                rhs = branches[0][1]
            else:
                rhs = " + ".join(f"{format_value(p)}:{u}" for p, u in branches)
            lines.append(f"  [{name}] {' & '.join(guard)} -> {rhs};")
    lines.append("")
    lines.append("  // failed or horizon expired: absorbing")
    lines.append(f"  [done] init_done=1 & (year=T_MAX | {failed}) -> true;")
    lines.append("endmodule")
    lines.append("")
    any_le = lambda k: " | ".join(f"{c}<={k}" for c in conds)  # noqa: E731
    lines += [
        f'label "failed" = {failed};',
        f'label "any_serious" = {any_le(3)};',
        f'label "any_critical" = {any_le(2)};',
        f'label "any_poor" = {any_le(4)};',
        f'label "all_good" = ' + " & ".join(f"{c}>=7" for c in conds) + ";",
        'label "budget_empty" = budget=0;',
        'label "cycle_end" = cycle_year=CYCLE-1;',
        "",
        'rewards "survival"',
    ]
    for a in cfg.joint_actions():
        r = 1 - Fraction(joint_action_cost(a, cfg), cfg.c_max)
        lines.append(f"  [{action_name(a)}] init_done=1 & year<T_MAX & {alive} : {format_value(r)};")
    lines.append("endrewards")
    return "\n".join(lines) + "\n"
