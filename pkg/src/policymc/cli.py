"""Command-line entry point: ``policymc <command> ...``.

Exit codes: 0 success, 1 usage or input-file problem, 2 model or policy
error, 3 verification error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import re
import sys
from dataclasses import replace

from policymc import __version__
from policymc.bridge import BridgeConfig, generate_bridge_model
from policymc.config import Config, ConfigError, ScenarioConfig, load_config, parse_lump, parse_remap, parse_replacement
from policymc.errors import ModelError, PolicyError, VerificationError
from policymc.induced import action_distribution, build_induced_dtmc, conditional_saliency, range_filter
from policymc.io import atomic_write, sha256_file, sha256_text
from policymc.lang import parse_model, parse_property
from policymc.mdp import ModelExplorer, build_explicit
from policymc.pctl import check_dtmc, check_mdp_extremal
from policymc.policy import load_checkpoint, save_checkpoint

SEED_ENV = "POLICY_MC_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _config(args) -> Config:
    path = getattr(args, "config", None) or getattr(args, "model_config", None)
    return load_config(path) if path else Config()


def _load_model(path: str):
    return parse_model(_read(path))


def _load_policy(path: str):
    if not os.path.exists(path):
        raise UsageError(f"policy checkpoint {path} does not exist")
    return load_checkpoint(path)


def _transform_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lump", action="append", default=[], metavar="SPEC",
                   help="feature=NAME,bins=LO-HI:REP;... (repeatable)")
    p.add_argument("--remap", action="append", default=[], metavar="SPEC",
                   help="feature=NAME,value=K or feature=NAME,map=SRC:DST,... (repeatable)")
    p.add_argument("--action_replace", "--action-replace", dest="action_replace", metavar="SRC:TGT",
                   help="substitute per-bridge action SRC by TGT in every joint action")


def _transforms(args):
    try:
        out = [parse_lump(t) for t in args.lump] + [parse_remap(t) for t in args.remap]
        repl = parse_replacement(args.action_replace) if args.action_replace else None
    except (ValueError, ConfigError) as exc:
        raise UsageError(str(exc)) from exc
    return out, repl


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = _config(args).bridge
    over = {k: v for k, v in (("b_max", args.b_max), ("t_max", args.t_max), ("cycle_len", args.cycle_len)) if v is not None}
    try:
        cfg = replace(cfg, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = generate_bridge_model(cfg)
    atomic_write(args.model_out, text)
    print(f"wrote {args.model_out} ({text.count(chr(10))} lines, B_max={cfg.b_max}, T_max={cfg.t_max})")
    return 0


def cmd_build(args) -> int:
    mdp = build_explicit(_load_model(args.model), cap=args.cap)
    print(f"states: {mdp.n_states}")
    print(f"choices: {mdp.n_choices}")
    print(f"transitions: {mdp.n_transitions}")
    print(f"actions: {len(mdp.actions)}")
    for name, mask in mdp.labels.items():
        print(f'label "{name}": {int(mask.sum())} states')
    if args.export:
        for path in mdp.export(args.export):
            print(f"wrote {path}")
    return 0


def _seed(args, cfg: Config) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return cfg.train.seed


def cmd_train(args) -> int:
    from policymc.train import train

    cfg = _config(args)
    over = {"seed": _seed(args, cfg)}
    if args.episodes is not None:
        over["episodes"] = args.episodes
    if args.hidden is not None:
        over["hidden"] = tuple(int(x) for x in args.hidden.split(","))
    if args.learning_rate is not None:
        over["learning_rate"] = args.learning_rate
    try:
        tcfg = replace(cfg.train, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    mdp = build_explicit(_load_model(args.model))
    print(f"training on {mdp.n_states} states: {tcfg.episodes} episodes, hidden {list(tcfg.hidden)}, seed {tcfg.seed}")
    net = train(mdp, tcfg)
    save_checkpoint(net, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_verify(args) -> int:
    ast = _load_model(args.model)
    prop, mode = args.prop, args.extremal
    m = re.match(r"\s*P(min|max)(?=\s*[=<>])", prop)
    if m:
        if mode and mode != m.group(1):
            raise UsageError(f"--extremal {mode} contradicts P{m.group(1)} in the property")
        mode, prop = m.group(1), "P" + prop[m.end():]
    try:
        q = parse_property(prop)
    except ModelError as exc:
        raise UsageError(f"bad property: {exc}") from exc
    if mode:
        res = check_mdp_extremal(build_explicit(ast), q, mode)
    else:
        if not args.policy:
            raise UsageError("verify needs --policy (or --extremal min|max for full-MDP checking)")
        for name in q.labels:
            if name not in ast.label_names and name not in ast.action_names:
                raise VerificationError(f"unknown label {name!r} (model labels: {', '.join(ast.label_names)})")
        net = _load_policy(args.policy)
        transforms, repl = _transforms(args)
        source = build_explicit(ast) if args.explicit else ModelExplorer(ast)
        absorb = q.target if args.absorb and q.path == "eventually" else None
        dtmc = build_induced_dtmc(source, net, transforms, repl, absorbing_label=absorb)
        res = check_dtmc(dtmc, q)
        if args.export:
            for path in dtmc.export(args.export):
                print(f"wrote {path}")
    print(res.human())
    if mode:
        print(f"Schedulers: {mode} over all")
    print(res.key_values())
    return 0


def cmd_explain(args) -> int:
    ast = _load_model(args.model)
    net = _load_policy(args.policy)
    transforms, repl = _transforms(args)
    dtmc = build_induced_dtmc(ModelExplorer(ast), net, transforms, repl)
    print(f"induced chain: {dtmc.n_states} states, {dtmc.n_transitions} transitions")
    if args.actions or not args.saliency:
        print("\naction  states  fraction")
        for name, (count, frac) in action_distribution(dtmc).items():
            print(f"{name}  {count}  {frac:.6f}")
    if args.saliency or args.filter:
        bounds = {}
        for item in (args.filter.split(",") if args.filter else []):
            name, sep, rng = item.partition("=")
            lo, _, hi = rng.partition("-")
            if not sep or name not in dtmc.var_names:
                raise UsageError(f"bad filter item {item!r}; expected FEATURE=LO-HI with a model variable")
            bounds[name] = (int(lo), int(hi or lo))
        rows = conditional_saliency(dtmc, net, range_filter(dtmc.var_names, bounds) if bounds else None)
        print(f"\nsaliency over {rows[0].count} states")
        print("rank  feature  mean_abs_grad  std_abs_grad")
        for k, r in enumerate(rows, 1):
            print(f"{k}  {r.feature}  {r.mean:.6g}  {r.std:.6g}")
    return 0


def cmd_scenario(args) -> int:
    from policymc.scenarios import SCENARIOS, ScenarioContext, run_scenario

    if args.action == "list":
        for name in SCENARIOS:
            print(name)
        return 0
    if not args.name:
        raise UsageError("scenario run needs a scenario name or 'all'")
    names = list(SCENARIOS) if args.name == "all" else [args.name]
    for n in names:
        if n not in SCENARIOS:
            raise UsageError(f"unknown scenario {n!r}; choose from {', '.join(SCENARIOS)} or 'all'")
    if not args.policy or not args.out_dir:
        raise UsageError("scenario run needs --policy and --out-dir")
    cfg = _config(args)
    net = _load_policy(args.policy)
    started = _now()
    ctx = ScenarioContext(cfg.bridge, net, cfg.scenarios)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for n in names:
        report = run_scenario(n, ctx)
        for ext, text in (("txt", report.to_text()), ("csv", report.to_csv())):
            path = os.path.join(args.out_dir, f"{n}.{ext}")
            atomic_write(path, text)
            outputs.append({"file": os.path.basename(path), "sha256": sha256_text(text)})
        print(f"{n}: wrote {n}.txt, {n}.csv")
    model_text = generate_bridge_model(cfg.bridge)
    cfg_path = args.model_config
    manifest = {
        "tool": "policymc",
        "version": __version__,
        "command": ["policymc", *args.argv],
        "config_hash": sha256_file(cfg_path) if cfg_path else sha256_text(repr(cfg)),
        "model_hash": sha256_text(model_text),
        "checkpoint_hash": sha256_file(args.policy),
        "seed": net.metadata.get("config", {}).get("seed"),
        "scenarios": names,
        "outputs": outputs,
        "timestamps": {"started": started, "finished": _now()},
        "timings_s": {k: round(v, 6) for k, v in ctx.timings.items()},
    }
    atomic_write(os.path.join(args.out_dir, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {os.path.join(args.out_dir, 'manifest.json')}")
    return 0


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="policymc", description="Verify and explain neural maintenance policies on explicit-state MDPs.")
    p.add_argument("--version", action="version", version=f"policymc {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="emit the bridge-network model")
    g.add_argument("--config", help="INI config with a [bridge] section")
    g.add_argument("--model-out", required=True, help="path of the model file to write")
    g.add_argument("--b-max", type=int, help="budget cap override")
    g.add_argument("--t-max", type=int, help="horizon override")
    g.add_argument("--cycle-len", type=int, help="budget cycle length override")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("build", help="build the explicit MDP and print statistics")
    b.add_argument("--model", required=True)
    b.add_argument("--export", metavar="PREFIX", help="write PREFIX.sta/.tra/.lab")
    b.add_argument("--cap", type=int, default=5_000_000, help="state count limit")
    b.set_defaults(func=cmd_build)

    t = sub.add_parser("train", help="train a policy with PPO")
    t.add_argument("--model", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--config", help="INI config with a [train] section")
    t.add_argument("--episodes", type=int)
    t.add_argument("--seed", type=int, help=f"overrides {SEED_ENV} and the config")
    t.add_argument("--hidden", help="comma-separated hidden widths, e.g. 64,64")
    t.add_argument("--learning-rate", type=float)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="model-check a property on the policy-induced chain")
    v.add_argument("--model", required=True)
    v.add_argument("--policy")
    v.add_argument("--prop", required=True, help='e.g. P=? [ F "failed" ]')
    v.add_argument("--extremal", choices=("min", "max"), help="check the full MDP over all schedulers instead (also implied by Pmin/Pmax)")
    v.add_argument("--explicit", action="store_true", help="build the full MDP first instead of exploring lazily")
    v.add_argument("--absorb", action="store_true", help="do not expand successors of target states")
    v.add_argument("--export", metavar="PREFIX", help="write the induced chain as PREFIX.sta/.tra/.lab")
    _transform_args(v)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("explain", help="saliency and action statistics on the induced chain")
    e.add_argument("--model", required=True)
    e.add_argument("--policy", required=True)
    e.add_argument("--saliency", action="store_true", help="print the saliency ranking")
    e.add_argument("--actions", action="store_true", help="print the action distribution")
    e.add_argument("--filter", help="restrict saliency to FEATURE=LO-HI,... states")
    _transform_args(e)
    e.set_defaults(func=cmd_explain)

    s = sub.add_parser("scenario", help="run scripted experiments")
    s.add_argument("action", choices=("run", "list"))
    s.add_argument("name", nargs="?", help="scenario name or 'all'")
    s.add_argument("--model-config", help="INI config ([bridge], [scenarios])")
    s.add_argument("--policy")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return 1
        args.argv = argv
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ModelError, PolicyError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 2
    except VerificationError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {getattr(exc, 'filename', '') or ''}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
