import json
import os

import pytest

from policymc.cli import SEED_ENV, main
from policymc.lang import parse_model
from policymc.mdp import build_explicit
from policymc.policy import PolicyNet, load_checkpoint, save_checkpoint

SMALL_INI = """
[bridge]
n_bridges = 2
b_max = 4
t_max = 6
cycle_len = 2
drop_multipliers = 1, 1.1
init_conditions = 2, 3

[train]
episodes = 64
hidden = 8
seed = 11

[scenarios]
budget_values = 3, 4
cycle_values = 0, 1
lump = feature=cond_b1,bins=0-1:1;2-9:5
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    assert "Traceback" not in out + err
    return code, out, err


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    """Config, generated model and a trained checkpoint for the two-bridge network."""
    d = tmp_path_factory.mktemp("cli")
    ini = d / "small.ini"
    ini.write_text(SMALL_INI)
    assert main(["generate", "--config", str(ini), "--model-out", str(d / "small.pm")]) == 0
    assert main(["train", "--model", str(d / "small.pm"), "--config", str(ini), "--out", str(d / "small.ckpt")]) == 0
    return d


@pytest.fixture
def a0_ckpt(tmp_path, toy_text):
    m = build_explicit(parse_model(toy_text))
    p = tmp_path / "a0.ckpt"
    save_checkpoint(PolicyNet.constant(m.var_names, m.low, m.high, m.actions, "a0"), p)
    return p


TOY = os.path.join(os.path.dirname(__file__), "data", "toy.pm")


def test_help_and_usage(capsys):
    assert run(capsys, "--help")[0] == 0
    code, out, _ = run(capsys, "verify", "--help")
    assert code == 0 and "--action_replace" in out
    assert run(capsys)[0] == 1
    code, _, err = run(capsys, "verify", "--model", TOY, "--prop", 'P=? [ F "goal" ]', "--bogus")
    assert code == 1 and "--bogus" in err


def test_verify_happy_path(capsys, a0_ckpt):
    code, out, _ = run(capsys, "verify", "--model", TOY, "--policy", a0_ckpt, "--prop", 'P=? [ F "goal" ]')
    assert code == 0
    assert "Result: 0.86" in out and "probability=0.86 satisfied= states=4 transitions=6" in out


def test_verify_unknown_label_exits_3(capsys, a0_ckpt):
    code, _, err = run(capsys, "verify", "--model", TOY, "--policy", a0_ckpt, "--prop", 'P=? [ F "nonexistent" ]')
    assert code == 3 and "nonexistent" in err


def test_verify_extremal(capsys):
    code, out, _ = run(capsys, "verify", "--model", TOY, "--prop", 'Pmin=? [ F "goal" ]')
    assert code == 0 and "probability=0.32" in out
    code, out, _ = run(capsys, "verify", "--model", TOY, "--prop", 'P=? [ F "goal" ]', "--extremal", "max")
    assert code == 0 and "Result: 0.8599999999999999" in out
    assert run(capsys, "verify", "--model", TOY, "--prop", 'Pmin=? [ F "goal" ]', "--extremal", "max")[0] == 1


@pytest.mark.parametrize("extra, code", [
    (["--prop", "nonsense"], 1),
    (["--prop", 'P=? [ F "goal" ]', "--lump", "feature=s"], 1),
    (["--prop", 'P=? [ F "goal" ]', "--remap", "feature=zz,value=0"], 1),
    (["--prop", 'P=? [ F "goal" ]', "--policy", "/nonexistent.ckpt"], 1),
])
def test_verify_usage_errors(capsys, a0_ckpt, extra, code):
    argv = ["verify", "--model", TOY]
    if "--policy" not in extra:
        argv += ["--policy", a0_ckpt]
    assert run(capsys, *argv, *extra)[0] == code


def test_model_and_checkpoint_errors_exit_2(capsys, tmp_path, a0_ckpt):
    bad = tmp_path / "bad.pm"
    bad.write_text("mdp\nmodule m\n x : [0..1] init 0;\n [a] x=0 -> (x'=7);\nendmodule\n")
    code, _, err = run(capsys, "build", "--model", bad)
    assert code == 2 and "outside [0..1]" in err
    corrupt = tmp_path / "c.ckpt"
    corrupt.write_text("{}")
    assert run(capsys, "verify", "--model", TOY, "--policy", corrupt, "--prop", 'P=? [ F "goal" ]')[0] == 2
    assert run(capsys, "build", "--model", tmp_path / "missing.pm")[0] == 1


def test_build_and_export(capsys, tmp_path):
    code, out, _ = run(capsys, "build", "--model", TOY, "--export", tmp_path / "l1")
    assert code == 0 and "states: 4" in out and "transitions: 8" in out
    assert sorted(os.listdir(tmp_path)) == ["l1.lab", "l1.sta", "l1.tra"]


def test_generate_overrides(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--model-out", tmp_path / "b.pm", "--b-max", 7, "--t-max", 8)
    assert code == 0 and "B_max=7, T_max=8" in out
    assert "const int B_MAX = 7;" in (tmp_path / "b.pm").read_text()
    assert run(capsys, "generate", "--model-out", tmp_path / "x.pm", "--t-max", 0)[0] == 1


def test_seed_precedence(capsys, tmp_path, monkeypatch, small):
    ini, model = small / "small.ini", small / "small.pm"

    def seed_of(*extra):
        out = tmp_path / "s.ckpt"
        assert main(["train", "--model", str(model), "--config", str(ini), "--episodes", "8",
                     "--out", str(out), *extra]) == 0
        capsys.readouterr()
        return load_checkpoint(out).metadata["config"]["seed"]

    monkeypatch.delenv(SEED_ENV, raising=False)
    assert seed_of() == 11
    monkeypatch.setenv(SEED_ENV, "5")
    assert seed_of() == 5
    assert seed_of("--seed", "3") == 3
    monkeypatch.setenv(SEED_ENV, "x")
    assert run(capsys, "train", "--model", model, "--out", tmp_path / "y.ckpt")[0] == 1


def test_verify_with_transforms_on_bridge_model(capsys, small):
    code, out, _ = run(capsys, "verify", "--model", small / "small.pm", "--policy", small / "small.ckpt",
                       "--prop", 'P=? [ F "failed" ]', "--lump", "feature=cond_b1,bins=0-1:1;2-9:5",
                       "--remap", "feature=cycle_year,value=0", "--action_replace=1:2", "--absorb")
    assert code == 0 and "probability=" in out


def test_explain(capsys, small):
    code, out, _ = run(capsys, "explain", "--model", small / "small.pm", "--policy", small / "small.ckpt",
                       "--saliency", "--actions", "--filter", "cond_b1=0-3")
    assert code == 0 and "saliency over" in out and "action  states  fraction" in out
    code, _, err = run(capsys, "explain", "--model", small / "small.pm", "--policy", small / "small.ckpt",
                       "--filter", "cond_b1=9-9,cond_b2=0-0")
    assert code == 3 and "no states" in err
    assert run(capsys, "explain", "--model", small / "small.pm", "--policy", small / "small.ckpt",
               "--filter", "nope=1-2")[0] == 1


def test_scenario_run_writes_reports_and_manifest(capsys, small, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code, _, _ = run(capsys, "scenario", "run", "all", "--model-config", small / "small.ini",
                         "--policy", small / "small.ckpt", "--out-dir", out)
        assert code == 0
        outs.append(out)
    files = sorted(os.listdir(outs[0]))
    assert len([f for f in files if f.endswith(".txt")]) == 8
    assert len([f for f in files if f.endswith(".csv")]) == 8
    assert files.count("manifest.json") == 1 and len(files) == 17
    for f in files:
        if f != "manifest.json":
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    m0, m1 = (json.loads((o / "manifest.json").read_text()) for o in outs)
    for m in (m0, m1):
        del m["timestamps"], m["timings_s"], m["command"]
    assert m0 == m1
    assert m0["seed"] == 11 and len(m0["checkpoint_hash"]) == 64 and len(m0["outputs"]) == 16


def test_scenario_errors(capsys, small, tmp_path):
    assert run(capsys, "scenario", "run", "nope", "--policy", small / "small.ckpt", "--out-dir", tmp_path)[0] == 1
    assert run(capsys, "scenario", "run", "baseline", "--out-dir", tmp_path)[0] == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[bridge]\nwhat = 1\n")
    code, _, err = run(capsys, "scenario", "run", "baseline", "--model-config", bad, "--policy", small / "small.ckpt",
                       "--out-dir", tmp_path / "o")
    assert code == 1 and "unknown key" in err
    code, out, _ = run(capsys, "scenario", "list")
    assert code == 0 and out.split() == ["baseline", "lumping", "global_saliency", "budget_sweep", "cycle_remap",
                                         "horizon_remap", "worst_bridge", "actions"]


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "policymc", "scenario", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "baseline" in res.stdout
