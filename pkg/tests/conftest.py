"""Session fixtures. The default bridge model and the desk-scale trained
checkpoint are expensive, so they are built once and shared."""
from __future__ import annotations

from pathlib import Path

import pytest

from policymc.bridge import BridgeConfig, generate_bridge_model
from policymc.induced import build_induced_dtmc
from policymc.lang import parse_model
from policymc.mdp import ModelExplorer, build_explicit
from policymc.policy import PolicyNet, save_checkpoint
from policymc.scenarios import ScenarioContext
from policymc.train import TrainConfig, train

DATA = Path(__file__).parent / "data"

# desk-scale training run used throughout the suite
DESK_TRAIN = TrainConfig(episodes=10_000, hidden=(64, 64), seed=42)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: builds the full bridge-network model")
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """``verdict(n, title, ok, detail)``: print one PASS/FAIL line, keep it for the summary, assert."""

    def record(n: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        print(line)
        request.config._acceptance_lines.append(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def toy_text() -> str:
    return (DATA / "toy.pm").read_text()


@pytest.fixture(scope="session")
def toy_mdp(toy_text):
    return build_explicit(parse_model(toy_text))


@pytest.fixture(scope="session")
def bridge_cfg() -> BridgeConfig:
    return BridgeConfig()


@pytest.fixture(scope="session")
def bridge_text(bridge_cfg) -> str:
    return generate_bridge_model(bridge_cfg)


@pytest.fixture(scope="session")
def bridge_ast(bridge_text):
    return parse_model(bridge_text)


@pytest.fixture(scope="session")
def bridge_explorer(bridge_ast):
    return ModelExplorer(bridge_ast)


@pytest.fixture(scope="session")
def bridge_mdp(bridge_ast, bridge_explorer):
    return build_explicit(bridge_ast, explorer=bridge_explorer)


@pytest.fixture(scope="session")
def trained_net(bridge_mdp) -> PolicyNet:
    return train(bridge_mdp, DESK_TRAIN)


@pytest.fixture(scope="session")
def dn_net(bridge_mdp) -> PolicyNet:
    return PolicyNet.constant(bridge_mdp.var_names, bridge_mdp.low, bridge_mdp.high, bridge_mdp.actions, "a0_0_0")


@pytest.fixture(scope="session")
def trained_dtmc(bridge_mdp, trained_net):
    return build_induced_dtmc(bridge_mdp, trained_net)


@pytest.fixture(scope="session")
def dn_dtmc(bridge_mdp, dn_net):
    return build_induced_dtmc(bridge_mdp, dn_net)


@pytest.fixture(scope="session")
def scenario_ctx(bridge_cfg, trained_net, bridge_mdp):
    return ScenarioContext(bridge_cfg, trained_net, mdps={bridge_cfg.b_max: bridge_mdp})


@pytest.fixture(scope="session")
def trained_ckpt(tmp_path_factory, trained_net) -> Path:
    path = tmp_path_factory.mktemp("ckpt") / "desk.ckpt"
    save_checkpoint(trained_net, path)
    return path


# a small network that builds in well under a second
SMALL_BRIDGE = BridgeConfig(n_bridges=2, b_max=4, t_max=6, cycle_len=2, drop_multipliers=(1, "1.1"),
                            init_conditions=(2, 3))


@pytest.fixture(scope="session")
def small_mdp():
    return build_explicit(parse_model(generate_bridge_model(SMALL_BRIDGE)))
