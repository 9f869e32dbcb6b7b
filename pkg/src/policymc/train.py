"""Clipped-surrogate policy optimization (PPO) against an explicit MDP.

The explicit MDP is the simulator: successors are sampled from its stored
distributions.  The actor samples from a softmax over the global action
set; infeasible samples execute the lexicographically first enabled action,
the same fallback used at evaluation.  Advantages are Monte Carlo returns
minus a separately trained value network.  Everything draws from one
seeded generator, so a run is reproducible bit for bit.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from policymc.errors import PolicyError
from policymc.mdp import ExplicitMdp
from policymc.policy import PolicyNet, _forward_cache, backward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 10_000
    learning_rate: float = 3e-4
    gamma: float = 0.99
    batch_size: int = 64
    clip: float = 0.2
    epochs: int = 4
    hidden: tuple[int, ...] = (512, 512, 512, 512)
    seed: int = 42
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    rollout_episodes: int = 32
    max_steps: int = 1_000

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        self.validate()

    def validate(self) -> None:
        for name in ("episodes", "batch_size", "epochs", "rollout_episodes", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.clip < 1.0:
            raise ValueError("clip must lie in (0, 1)")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden layout needs at least one positive layer width")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("loss coefficients must be nonnegative")

    def as_metadata(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class MdpEnv:
    """Vectorized episodic simulator over an :class:`ExplicitMdp`."""

    def __init__(self, mdp: ExplicitMdp, actions: tuple[str, ...]):
        if tuple(mdp.actions) != tuple(actions):
            raise PolicyError("policy action table does not match the model")
        self.mdp = mdp
        n, a = mdp.n_states, len(actions)
        states_of_choice = np.repeat(np.arange(n), np.diff(mdp.state_ptr))
        self.choice_of = np.full((n, a), -1, dtype=np.int64)
        self.choice_of[states_of_choice, mdp.choice_action] = np.arange(mdp.n_choices)
        self.first_choice = mdp.state_ptr[:-1].astype(np.int64)
        self.forced = np.diff(mdp.state_ptr) == 1
        lengths = np.diff(mdp.choice_ptr)
        choice_src = states_of_choice
        self_loop = (lengths == 1) & (mdp.succ[mdp.choice_ptr[:-1]] == choice_src)
        self.absorbing = np.minimum.reduceat(self_loop.astype(np.int8), mdp.state_ptr[:-1]).astype(bool)
        # globally increasing sampling key: choice c occupies (c, c+1]
        within = mdp.prob.copy()
        starts = mdp.choice_ptr[:-1]
        cum = np.cumsum(within)
        offset = np.repeat(cum[starts] - within[starts], lengths)
        self.key = np.repeat(np.arange(mdp.n_choices, dtype=np.float64), lengths) + (cum - offset)
        self.choice_end = mdp.choice_ptr[1:] - 1
        init = list(mdp.initial.items())
        self.init_states = np.array([s for s, _ in init], dtype=np.int64)
        self.init_probs = np.array([p for _, p in init])

    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if len(self.init_states) == 1:
            return np.full(n, self.init_states[0], dtype=np.int64)
        return self.init_states[rng.choice(len(self.init_states), size=n, p=self.init_probs)]

    def step(self, states: np.ndarray, actions: np.ndarray, u: np.ndarray):
        """Execute sampled actions (with fallback); return (next states, rewards)."""
        choice = self.choice_of[states, actions]
        choice = np.where(choice >= 0, choice, self.first_choice[states])
        t = np.searchsorted(self.key, choice + u, side="right")
        t = np.clip(t, self.mdp.choice_ptr[choice], self.choice_end[choice])
        return self.mdp.succ[t].astype(np.int64), self.mdp.choice_reward[choice]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _value_net(n_in: int, hidden, rng) -> PolicyNet:
    dims = [n_in, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    weights[-1] *= 0.1
    names = tuple(f"x{i}" for i in range(n_in))
    return PolicyNet(weights, biases, ("value",), names, np.zeros(n_in), np.ones(n_in))


@dataclass
class TrainStats:
    episodes: int = 0
    updates: int = 0
    mean_returns: list[float] = field(default_factory=list)


def _collect(env: MdpEnv, net: PolicyNet, obs_all: np.ndarray, n_eps: int, cfg: TrainConfig, rng):
    states = env.reset(n_eps, rng)
    alive = np.ones(n_eps, dtype=bool)
    rec_ep, rec_s, rec_a, rec_lp, rec_r = [], [], [], [], []
    for _ in range(cfg.max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = states[idx]
        probs = _softmax(forward_scores(net, obs_all[s]))
        u = rng.random((idx.size, 2))
        a = np.minimum((np.cumsum(probs, axis=1) <= u[:, :1]).sum(axis=1), probs.shape[1] - 1)
        nxt, r = env.step(s, a, u[:, 1])
        rec_ep.append(idx)
        rec_s.append(s)
        rec_a.append(a)
        rec_lp.append(np.log(probs[np.arange(idx.size), a]))
        rec_r.append(r)
        alive[idx[env.absorbing[s]]] = False
        states[idx] = nxt
    ep = np.concatenate(rec_ep)
    s = np.concatenate(rec_s)
    a = np.concatenate(rec_a)
    lp = np.concatenate(rec_lp)
    r = np.concatenate(rec_r)
    # discounted returns, walking each episode's steps backwards (records are time-major)
    ret = np.zeros_like(r)
    running = np.zeros(n_eps)
    bounds = np.cumsum([0] + [len(x) for x in rec_ep])
    for k in range(len(rec_ep) - 1, -1, -1):
        lo, hi = bounds[k], bounds[k + 1]
        e = ep[lo:hi]
        running[e] = r[lo:hi] + cfg.gamma * running[e]
        ret[lo:hi] = running[e]
    totals = np.zeros(n_eps)
    np.add.at(totals, ep, r)
    return s, a, lp, ret, totals


def forward_scores(net: PolicyNet, obs: np.ndarray) -> np.ndarray:
    return _forward_cache(net, obs)[-1]


def train(mdp: ExplicitMdp, cfg: TrainConfig = TrainConfig(), progress=None) -> PolicyNet:
    """Train an actor network on ``mdp``; returns it with run metadata attached."""
    rng = np.random.default_rng(cfg.seed)
    meta = {"algorithm": "ppo-clip", "config": cfg.as_metadata()}
    net = PolicyNet.for_model(mdp, cfg.hidden, rng, meta)
    critic = _value_net(net.n_features, cfg.hidden, rng)
    env = MdpEnv(mdp, net.actions)
    obs_all = net.observe(mdp.states)
    actor_opt = Adam(net.weights + net.biases, cfg.learning_rate)
    critic_opt = Adam(critic.weights + critic.biases, cfg.learning_rate)
    n_layers = len(net.weights)
    stats = TrainStats()
    done = 0
    while done < cfg.episodes:
        n_eps = min(cfg.rollout_episodes, cfg.episodes - done)
        s, a, lp_old, ret, totals = _collect(env, net, obs_all, n_eps, cfg, rng)
        done += n_eps
        stats.episodes = done
        stats.mean_returns.append(float(totals.mean()))

        obs = obs_all[s]
        # value targets use every step; the actor only learns where it has a real choice
        free = ~env.forced[s]
        v = forward_scores(critic, obs)[:, 0]
        adv = ret - v
        n = len(s)
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.batch_size):
                mb = perm[lo:lo + cfg.batch_size]
                _critic_step(critic, critic_opt, obs[mb], ret[mb], cfg, stats)
                mb = mb[free[mb]]
                if mb.size == 0:
                    continue
                _actor_step(net, actor_opt, n_layers, obs[mb], a[mb], lp_old[mb], adv[mb], cfg, stats)
                stats.updates += 1
        if progress is not None:
            progress(stats)
        log.debug("episodes %d mean return %.4f", done, stats.mean_returns[-1])
    net.metadata = dict(meta, episodes=done, updates=stats.updates)
    return net


def _normalize(adv: np.ndarray) -> np.ndarray:
    adv = adv - adv.mean()
    std = adv.std()
    return adv / std if std > 1e-12 else adv


def _actor_step(net, opt, n_layers, obs, act, lp_old, adv, cfg, stats) -> None:
    adv = _normalize(adv)
    acts = _forward_cache(net, obs)
    z = acts[-1]
    p = _softmax(z)
    m = len(act)
    rows = np.arange(m)
    logp = np.log(np.maximum(p, 1e-300))
    ratio = np.exp(logp[rows, act] - lp_old)
    clipped = np.clip(ratio, 1 - cfg.clip, 1 + cfg.clip)
    surrogate = np.minimum(ratio * adv, clipped * adv)
    entropy = -(p * logp).sum(axis=1)
    loss = -surrogate.mean() - cfg.entropy_coef * entropy.mean()
    if not np.isfinite(loss):
        raise PolicyError(f"non-finite actor loss after {stats.episodes} episodes ({stats.updates} updates)")
    # d loss / d logits
    active = ~(((adv > 0) & (ratio > 1 + cfg.clip)) | ((adv < 0) & (ratio < 1 - cfg.clip)))
    onehot = np.zeros_like(p)
    onehot[rows, act] = 1.0
    g = -(active * adv * ratio)[:, None] * (onehot - p)
    g += cfg.entropy_coef * p * (logp + entropy[:, None])
    g /= m
    gw, gb, _ = backward(net, acts, g)
    grads = gw + gb
    if not all(np.all(np.isfinite(x)) for x in grads):
        raise PolicyError(f"non-finite actor gradient after {stats.episodes} episodes")
    opt.step(grads)


def _critic_step(critic, opt, obs, target, cfg, stats) -> None:
    acts = _forward_cache(critic, obs)
    v = acts[-1][:, 0]
    err = v - target
    loss = cfg.value_coef * float(np.mean(err * err))
    if not np.isfinite(loss):
        raise PolicyError(f"non-finite value loss after {stats.episodes} episodes ({stats.updates} updates)")
    g = (cfg.value_coef * 2.0 * err / len(err))[:, None]
    gw, gb, _ = backward(critic, acts, g)
    opt.step(gw + gb)
