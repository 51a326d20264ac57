"""Goal-conditioned DDPG: actor/critic pair, target copies, one update step.

The critic regresses onto targets y = clip(r + gamma * Q'(s', g, pi'(s', g)),
-1/(1-gamma), 0); with binary {-1, 0} rewards every true return lives in that
interval, so the clip bounds the critic against early overestimation. Success
transitions terminate episodes, so their targets are anchored at exactly 0
rather than bootstrapped -- without that anchor the critic stays flat and the
sparse-reward tasks never take off. The actor ascends the critic value of its
own actions. Both optimizers are Adam; target nets follow by polyak averaging
after every update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .nets import AdamState, DivergenceError, Mlp, adam_step, polyak_update


@dataclass
class ActorCritic:
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    actor_opt: AdamState
    critic_opt: AdamState
    gamma: float
    polyak: float
    state_dim: int
    goal_dim: int
    action_dim: int

    @classmethod
    def create(
        cls,
        state_dim: int,
        goal_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        hidden_sizes: tuple[int, ...] = (64, 64, 64),
        gamma: float = 0.98,
        actor_lr: float = 1e-3,
        critic_lr: float = 1e-4,
        polyak: float = 0.95,
    ) -> "ActorCritic":
        actor = Mlp(
            [state_dim + goal_dim, *hidden_sizes, action_dim],
            hidden_activation="relu",
            output_activation="tanh",
            rng=rng,
        )
        critic = Mlp(
            [state_dim + goal_dim + action_dim, *hidden_sizes, 1],
            hidden_activation="relu",
            output_activation="linear",
            rng=rng,
        )
        return cls(
            actor=actor,
            critic=critic,
            target_actor=actor.copy(),
            target_critic=critic.copy(),
            actor_opt=AdamState.for_params(actor.parameters(), actor_lr),
            critic_opt=AdamState.for_params(critic.parameters(), critic_lr),
            gamma=gamma,
            polyak=polyak,
            state_dim=state_dim,
            goal_dim=goal_dim,
            action_dim=action_dim,
        )

    @property
    def min_return(self) -> float:
        return -1.0 / (1.0 - self.gamma)

    def act(self, state: np.ndarray, goal: np.ndarray) -> np.ndarray:
        """Deterministic policy action in [-1, 1]^action_dim."""
        return self.actor.forward(np.concatenate([state, goal]))

    def q_value(self, state: np.ndarray, goal: np.ndarray, action: np.ndarray) -> float:
        return float(self.critic.forward(np.concatenate([state, goal, action]))[0])

    def save(self, path) -> None:
        save_checkpoint(
            path,
            {
                "actor": self.actor,
                "critic": self.critic,
                "target_actor": self.target_actor,
                "target_critic": self.target_critic,
            },
            extra_arrays={"gamma": np.array([self.gamma])},
        )

    @classmethod
    def load(
        cls, path, actor_lr: float = 1e-3, critic_lr: float = 1e-4, polyak: float = 0.95
    ) -> "ActorCritic":
        mlps, extras = load_checkpoint(path)
        actor = mlps["actor"]
        critic = mlps["critic"]
        gamma = float(extras["gamma"][0])
        action_dim = actor.output_dim
        state_goal = actor.input_dim
        # state/goal split is not stored; callers that need it set it after load
        return cls(
            actor=actor,
            critic=critic,
            target_actor=mlps.get("target_actor", actor.copy()),
            target_critic=mlps.get("target_critic", critic.copy()),
            actor_opt=AdamState.for_params(actor.parameters(), actor_lr),
            critic_opt=AdamState.for_params(critic.parameters(), critic_lr),
            gamma=gamma,
            polyak=polyak,
            state_dim=state_goal - 3,
            goal_dim=3,
            action_dim=action_dim,
        )


def select_action_noisy(
    ac: ActorCritic,
    state: np.ndarray,
    goal: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Policy action plus isotropic Gaussian noise, clipped back to [-1, 1]."""
    a = ac.act(state, goal)
    if sigma > 0.0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def ddpg_update(ac: ActorCritic, batch: dict[str, np.ndarray]) -> tuple[float, float]:
    """One critic + actor gradient step on a sampled batch; returns losses."""
    s, g, a = batch["states"], batch["goals"], batch["actions"]
    r, s2 = batch["rewards"], batch["next_states"]
    n = len(r)
    sg2 = np.concatenate([s2, g], axis=1)

    # critic regression onto clipped TD targets from the target nets; success
    # transitions (reward 0) are absorbing under the episode semantics, so
    # they anchor y = 0 exactly instead of bootstrapping
    a2 = ac.target_actor.forward(sg2)
    q2 = ac.target_critic.forward(np.concatenate([sg2, a2], axis=1))[:, 0]
    y = np.clip(r + ac.gamma * q2 * (r != 0.0), ac.min_return, 0.0)

    sga = np.concatenate([s, g, a], axis=1)
    q, critic_cache = ac.critic.forward_cached(sga)
    td = q[:, 0] - y
    critic_loss = float(np.mean(td * td))
    critic_grads, _ = ac.critic.backward(critic_cache, (2.0 / n) * td[:, None])
    adam_step(ac.critic.parameters(), critic_grads, ac.critic_opt)

    # actor ascends Q(s, g, pi(s, g)) through the freshly updated critic
    sg = np.concatenate([s, g], axis=1)
    pi, actor_cache = ac.actor.forward_cached(sg)
    q_pi, chain_cache = ac.critic.forward_cached(np.concatenate([sg, pi], axis=1))
    actor_loss = float(-np.mean(q_pi[:, 0]))
    input_grad = ac.critic.input_gradient(chain_cache, np.full((n, 1), -1.0 / n))
    dq_da = input_grad[:, sg.shape[1] :]
    actor_grads, _ = ac.actor.backward(actor_cache, dq_da)
    adam_step(ac.actor.parameters(), actor_grads, ac.actor_opt)

    if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
        raise DivergenceError(
            f"non-finite losses (critic={critic_loss}, actor={actor_loss}); "
            f"batch rewards in [{r.min()}, {r.max()}], targets in [{y.min()}, {y.max()}]"
        )

    polyak_update(ac.target_actor, ac.actor, ac.polyak)
    polyak_update(ac.target_critic, ac.critic, ac.polyak)
    return critic_loss, actor_loss
