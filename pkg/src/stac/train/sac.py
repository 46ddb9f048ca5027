"""Discrete soft actor-critic over signal-conditioned networks.

Expectations over actions are computed exactly from the masked policy, so no
reparameterization is needed. Both Q heads output one value per action slot.
"""

from __future__ import annotations

import numpy as np

from stac.conditioning import ConditionedNet, SignalScheme, masked_softmax
from stac.nn import autodiff as ad
from stac.nn.autodiff import Node
from stac.nn.optim import Adam, polyak_update


def _masked_probs(logits: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = masked_softmax(logits, mask)
    with np.errstate(divide="ignore"):
        logp = np.where(mask, np.log(np.where(mask, p, 1.0)), 0.0)
    return p, logp


class SacLearner:
    """Actor, twin Q critics, V critic and a lagged V target.

    The actor sees `actor_in` features, the critics `critic_in` features, so a
    centralized critic is just a wider critic input.
    """

    def __init__(self, actor_in: int, critic_in: int, n_actions: int, scheme: SignalScheme,
                 rng: np.random.Generator, policy_hidden=(64,), critic_hidden=(64,),
                 lr_policy=1e-2, lr_q=5e-4, lr_value=5e-4, alpha=1.0, tau=0.005, gamma=1.0,
                 bias_hidden=16, policy_out_scale=0.01, critic_out_scale=0.01,
                 learn_encodings=False):
        self.scheme = scheme
        self.n_actions = n_actions
        self.alpha = float(alpha)
        self.tau = float(tau)
        self.gamma = float(gamma)
        self.policy = ConditionedNet([actor_in, *policy_hidden, n_actions], scheme, rng,
                                     bias_hidden, policy_out_scale, learn_encodings)
        critic = [critic_in, *critic_hidden]
        # near-zero initial critics: a random Q gap would otherwise be chased
        # by the actor into a saturated softmax before any data arrives
        self.q1 = ConditionedNet(critic + [n_actions], scheme, rng, bias_hidden, critic_out_scale,
                                 learn_encodings)
        self.q2 = ConditionedNet(critic + [n_actions], scheme, rng, bias_hidden, critic_out_scale,
                                 learn_encodings)
        self.v = ConditionedNet(critic + [1], scheme, rng, bias_hidden, critic_out_scale,
                                learn_encodings)
        self.v_target = ConditionedNet(critic + [1], scheme, rng, bias_hidden, critic_out_scale,
                                       learn_encodings)
        for t, o in zip(self.v_target.arrays(), self.v.arrays()):
            t[...] = o
        self.opt_policy = Adam(self.policy.parameters(), lr_policy)
        self.opt_q1 = Adam(self.q1.parameters(), lr_q)
        self.opt_q2 = Adam(self.q2.parameters(), lr_q)
        self.opt_v = Adam(self.v.parameters(), lr_value)
        self._act_cache: dict = {}

    # -- acting ----------------------------------------------------------------
    def action_probs(self, signal: int, obs: np.ndarray, mask: np.ndarray, key=None) -> np.ndarray:
        if key is not None:
            hit = self._act_cache.get((signal, key))
            if hit is not None:
                return hit
        p = masked_softmax(self.policy.forward(signal, obs), mask)
        if key is not None:
            self._act_cache[(signal, key)] = p
        return p

    def policy_table(self, signal: int, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return masked_softmax(self.policy.forward(signal, obs), mask)

    def nets(self) -> dict[str, ConditionedNet]:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2, "v": self.v,
                "v_target": self.v_target}

    def invalidate(self) -> None:
        self._act_cache.clear()
        for net in self.nets().values():
            net.invalidate()

    # -- losses ----------------------------------------------------------------
    def _min_q(self, batch) -> np.ndarray:
        sig, s = batch["signal"], batch["state"]
        q1 = self.q1.forward_batch(sig, s)
        q2 = self.q2.forward_batch(sig, s)
        return np.minimum(q1, q2)

    def _pi(self, batch) -> tuple[np.ndarray, np.ndarray]:
        logits = self.policy.forward_batch(batch["signal"], batch["obs"])
        return _masked_probs(logits, batch["mask"])

    def value_loss(self, batch) -> Node:
        """mean 1/2 (V(s) - E_pi[minQ(s,a) - alpha log pi(a|s)])^2."""
        p, logp = self._pi(batch)
        mq = np.where(batch["mask"], self._min_q(batch), 0.0)
        target = (p * (mq - self.alpha * logp)).sum(axis=1)
        v = ad.reshape(self.v.forward_graph(batch["signal"], batch["state"]), (len(target),))
        return ad.scale(ad.mean(ad.square(ad.add(v, -target))), 0.5)

    def q_target(self, batch) -> np.ndarray:
        vt = self.v_target.forward_batch(batch["signal"], batch["next_state"])[:, 0]
        return batch["reward"] + self.gamma * (1.0 - batch["done"]) * vt

    def q_loss(self, batch, which: int, target: np.ndarray | None = None) -> Node:
        """mean 1/2 (Q_i(s,a) - (r + gamma (1 - done) V_target(s')))^2."""
        net = self.q1 if which == 1 else self.q2
        if target is None:
            target = self.q_target(batch)
        q = ad.gather(net.forward_graph(batch["signal"], batch["state"]), batch["action"])
        return ad.scale(ad.mean(ad.square(ad.add(q, -target))), 0.5)

    def policy_loss(self, batch) -> Node:
        """mean E_pi[alpha log pi(a|s) - minQ(s,a)], exact over legal actions."""
        mask = batch["mask"]
        mq = np.where(mask, self._min_q(batch), 0.0)
        logits = self.policy.forward_graph(batch["signal"], batch["obs"])
        logp = ad.logsoftmax(logits, mask)
        p = ad.softmax(logits, mask)
        inner = ad.add(ad.scale(logp, self.alpha), -mq)
        return ad.mean(ad.sum_(ad.mul(p, inner), axis=1))

    # -- update ----------------------------------------------------------------
    def _step(self, loss: Node, net: ConditionedNet, opt: Adam) -> float:
        params = net.parameters()
        ad.zero_grad(params)
        grads = ad.backward(loss, params)
        opt.step(grads)
        net.invalidate()
        return float(loss.value)

    def _critic_step(self, batch) -> dict[str, float]:
        # The V loss reads Q as a constant and the Q losses read only the
        # lagged V, so one backward pass over the sum gives each critic
        # exactly the gradient of its own loss.
        lv = self.value_loss(batch)
        target = self.q_target(batch)
        lq1 = self.q_loss(batch, 1, target)
        lq2 = self.q_loss(batch, 2, target)
        groups = [(self.v, self.opt_v), (self.q1, self.opt_q1), (self.q2, self.opt_q2)]
        params = [p for net, _ in groups for p in net.parameters()]
        ad.zero_grad(params)
        ad.backward(ad.add(ad.add(lv, lq1), lq2))
        for net, opt in groups:
            opt.step()
            net.invalidate()
        return {"loss_v": float(lv.value), "loss_q1": float(lq1.value), "loss_q2": float(lq2.value)}

    def update(self, batch) -> dict[str, float]:
        out = self._critic_step(batch)
        out["loss_pi"] = self._step(self.policy_loss(batch), self.policy, self.opt_policy)
        polyak_update(self.v_target.arrays(), self.v.arrays(), self.tau)
        self.v_target.invalidate()
        self._act_cache.clear()
        return out

    # -- persistence -----------------------------------------------------------
    def named_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name, net in self.nets().items():
            out.update(net.named_arrays(f"{prefix}.{name}"))
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        for name, net in self.nets().items():
            net.load_arrays(arrays, f"{prefix}.{name}")
        self._act_cache.clear()
