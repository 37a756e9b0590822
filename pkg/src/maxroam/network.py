"""Dense multi-task network with per-task channel masks and hand-written backprop.

Hidden layer ``d`` computes ``relu((h @ W_d.T + b_d) * m_t)`` for task ``t``, so a
masked-off channel outputs zero and receives zero gradient from that task.
Each task owns an unmasked linear head producing one logit or regression value.

Parameters live in one flat list ``[W_1, b_1, ..., W_D, b_D, hW_0, hb_0, ...]`` so
gradients, optimizer state and checkpoints share a single layout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

LOSS_KINDS = ("binary", "regression")
ACTIVATIONS = ("relu", "identity")


class NonFiniteLossError(FloatingPointError):
    pass


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else z


def _dact(z, kind):
    return (z > 0.0).astype(z.dtype) if kind == "relu" else np.ones_like(z)


def task_loss(pred: np.ndarray, y: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. ``pred``."""
    n = pred.shape[0]
    if kind == "binary":
        # Stable BCE-with-logits.
        loss = np.mean(np.maximum(pred, 0.0) - pred * y + np.log1p(np.exp(-np.abs(pred))))
        sig = 0.5 * (1.0 + np.tanh(0.5 * pred))
        return float(loss), (sig - y) / n
    if kind == "regression":
        r = pred - y
        return float(np.mean(r * r)), 2.0 * r / n
    raise ValueError(f"unknown loss kind {kind!r}")


class MaskedNetwork:
    def __init__(self, input_dim: int, widths, n_tasks: int, rng: np.random.Generator,
                 activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.input_dim = int(input_dim)
        self.widths = [int(w) for w in widths]
        self.n_tasks = int(n_tasks)
        self.activation = activation
        self.params: list[np.ndarray] = []
        fan_in = self.input_dim
        for w in self.widths:
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(w, fan_in)))
            self.params.append(rng.uniform(-bound, bound, size=w))
            fan_in = w
        for _ in range(self.n_tasks):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(1, fan_in)))
            self.params.append(rng.uniform(-bound, bound, size=1))

    @property
    def depth(self) -> int:
        return len(self.widths)

    def layer_weights(self, d: int) -> np.ndarray:
        return self.params[2 * d]

    def head_slice(self, t: int) -> slice:
        k = 2 * self.depth + 2 * t
        return slice(k, k + 2)

    def check_partitions(self, partitions) -> None:
        if partitions is None:
            return
        if partitions.widths != self.widths:
            raise ValueError(f"partition widths {partitions.widths} do not match network widths {self.widths}")
        if partitions.T != self.n_tasks:
            raise ValueError(f"partitions cover {partitions.T} tasks, network has {self.n_tasks}")

    def _masks(self, partitions, t):
        return None if partitions is None else partitions.masks_for(t)

    def forward(self, x: np.ndarray, t: int, masks=None):
        """Task-``t`` forward pass; returns predictions of shape ``(n,)`` and the cache."""
        if not 0 <= t < self.n_tasks:
            raise IndexError(f"task {t} out of range")
        h = np.asarray(x, dtype=np.float64)
        if h.ndim == 1:
            h = h[None, :]
        cache = [h]
        for d in range(self.depth):
            W, b = self.params[2 * d], self.params[2 * d + 1]
            z = h @ W.T + b
            if masks is not None:
                z = z * masks[d]
            h = _act(z, self.activation)
            cache.append((z, h))
        hW, hb = self.params[self.head_slice(t)]
        out = h @ hW[0] + hb[0]
        return out, cache

    def backward(self, x, y, t: int, kind: str, masks=None) -> tuple[list[np.ndarray], float]:
        """Gradients of task ``t``'s mean loss for every parameter (zeros where unused)."""
        pred, cache = self.forward(x, t, masks)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        loss, dpred = task_loss(pred, y, kind)
        if not np.isfinite(loss):
            raise NonFiniteLossError(
                f"task {t}: loss={loss}, max|pred|={np.max(np.abs(pred)):.3g}, "
                f"max|param|={max(np.max(np.abs(p)) for p in self.params):.3g}"
            )
        grads = [np.zeros_like(p) for p in self.params]
        h_last = cache[-1][1]
        hW, _ = self.params[self.head_slice(t)]
        k = self.head_slice(t).start
        grads[k] = (dpred @ h_last)[None, :]
        grads[k + 1] = np.array([dpred.sum()])
        dh = np.outer(dpred, hW[0])
        for d in reversed(range(self.depth)):
            z, _ = cache[d + 1]
            h_in = cache[d] if d == 0 else cache[d][1]
            dz = dh * _dact(z, self.activation)
            if masks is not None:
                dz = dz * masks[d]
            grads[2 * d] = dz.T @ h_in
            grads[2 * d + 1] = dz.sum(axis=0)
            if d > 0:
                dh = dz @ self.params[2 * d]
        return grads, loss

    def state_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "widths": self.widths,
            "n_tasks": self.n_tasks,
            "activation": self.activation,
            "params": [p.tolist() for p in self.params],
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> MaskedNetwork:
        net = cls.__new__(cls)
        net.input_dim = int(d["input_dim"])
        net.widths = [int(w) for w in d["widths"]]
        net.n_tasks = int(d["n_tasks"])
        net.activation = d["activation"]
        net.params = [np.asarray(p, dtype=np.float64) for p in d["params"]]
        return net


def forward_task(net: MaskedNetwork, x, t: int, partitions=None) -> np.ndarray:
    net.check_partitions(partitions)
    return net.forward(x, t, net._masks(partitions, t))[0]


def backward_task(net: MaskedNetwork, x, y_t, t: int, partitions=None, kind: str = "binary"):
    net.check_partitions(partitions)
    return net.backward(x, y_t, t, kind, net._masks(partitions, t))


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    def __init__(self, params, config: AdamConfig | None = None):
        self.config = config or AdamConfig()
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)

    def state_dict(self) -> dict:
        return {"config": asdict(self.config), "t": self.t,
                "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    def load_state_dict(self, d: dict) -> None:
        if "config" in d:
            self.config = AdamConfig(**d["config"])
        self.t = int(d["t"])
        self.m = [np.asarray(a, dtype=np.float64) for a in d["m"]]
        self.v = [np.asarray(a, dtype=np.float64) for a in d["v"]]


def train_step(net: MaskedNetwork, x, targets, optimizer: Adam, partitions=None,
               kind: str = "binary", tasks=None) -> list[float]:
    """One optimizer step on the unweighted sum of the task losses.

    ``targets`` has one column per task.  Returns the per-task losses before the step.
    """
    net.check_partitions(partitions)
    targets = np.asarray(targets)
    tasks = range(net.n_tasks) if tasks is None else tasks
    total = [np.zeros_like(p) for p in net.params]
    losses = []
    for t in tasks:
        grads, loss = net.backward(x, targets[:, t], t, kind, net._masks(partitions, t))
        for acc, g in zip(total, grads):
            acc += g
        losses.append(loss)
    optimizer.step(net.params, total)
    return losses


def save_checkpoint(path, net: MaskedNetwork, partitions=None, optimizer: Adam | None = None) -> None:
    """Write weights, optimizer state and partition snapshot as one JSON document."""
    doc = {
        "format": "maxroam-checkpoint/1",
        "network": net.state_dict(),
        "partitions": None if partitions is None else partitions.to_dict(),
        "optimizer": None if optimizer is None else optimizer.state_dict(),
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    from maxroam.partition import PartitionSet

    doc = json.loads(Path(path).read_text())
    net = MaskedNetwork.from_state_dict(doc["network"])
    parts = None if doc["partitions"] is None else PartitionSet.from_dict(doc["partitions"])
    opt = None
    if doc.get("optimizer") is not None:
        opt = Adam(net.params)
        opt.load_state_dict(doc["optimizer"])
    return net, parts, opt
