from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Learner, _stable_mean


@dataclass(frozen=True)
class MLPSpec:
    hidden_layers: int = 4
    widths: tuple = (64, 64, 64, 64)
    activation: str = "relu"
    output_units: int = 1
    loss: str = "squared_error"
    optimizer: str = "adam"
    epochs: int = 200
    batch: int = 115
    learning_rate: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    init: str = "he_uniform"


def mlp_spec() -> MLPSpec:
    """Canonical network: four ReLU hidden layers, linear output, Adam on MSE."""
    return MLPSpec()


class MLP(Learner):
    """Fully connected ReLU network trained by minibatch Adam.

    The target is z-scored internally and mapped back at prediction time.
    """

    name = "mlp"
    _spec = mlp_spec()
    defaults = {"widths": _spec.widths, "epochs": _spec.epochs, "batch": _spec.batch,
                "learning_rate": _spec.learning_rate, "betas": _spec.betas, "eps": _spec.eps}
    standardize = True

    def _init_params(self, p, rng):
        sizes = [p, *self.params["widths"], 1]
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return params

    @staticmethod
    def _forward(params, X):
        acts = [X]
        a = X
        n_layers = len(params) // 2
        for i in range(n_layers):
            z = a @ params[2 * i] + params[2 * i + 1]
            a = np.maximum(z, 0.0) if i < n_layers - 1 else z
            acts.append(a)
        return acts

    def _fit(self, X, y, seed):
        rng = np.random.default_rng(seed)
        self.y_mean_ = _stable_mean(y)
        sd = float(np.std(y))
        self.y_scale_ = sd if sd > 0 else 1.0
        t = (y - self.y_mean_) / self.y_scale_
        params = self._init_params(X.shape[1], rng)
        m = [np.zeros_like(w) for w in params]
        v = [np.zeros_like(w) for w in params]
        b1, b2 = self.params["betas"]
        lr = float(self.params["learning_rate"])
        eps = float(self.params["eps"])
        batch = int(self.params["batch"])
        n = X.shape[0]
        n_layers = len(params) // 2
        step = 0
        self.loss_curve_ = []
        for _ in range(int(self.params["epochs"])):
            perm = rng.permutation(n)
            total = 0.0
            for a in range(0, n, batch):
                rows = perm[a:a + batch]
                xb, tb = X[rows], t[rows]
                acts = self._forward(params, xb)
                resid = acts[-1][:, 0] - tb
                total += float(resid @ resid)
                delta = (2.0 / rows.size) * resid[:, None]
                grads = [None] * len(params)
                for i in range(n_layers - 1, -1, -1):
                    grads[2 * i] = acts[i].T @ delta
                    grads[2 * i + 1] = delta.sum(axis=0)
                    if i > 0:
                        delta = (delta @ params[2 * i].T) * (acts[i] > 0)
                step += 1
                c1 = 1.0 - b1 ** step
                c2 = 1.0 - b2 ** step
                for j, gj in enumerate(grads):
                    m[j] = b1 * m[j] + (1 - b1) * gj
                    v[j] = b2 * v[j] + (1 - b2) * gj * gj
                    params[j] = params[j] - lr * (m[j] / c1) / (np.sqrt(v[j] / c2) + eps)
            self.loss_curve_.append(total / n)
        self.weights_ = params

    def _predict(self, X):
        return self.y_mean_ + self.y_scale_ * self._forward(self.weights_, X)[-1][:, 0]
