"""Minimal feedforward network: dense layers, tanh, inverted dropout,
elastic-net regularization, Adam, early stopping, and a finite-difference
gradient checker.  Backpropagation is hand-derived so every gradient can be
audited against central differences.
"""

import time
from dataclasses import dataclass, field

import numpy as np


class ContractError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class NetworkSpec:
    layer_sizes: tuple  # (input, hidden..., output)
    hidden_activation: str = "tanh"
    dropout_rate: float = 0.0
    l1_coeff: float = 0.0
    l2_coeff: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"bad layer sizes: {self.layer_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1): {self.dropout_rate}")


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must be in (0, 1)")


@dataclass
class EarlyStopConfig:
    patience: int = 10
    monitored_metric: str = "dev_nll"

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def init_network_params(spec, rng=None):
    """Glorot-uniform weights, zero biases, as a name -> array dict."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    return params


@dataclass
class Activations:
    layer_inputs: list  # input to each affine layer (post-dropout)
    pre_acts: list  # affine outputs per layer
    masks: list  # dropout masks (None when not applied)
    output: np.ndarray


def forward(params, spec, X, train_mode=False, rng=None):
    """Hidden layers tanh (+ inverted dropout in train mode); final layer affine."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != spec.layer_sizes[0]:
        raise ContractError(f"batch width {X.shape[1]} != input size {spec.layer_sizes[0]}")
    n_layers = len(spec.layer_sizes) - 1
    h = X
    layer_inputs, pre_acts, masks = [], [], []
    for i in range(n_layers):
        layer_inputs.append(h)
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        pre_acts.append(z)
        if i < n_layers - 1:
            h = np.tanh(z)
            if train_mode and spec.dropout_rate > 0.0:
                if rng is None:
                    raise ContractError("dropout in train mode needs an rng")
                keep = 1.0 - spec.dropout_rate
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
        else:
            h = z
            masks.append(None)
    return Activations(layer_inputs=layer_inputs, pre_acts=pre_acts, masks=masks, output=h)


def backward(params, spec, acts, d_output):
    """Reverse-mode gradients; elastic-net terms added to weight grads only.

    Returns (grads dict matching params, dLoss/dInput).
    """
    n_layers = len(spec.layer_sizes) - 1
    grads = {}
    delta = np.asarray(d_output, dtype=float)
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            if acts.masks[i] is not None:
                delta = delta * acts.masks[i]
            delta = delta * (1.0 - np.tanh(acts.pre_acts[i]) ** 2)
        W = params[f"W{i}"]
        grads[f"W{i}"] = acts.layer_inputs[i].T @ delta \
            + spec.l1_coeff * np.sign(W) + 2.0 * spec.l2_coeff * W
        grads[f"b{i}"] = delta.sum(axis=0)
        delta = delta @ W.T
    return grads, delta


def regularization_penalty(params, spec):
    total = 0.0
    for i in range(len(spec.layer_sizes) - 1):
        W = params[f"W{i}"]
        total += spec.l1_coeff * np.abs(W).sum() + spec.l2_coeff * np.sum(W * W)
    return total


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(adam, params, grads, cfg):
    """Bias-corrected Adam update, in place on params."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in block {name}")
    adam.t += 1
    for name, g in grads.items():
        if name not in adam.m:
            adam.m[name] = np.zeros_like(params[name])
            adam.v[name] = np.zeros_like(params[name])
        adam.m[name] = cfg.beta1 * adam.m[name] + (1.0 - cfg.beta1) * g
        adam.v[name] = cfg.beta2 * adam.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = adam.m[name] / (1.0 - cfg.beta1 ** adam.t)
        v_hat = adam.v[name] / (1.0 - cfg.beta2 ** adam.t)
        params[name] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def train_loop(model, train_data, dev_data, adam_cfg=None, stop_cfg=None,
               batch_size=32, max_epochs=100, seed=0, log_sink=None):
    """Minibatch Adam training with early stopping on the dev metric.

    ``model`` must provide num_examples / batch_loss_and_grads / dev_metric
    and expose its trainable arrays as ``model.params`` (a name -> array
    dict).  Returns (best params dict, list of log records).
    """
    adam_cfg = adam_cfg or AdamConfig()
    stop_cfg = stop_cfg or EarlyStopConfig()
    rng = np.random.default_rng(seed)
    adam = AdamState()
    n = model.num_examples(train_data)
    best_metric = np.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_epoch = -1
    log = []
    for epoch in range(max_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = model.batch_loss_and_grads(train_data, idx, rng=rng, train_mode=True)
            if not np.isfinite(loss):
                raise TrainingError(f"NaN loss at epoch {epoch}, batch {start // batch_size}")
            adam_step(adam, model.params, grads, adam_cfg)
            epoch_loss += loss * len(idx)
        epoch_loss /= n
        metric = model.dev_metric(dev_data)
        record = (epoch, epoch_loss, metric, time.perf_counter() - t0)
        log.append(record)
        if log_sink is not None:
            log_sink(record)
        if metric < best_metric:
            best_metric = metric
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_epoch = epoch
        elif epoch - best_epoch >= stop_cfg.patience:
            break
    for k, v in best_params.items():
        model.params[k][...] = v
    return best_params, log


def gradient_check(model, data, tol=1e-4, h=1e-5):
    """Central-difference check of every parameter entry.

    Returns a dict: block name -> max relative error.  Relative error is
    |analytic - numeric| / max(|analytic| + |numeric|, 1e-8).
    """
    _, grads = model.batch_loss_and_grads(data, None, train_mode=False)
    report = {}
    for name, arr in model.params.items():
        g = grads[name]
        worst = 0.0
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = model.batch_loss_and_grads(data, None, train_mode=False)
            flat[i] = orig - h
            lm, _ = model.batch_loss_and_grads(data, None, train_mode=False)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            analytic = g.ravel()[i]
            err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    return report
