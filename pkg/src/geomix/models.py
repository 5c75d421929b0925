"""Trainable model wrappers tying the network core to the loss heads.

Each model exposes the same training surface (``params``, ``num_examples``,
``batch_loss_and_grads``, ``dev_metric``) consumed by ``network.train_loop``
and ``network.gradient_check``, plus checkpoint (de)serialization.

Training data is a ``(X, Y)`` pair: X dense or CSR features, Y an N x 2
coordinate array (geolocation) or N x V target matrix (dialectology).
"""

import numpy as np
from scipy import sparse

from . import dialect as dl
from . import heads
from .geo import GeoPoint
from .network import NetworkSpec, backward, forward, init_network_params, regularization_penalty

FORMAT_VERSION = 1


def _dense(X, idx=None):
    sub = X if idx is None else X[idx]
    return sub.toarray() if sparse.issparse(sub) else np.asarray(sub, dtype=float)


def _take(Y, idx=None):
    return np.asarray(Y, dtype=float) if idx is None else np.asarray(Y, dtype=float)[idx]


class _BaseModel:
    model_name = None

    def __init__(self, spec, rng=None):
        self.spec = spec
        self.params = init_network_params(spec, rng)
        self.vocab_hash = None

    def num_examples(self, data):
        return data[0].shape[0]

    def _data_loss(self, X, Y, train_mode, rng):
        raise NotImplementedError

    def batch_loss_and_grads(self, data, idx=None, rng=None, train_mode=False):
        X = _dense(data[0], idx)
        Y = _take(data[1], idx)
        loss, grads = self._data_loss(X, Y, train_mode, rng)
        return loss + regularization_penalty(self.params, self.spec), grads

    def dev_metric(self, data):
        X = _dense(data[0])
        Y = _take(data[1])
        loss, _ = self._data_loss(X, Y, train_mode=False, rng=None)
        return loss

    def _extra_checkpoint(self):
        return {}

    def to_checkpoint(self):
        ck = {
            "format_version": FORMAT_VERSION,
            "model": self.model_name,
            "slice_layout": heads.SLICE_LAYOUT,
            "network_spec": {
                "layer_sizes": list(self.spec.layer_sizes),
                "hidden_activation": self.spec.hidden_activation,
                "dropout_rate": self.spec.dropout_rate,
                "l1_coeff": self.spec.l1_coeff,
                "l2_coeff": self.spec.l2_coeff,
                "seed": self.spec.seed,
            },
            "vocab_hash": self.vocab_hash,
            "params": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in sorted(self.params.items())
            },
        }
        ck.update(self._extra_checkpoint())
        return ck

    def _load_params(self, ck):
        for name, entry in ck["params"].items():
            self.params[name] = np.array(entry["data"], dtype=float).reshape(entry["shape"])
        self.vocab_hash = ck.get("vocab_hash")


def _spec_from_checkpoint(ck):
    return NetworkSpec(**ck["network_spec"])


class RegressionGeolocator(_BaseModel):
    """Baseline MLP regressor with a 2-d linear output."""

    model_name = "regression"

    def _data_loss(self, X, Y, train_mode, rng):
        acts = forward(self.params, self.spec, X, train_mode=train_mode, rng=rng)
        loss, d_raw = heads.regression_loss(acts.output, Y)
        grads, _ = backward(self.params, self.spec, acts, d_raw)
        return loss, grads

    def predict_points(self, X):
        out = forward(self.params, self.spec, _dense(X)).output
        return out.copy()

    @classmethod
    def from_checkpoint(cls, ck):
        model = cls(_spec_from_checkpoint(ck))
        model._load_params(ck)
        return model


class MdnGeolocator(_BaseModel):
    """MDN head: the network emits all 6K mixture parameters per sample."""

    model_name = "mdn"

    def __init__(self, spec, head, rng=None):
        if spec.layer_sizes[-1] != 6 * head.K:
            raise ValueError(f"output size {spec.layer_sizes[-1]} != 6K = {6 * head.K}")
        super().__init__(spec, rng)
        self.head = head

    def _data_loss(self, X, Y, train_mode, rng):
        acts = forward(self.params, self.spec, X, train_mode=train_mode, rng=rng)
        loss, d_raw = heads.mdn_nll(acts.output, Y, self.head.K)
        grads, _ = backward(self.params, self.spec, acts, d_raw)
        return loss, grads

    def init_output_bias_from_labels(self, train_labels, sigma=2.0, mode="mean", seed=0):
        """Seed the output bias so initial mus start at label scale.

        ``mode="mean"`` puts every component at the coordinate mean (the
        network must spread them); ``mode="kmeans"`` puts them on K-means
        centroids.  Sigmas start at ``sigma``; pi and rho start flat.
        """
        labels = np.asarray(train_labels, dtype=float)
        K = self.head.K
        if mode == "kmeans":
            from .cluster import kmeans
            centers = kmeans(labels, K, seed=seed).centroids
        elif mode == "mean":
            centers = np.tile(labels.mean(axis=0), (K, 1))
        else:
            raise ValueError(f"unknown bias init mode: {mode}")
        b = self.params[f"b{len(self.spec.layer_sizes) - 2}"]
        b[:K] = centers[:, 0]
        b[K:2 * K] = centers[:, 1]
        b[2 * K:4 * K] = float(heads.inv_softplus(sigma))
        b[4 * K:] = 0.0

    def mixture_arrays(self, X):
        raw = forward(self.params, self.spec, _dense(X)).output
        return heads.unpack_arrays(raw, self.head.K)

    def predict_points(self, X, rule=None):
        mu1, mu2, s1, s2, rho, pi = self.mixture_arrays(X)
        return heads.predict_arrays(mu1, mu2, s1, s2, rho, pi,
                                    rule or self.head.selection_rule)

    def _extra_checkpoint(self):
        return {"head": {"K": self.head.K, "selection_rule": self.head.selection_rule}}

    @classmethod
    def from_checkpoint(cls, ck):
        model = cls(_spec_from_checkpoint(ck), heads.MdnHeadConfig(**ck["head"]))
        model._load_params(ck)
        return model


class SharedMdnGeolocator(_BaseModel):
    """MDN with globally shared mus/Sigmas; the network predicts only pi."""

    model_name = "mdn_shared"

    def __init__(self, spec, head, shared=None, rng=None):
        if spec.layer_sizes[-1] != head.K:
            raise ValueError(f"output size {spec.layer_sizes[-1]} != K = {head.K}")
        super().__init__(spec, rng)
        self.head = head
        if shared is None:
            shared = heads.SharedMixtureState(
                mus=np.zeros((head.K, 2)),
                raw_sigmas=np.asarray(heads.inv_softplus(np.full((head.K, 2), 1.0))),
                raw_rhos=np.zeros(head.K))
        self.params["mus"] = np.asarray(shared.mus, dtype=float)
        self.params["raw_sigmas"] = np.asarray(shared.raw_sigmas, dtype=float)
        self.params["raw_rhos"] = np.asarray(shared.raw_rhos, dtype=float)

    @property
    def shared(self):
        return heads.SharedMixtureState(mus=self.params["mus"],
                                        raw_sigmas=self.params["raw_sigmas"],
                                        raw_rhos=self.params["raw_rhos"])

    def init_shared_from_labels(self, train_labels, seed=0):
        state = heads.init_shared(train_labels, self.head.K, seed=seed)
        self.params["mus"][...] = state.mus
        self.params["raw_sigmas"][...] = state.raw_sigmas
        self.params["raw_rhos"][...] = state.raw_rhos

    def _data_loss(self, X, Y, train_mode, rng):
        acts = forward(self.params, self.spec, X, train_mode=train_mode, rng=rng)
        loss, d_pi_raw, shared_grads = heads.shared_nll(acts.output, self.shared, Y)
        grads, _ = backward(self.params, self.spec, acts, d_pi_raw)
        grads.update(shared_grads)
        return loss, grads

    def mixture_arrays(self, X):
        pi_raw = forward(self.params, self.spec, _dense(X)).output
        n = pi_raw.shape[0]
        pi = np.exp(heads.log_softmax(pi_raw))
        s1, _ = heads._clamped_sigma(self.params["raw_sigmas"][:, 0])
        s2, _ = heads._clamped_sigma(self.params["raw_sigmas"][:, 1])
        rho = heads.softsign(self.params["raw_rhos"])
        tile = lambda v: np.tile(v, (n, 1))
        return (tile(self.params["mus"][:, 0]), tile(self.params["mus"][:, 1]),
                tile(s1), tile(s2), tile(rho), pi)

    def predict_points(self, X, rule=None):
        mu1, mu2, s1, s2, rho, pi = self.mixture_arrays(X)
        return heads.predict_arrays(mu1, mu2, s1, s2, rho, pi,
                                    rule or self.head.selection_rule)

    def _extra_checkpoint(self):
        return {"head": {"K": self.head.K, "selection_rule": self.head.selection_rule}}

    @classmethod
    def from_checkpoint(cls, ck):
        model = cls(_spec_from_checkpoint(ck), heads.MdnHeadConfig(**ck["head"]))
        model._load_params(ck)
        return model


class DialectModel(_BaseModel):
    """Coordinate -> Gaussian layer (K) -> tanh hidden -> SoftMax over V."""

    model_name = "dialect"

    def __init__(self, spec, layer, terms, log_domain=False, rng=None):
        if spec.layer_sizes[0] != layer.mus.shape[0]:
            raise ValueError("network input size must equal the component count K")
        super().__init__(spec, rng)
        self.terms = list(terms)
        self.log_domain = log_domain
        self.params["mus"] = np.asarray(layer.mus, dtype=float)
        self.params["raw_sigmas"] = np.asarray(layer.raw_sigmas, dtype=float)
        self.params["raw_rhos"] = np.asarray(layer.raw_rhos, dtype=float)

    @property
    def layer(self):
        return dl.GaussianLayerState(mus=self.params["mus"],
                                     raw_sigmas=self.params["raw_sigmas"],
                                     raw_rhos=self.params["raw_rhos"])

    @classmethod
    def init(cls, K, hidden, terms, train_coords, seed=0, dropout_rate=0.0,
             l1_coeff=0.0, l2_coeff=0.0, log_domain=False):
        """K-means mus over training coordinates, effective sigmas in (1, 5)."""
        from .cluster import kmeans
        result = kmeans(np.asarray(train_coords, dtype=float), K, seed=seed)
        rng = np.random.default_rng(seed)
        layer = dl.GaussianLayerState(
            mus=result.centroids.copy(),
            raw_sigmas=np.asarray(heads.inv_softplus(rng.uniform(1.0, 5.0, size=(K, 2)))),
            raw_rhos=np.zeros(K))
        spec = NetworkSpec(layer_sizes=(K, hidden, len(terms)), dropout_rate=dropout_rate,
                           l1_coeff=l1_coeff, l2_coeff=l2_coeff, seed=seed)
        return cls(spec, layer, terms, log_domain=log_domain,
                   rng=np.random.default_rng(seed + 1))

    def _data_loss(self, X, Y, train_mode, rng):
        acts_in, cache = dl.gaussian_layer_forward_batch(self.layer, X, self.log_domain)
        acts = forward(self.params, self.spec, acts_in, train_mode=train_mode, rng=rng)
        loss, d_logits = dl.dialect_loss(acts.output, Y)
        grads, d_input = backward(self.params, self.spec, acts, d_logits)
        grads.update(dl.gaussian_layer_backward(self.layer, cache, d_input))
        return loss, grads

    def word_log_probs(self, coords):
        """N x V log-probabilities over the vocabulary for N coordinates."""
        acts_in, _ = dl.gaussian_layer_forward_batch(self.layer, _dense(coords), self.log_domain)
        logits = forward(self.params, self.spec, acts_in).output
        return heads.log_softmax(logits)

    def _extra_checkpoint(self):
        return {"terms": self.terms, "log_domain": self.log_domain}

    @classmethod
    def from_checkpoint(cls, ck):
        spec = _spec_from_checkpoint(ck)
        K = spec.layer_sizes[0]
        layer = dl.GaussianLayerState(mus=np.zeros((K, 2)),
                                      raw_sigmas=np.zeros((K, 2)), raw_rhos=np.zeros(K))
        model = cls(spec, layer, ck["terms"], log_domain=ck.get("log_domain", False))
        model._load_params(ck)
        return model


MODEL_CLASSES = {
    cls.model_name: cls
    for cls in (RegressionGeolocator, MdnGeolocator, SharedMdnGeolocator, DialectModel)
}


def points_from_array(arr):
    return [GeoPoint(float(a), float(b)) for a, b in np.asarray(arr, dtype=float)]
