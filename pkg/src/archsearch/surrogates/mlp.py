"""Two-hidden-layer perceptron regressor trained with full-batch Adam."""

from __future__ import annotations

import logging

import numpy as np

from .base import Predictor, TrainingSet, _arr, encode_features, fingerprint

log = logging.getLogger(__name__)

HIDDEN = (64, 64)
EPOCHS = 300
LEARNING_RATE = 0.01
BETAS = (0.9, 0.999)
EPS = 1e-8


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MlpPredictor(Predictor):
    model_id = "MLP"

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], fingerprint: str = "", degenerate: bool = False):
        super().__init__(fingerprint)
        self.weights = weights
        self.biases = biases
        self.degenerate = degenerate

    def _raw(self, X):
        h = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
        return _sigmoid(h @ self.weights[-1] + self.biases[-1]).ravel()

    def state(self):
        return {
            "weights": [_arr(w) for w in self.weights],
            "biases": [_arr(b) for b in self.biases],
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_state(cls, s, fp=""):
        return cls([np.array(w) for w in s["weights"]], [np.array(b) for b in s["biases"]], fp, s.get("degenerate", False))


def _init(n_in: int, rng: np.random.Generator):
    sizes = (n_in, *HIDDEN, 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    weights[-1] *= 0.1
    return weights, biases


def _logit(p):
    p = np.clip(p, 1e-6, 1 - 1e-6)
    return np.log(p / (1 - p))


def fit_mlp(ts: TrainingSet, seed=0, epochs: int = EPOCHS, lr: float = LEARNING_RATE) -> MlpPredictor:
    """Fit the perceptron by minimizing mean squared error.

    Constant targets short-circuit to a flagged predictor whose output is
    that constant.
    """
    return _fit(ts.genomes, ts.targets, seed, epochs, lr)


def _fit(genomes, targets, seed=0, epochs=EPOCHS, lr=LEARNING_RATE) -> MlpPredictor:
    X = encode_features(genomes).astype(np.float32)
    y = np.asarray(targets, dtype=np.float32).reshape(-1, 1)
    fp = fingerprint(genomes, targets)
    rng = np.random.default_rng(seed)
    weights, biases = _init(X.shape[1], rng)
    weights = [w.astype(np.float32) for w in weights]
    biases = [b.astype(np.float32) for b in biases]

    if np.all(y == y[0]):
        log.warning("MLP: all %d targets equal %.6g; returning a constant predictor", len(y), y[0, 0])
        for W in weights:
            W[:] = 0.0
        biases[-1][:] = _logit(y[0, 0])
        return MlpPredictor(weights, biases, fp, degenerate=True)

    biases[-1][:] = _logit(y.mean())
    # one flat buffer so each Adam step is a handful of vector ops
    shapes = [p.shape for p in weights + biases]
    flat = np.concatenate([p.ravel() for p in weights + biases])
    grad = np.zeros_like(flat)
    views, gviews, at = [], [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        views.append(flat[at : at + size].reshape(shape))
        gviews.append(grad[at : at + size].reshape(shape))
        at += size
    L = len(weights)
    weights, biases = views[:L], views[L:]
    gw, gb = gviews[:L], gviews[L:]
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    b1, b2 = BETAS
    scale = np.float32(2.0 / len(X))
    for t in range(1, epochs + 1):
        acts = [X]
        for W, b in zip(weights[:-1], biases[:-1]):
            acts.append(np.maximum(acts[-1] @ W + b, 0.0))
        out = _sigmoid(acts[-1] @ weights[-1] + biases[-1])
        delta = scale * (out - y) * out * (1.0 - out)
        for layer in range(L - 1, -1, -1):
            np.matmul(acts[layer].T, delta, out=gw[layer])
            gb[layer][:] = delta.sum(axis=0)
            if layer:
                delta = (delta @ weights[layer].T) * (acts[layer] > 0)
        m *= b1
        m += (1 - b1) * grad
        v *= b2
        v += (1 - b2) * grad * grad
        flat -= np.float32(lr / (1 - b1**t)) * m / (np.sqrt(v / np.float32(1 - b2**t)) + np.float32(EPS))
    return MlpPredictor([w.astype(float) for w in weights], [b.astype(float) for b in biases], fp)
