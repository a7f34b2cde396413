"""Independent reference implementations shared by the unit and acceptance tests."""
import numpy as np

from noisepu.learner import Classifier


# Forward-only reference of the training objective, used as the finite-difference oracle.
def reference_loss(params, x, t, entropy_weight):
    h = x
    for layer in range(0, len(params) - 2, 2):
        h = np.maximum(h @ params[layer] + params[layer + 1], 0.0)
    z = h @ params[-2] + params[-1]
    total = 0.0
    for zi, ti in zip(z, t):
        e = np.exp(zi - zi.max())
        p = e / e.sum()
        logp = np.log(np.maximum(p, 1e-12))
        total += -np.dot(ti, logp) - entropy_weight * np.dot(p, logp)
    return total / len(x)


def numeric_grad(params, x, t, ew, eps=1e-5):
    grads = []
    for w in params:
        g = np.zeros_like(w)
        for i in np.ndindex(w.shape):
            old = w[i]
            w[i] = old + eps
            up = reference_loss(params, x, t, ew)
            w[i] = old - eps
            down = reference_loss(params, x, t, ew)
            w[i] = old
            g[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def brute_force_select(scores, alpha, theta):
    """{pool position: votes} by explicit loops over members and samples."""
    picked = {}
    for j in range(scores.shape[1]):
        votes = 0
        for n in range(scores.shape[0]):
            if scores[n, j] >= alpha:
                votes += 1
        if votes >= theta:
            picked[j] = votes
    return picked


class FixedScorer(Classifier):
    """Filter stand-in that returns preset positive scores in pool order."""

    def __init__(self, scores):
        super().__init__([np.zeros((1, 2)), np.zeros(2)])
        self.scores = scores

    def positive_score(self, x):
        return self.scores[: len(x)]
