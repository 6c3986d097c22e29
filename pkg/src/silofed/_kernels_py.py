"""Pure-numpy implementations of the numerical kernels.

These are the reference semantics; silofed._speedups provides a compiled
drop-in replacement for the same four functions. Training and evaluation
agree with the compiled kernels to floating-point roundoff; pairwise
squared distances accumulate in a fixed left-to-right order so both
backends (and a plain-Python oracle) produce bit-identical results.
"""

import numpy as np

BACKEND = "python"


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sgd_epochs(w, feats, labels, order, lr, batch_size):
    """Run minibatch SGD on softmax cross-entropy and return updated weights.

    w: (C, D) weights (bias column included in D). feats: (n, D).
    labels: (n,) int64. order: (E, n) row permutations, one per epoch;
    minibatches are consecutive slices of each permutation.
    """
    w = np.array(w, dtype=np.float64)
    n = feats.shape[0]
    for epoch_order in order:
        for start in range(0, n, batch_size):
            idx = epoch_order[start:start + batch_size]
            xb = feats[idx]
            yb = labels[idx]
            p = _softmax(xb @ w.T)
            p[np.arange(len(yb)), yb] -= 1.0
            grad = p.T @ xb
            grad /= len(yb)
            w -= lr * grad
    return w


def softmax_grad(w, feats, labels):
    """Mean cross-entropy gradient over the full set, shape (C, D)."""
    p = _softmax(feats @ w.T)
    p[np.arange(feats.shape[0]), labels] -= 1.0
    return (p.T @ feats) / feats.shape[0]


def softmax_eval(w, feats, labels):
    """Return (accuracy, mean cross-entropy loss).

    Argmax ties resolve to the lowest class index.
    """
    logits = feats @ w.T
    pred = logits.argmax(axis=1)
    accuracy = float((pred == labels).sum()) / feats.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float((lse - z[np.arange(feats.shape[0]), labels]).mean())
    return accuracy, loss


def pairwise_sqdist(mats):
    """All-pairs squared L2 distances between the rows of (n, D) `mats`.

    Per-pair accumulation is strictly left-to-right over coordinates
    (np.cumsum is sequential), matching the compiled kernel bit for bit.
    """
    n = mats.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            sq = (mats[i] - mats[j]) ** 2
            d2 = float(np.cumsum(sq)[-1])
            out[i, j] = d2
            out[j, i] = d2
    return out
