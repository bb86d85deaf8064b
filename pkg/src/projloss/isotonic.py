"""Pool-adjacent-violators for nonincreasing chains."""

import numpy as np


def isotonic_regression_decreasing(y, sample_weight=None):
    """Least-squares fit of ``y`` under ``x_1 >= x_2 >= ... >= x_n``.

    Runs in O(n) amortized time by maintaining a stack of pooled blocks.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if sample_weight is None:
        wts = np.ones(n)
    else:
        wts = np.asarray(sample_weight, dtype=float)
    # Block stack: weighted sum, total weight, block length.
    sums, weights, sizes = [], [], []
    for i in range(n):
        s, w, c = y[i] * wts[i], wts[i], 1
        # A violation is a block whose mean exceeds the one before it.
        while sums and sums[-1] * w < s * weights[-1]:
            s += sums.pop()
            w += weights.pop()
            c += sizes.pop()
        sums.append(s)
        weights.append(w)
        sizes.append(c)
    return np.repeat(np.array(sums) / np.array(weights), sizes)


def isotonic_logsumexp_decreasing(s, w):
    """Nonincreasing dual for the KL projection onto a permutahedron.

    Minimizes ``sum_i exp(s_i - v_i) + w_i v_i`` over ``v_1 >= ... >= v_n``.
    A pooled block B takes the value ``logsumexp(s_B) - log(sum(w_B))``.
    """
    s = np.asarray(s, dtype=float)
    w = np.asarray(w, dtype=float)
    lse, wsum, sizes, vals = [], [], [], []
    for i in range(s.shape[0]):
        a, b, c = s[i], w[i], 1
        v = a - np.log(b)
        while vals and vals[-1] < v:
            a = np.logaddexp(a, lse.pop())
            b += wsum.pop()
            c += sizes.pop()
            vals.pop()
            v = a - np.log(b)
        lse.append(a)
        wsum.append(b)
        sizes.append(c)
        vals.append(v)
    return np.repeat(np.array(vals), sizes)
