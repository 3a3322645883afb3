"""Shared test fixtures: naive reference kernels and reduced model stacks.

Every reference here is written as directly as possible (explicit loops,
float64) so it can serve as an independent oracle for the vectorized
float32 production kernels.
"""

import numpy as np

from edgefed import nn


# ---------------------------------------------------------------------------
# naive double-precision references
# ---------------------------------------------------------------------------


def ref_fc(x, w, b):
    x, w, b = (np.asarray(a, dtype=np.float64) for a in (x, w, b))
    out = np.zeros((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for j in range(w.shape[1]):
            acc = b[j]
            for k in range(x.shape[1]):
                acc += x[i, k] * w[k, j]
            out[i, j] = acc
    return out


def ref_conv2d(x, k, b):
    x, k, b = (np.asarray(a, dtype=np.float64) for a in (x, k, b))
    bsz, c, h, w = x.shape
    f, _, kh, kw = k.shape
    oh, ow = h - kh + 1, w - kw + 1
    out = np.zeros((bsz, f, oh, ow))
    for n in range(bsz):
        for fo in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = b[fo]
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += x[n, ci, i + di, j + dj] * k[fo, ci, di, dj]
                    out[n, fo, i, j] = acc
    return out


def ref_maxpool2(x):
    x = np.asarray(x, dtype=np.float64)
    bsz, c, h, w = x.shape
    out = np.zeros((bsz, c, h // 2, w // 2))
    for n in range(bsz):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[n, ci, i, j] = x[n, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()
    return out


def _sigmoid64(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def ref_lstm_cell(x_t, h_prev, c_prev, wx, wh, b):
    x_t, h_prev, c_prev, wx, wh, b = (
        np.asarray(a, dtype=np.float64) for a in (x_t, h_prev, c_prev, wx, wh, b)
    )
    hidden = h_prev.shape[1]
    z = x_t @ wx + h_prev @ wh + b
    i = _sigmoid64(z[:, 0 * hidden : 1 * hidden])
    f = _sigmoid64(z[:, 1 * hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = _sigmoid64(z[:, 3 * hidden : 4 * hidden])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def ref_softmax_xent(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    losses = [-np.log(probs[i, labels[i]]) for i in range(len(labels))]
    return float(np.mean(losses)), probs


def rel_error(got, want, floor=1e-8):
    """Max elementwise relative error over entries where |want| > floor."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    mask = np.abs(want) > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(got - want)[mask] / np.abs(want)[mask]))


def norm_rel_error(got, want):
    """Max absolute error normalized by the reference's largest magnitude.

    The right measure for float32 tensor outputs, whose summation error
    scales with operand magnitude rather than with each output element
    (elementwise ratios blow up wherever terms nearly cancel).
    """
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(float(np.max(np.abs(want))), 1e-30)
    return float(np.max(np.abs(got - want))) / scale


# ---------------------------------------------------------------------------
# reduced model stacks for gradient checking
# ---------------------------------------------------------------------------


def tiny_cnn(seed=0):
    rng = np.random.default_rng(seed)
    net = nn.Network(
        [
            nn.Conv2d("c1", 1, 2, 3, rng),
            nn.ReLU(),
            nn.Conv2d("c2", 2, 3, 3, rng),
            nn.ReLU(),
            nn.MaxPool2(),
            nn.Flatten(),
            nn.Dense("fc", 3 * 2 * 2, 10, rng),
        ]
    )
    x = np.random.default_rng(seed + 100).normal(size=(2, 1, 8, 8)) * 0.5
    return net, x.astype(np.float32)


def tiny_mlp(seed=0):
    rng = np.random.default_rng(seed)
    net = nn.Network(
        [
            nn.Dense("fc1", 12, 8, rng),
            nn.ReLU(),
            nn.Dense("fc2", 8, 6, rng),
            nn.ReLU(),
            nn.Dense("fc3", 6, 4, rng),
        ]
    )
    x = np.random.default_rng(seed + 100).normal(size=(3, 12)) * 0.5
    return net, x.astype(np.float32)


def tiny_lstm(seed=0):
    rng = np.random.default_rng(seed)
    net = nn.Network(
        [
            nn.LSTM("l1", 5, 4, rng, return_sequences=True),
            nn.LSTM("l2", 4, 3, rng, return_sequences=False),
            nn.Dense("fc", 3, 4, rng),
        ]
    )
    x = np.random.default_rng(seed + 100).normal(size=(2, 2, 5)) * 0.5
    return net, x.astype(np.float32)


TINY_BUILDERS = {"cnn": tiny_cnn, "lstm": tiny_lstm, "mlp": tiny_mlp}


def gradcheck(net, x, labels=None, h=1e-4, floor=1e-8):
    """Max relative error of analytic vs. central-difference grads.

    Both sides run in a float64 shadow of the network: the kernels are
    dtype-generic, so this exercises the same code while keeping the
    difference quotient clean at h = 1e-4.
    """
    shadow = net.clone(dtype=np.float64)
    x64 = x.astype(np.float64)
    out, cache = shadow.forward(x64)
    if labels is None:
        grad_out = np.ones_like(out)
    else:
        _, _, grad_out = nn.softmax_cross_entropy(out, labels)
    nn.model_backward(shadow, cache, grad_out)
    worst = 0.0
    for idx, param in enumerate(shadow.parameters()):
        numeric = nn.finite_diff_grad(shadow, x64, labels, idx, h)
        worst = max(worst, rel_error(param.grad, numeric, floor))
    return worst
