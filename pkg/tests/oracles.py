"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from clic import nn
from clic.moco import info_nce


def sobel_bruteforce(p):
    """Per-pixel Sobel magnitude with explicit kernels and loops."""
    kx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
    ky = kx.T
    h, w = p.shape
    out = np.zeros((h - 2, w - 2))
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            win = p[y - 1 : y + 2, x - 1 : x + 2]
            out[y - 1, x - 1] = math.sqrt((win * kx).sum() ** 2 + (win * ky).sum() ** 2)
    return out


def pearson_ref(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def ranks_ref(x):
    """Average ranks (1-based) by full sort, ties share the mean position."""
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman_ref(x, y):
    return pearson_ref(ranks_ref(list(x)), ranks_ref(list(y)))


def _conv_ref(x, w, b):
    """3x3, stride 2, pad 1 convolution via explicit sliding windows."""
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::2, ::2]
    return np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2) + b[None, :, None, None]


def _info_nce_ref(q, k, negs, tau):
    logits = np.concatenate(([q @ k], negs @ q)) / tau
    return float(np.logaddexp.reduce(logits) - logits[0])


def reference_loss(params, x, k, negs, tau, gates=None):
    """Encoder + InfoNCE written independently of the library.

    With ``gates`` (one boolean array per ReLU) the ReLUs are replaced by
    fixed masks, which equals the network on the linear region the gates
    came from and is smooth everywhere.
    """
    a = 2.0 * (x - 0.5)
    masks = []
    for i in range(1, 5):
        z = _conv_ref(a, params[f"conv{i}.weight"], params[f"conv{i}.bias"])
        m = z > 0 if gates is None else gates[i - 1]
        masks.append(z > 0)
        a = z * m
    h = a.mean(axis=(2, 3)) @ params["proj1.weight"].T + params["proj1.bias"]
    masks.append(h > 0)
    h = h * (h > 0 if gates is None else gates[4])
    y = h @ params["proj2.weight"].T + params["proj2.bias"]
    e = y / np.linalg.norm(y, axis=1, keepdims=True)
    return sum(_info_nce_ref(q, k, negs, tau) for q in e), masks


def _sample_params(params, n_params, rng):
    names = list(params)
    sizes = np.array([params[n].size for n in names])
    # a few from every tensor, the rest proportional to tensor size
    picks = [(n, int(i)) for n in names for i in rng.choice(params[n].size, min(8, params[n].size), replace=False)]
    flat = rng.choice(sizes.sum(), size=max(n_params - len(picks), 0), replace=False)
    bounds = np.cumsum(sizes)
    for f in flat:
        li = int(np.searchsorted(bounds, f, side="right"))
        picks.append((names[li], int(f - (bounds[li - 1] if li else 0))))
    return picks


def gradient_check(params, batch, k_pos, negs, tau, n_params, eps, rng):
    """Central differences on sampled parameters of encoder + InfoNCE.

    Returns rows ``(name, index, analytic, numeric, gated, kink)``: ``numeric``
    differentiates the network itself, ``gated`` differentiates it with every
    ReLU held at the unperturbed point's on/off pattern, and ``kink`` flags
    parameters where some ReLU switched inside +-eps (there the plain
    difference straddles a corner and does not measure the derivative).
    """
    cache = nn.forward(params, batch)
    upstream = np.stack([info_nce(q, k_pos, negs, tau)[1] for q in cache.embedding])
    grads = nn.backward(params, cache, upstream)
    _, base_masks = reference_loss(params, batch, k_pos, negs, tau)

    rows = []
    for name, idx in _sample_params(params, n_params, rng):
        arr = params.arrays[name].reshape(-1)
        orig = arr[idx]
        vals = {}
        for sign in (1, -1):
            arr[idx] = orig + sign * eps
            plain, masks = reference_loss(params, batch, k_pos, negs, tau)
            gated, _ = reference_loss(params, batch, k_pos, negs, tau, base_masks)
            vals[sign] = (plain, gated, masks)
        arr[idx] = orig
        kink = any(
            not (np.array_equal(a, b) and np.array_equal(a, c))
            for a, b, c in zip(base_masks, vals[1][2], vals[-1][2])
        )
        numeric = (vals[1][0] - vals[-1][0]) / (2 * eps)
        gated = (vals[1][1] - vals[-1][1]) / (2 * eps)
        rows.append((name, idx, grads[name].reshape(-1)[idx], numeric, gated, kink))
    return rows


def relative_error(a, b, floor=1e-10):
    denom = max(abs(a), abs(b))
    if denom < floor:
        return 0.0
    return abs(a - b) / denom
