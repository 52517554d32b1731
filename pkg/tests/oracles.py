"""Independent reference implementations the tests check the package against.

Everything here is deliberately naive (plain loops, no shared code with the
package internals) so it can serve as an oracle.
"""

import numpy as np

from atoshield.search_tree import SearchNode


def random_tree(rng, max_depth=5, max_width=5, t_up=5):
    """Random pruned-shaped tree: every leaf lands on an update step."""

    def grow(depth_step, depth_left):
        node = SearchNode(
            state=None,
            incoming_cmd=float(rng.uniform(-1, 1)),
            rollout_reward=float(rng.uniform(-10, 10)),
            depth_step=depth_step,
        )
        if depth_left > 0 and depth_step % t_up != 0:
            width = int(rng.integers(1, max_width + 1))
            node.children = [grow(depth_step + 1, depth_left - 1) for _ in range(width)]
        return node

    start = int(rng.integers(1, t_up + 1))
    depth_left = (t_up - start % t_up) % t_up
    return grow(start, min(depth_left, max_depth))


def brute_backup(node, discount):
    """Direct recursive evaluation of the backup rule, no mutation."""
    if not node.children:
        return node.rollout_reward
    total = 0.0
    for child in node.children:
        total += brute_backup(child, discount)
    return node.rollout_reward + discount * (total / len(node.children))


def pcc_brute(x, y):
    """Pearson correlation via explicit covariance sums."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / (vx**0.5 * vy**0.5)


def flatten_params(net):
    return np.concatenate([p.ravel() for p in net.parameters()])


def set_flat_params(net, flat):
    offset = 0
    for p in net.parameters():
        p[...] = flat[offset : offset + p.size].reshape(p.shape)
        offset += p.size


def numeric_gradient(loss_fn, net, eps=1e-6):
    """Central finite differences of a scalar loss over every net parameter."""
    base = flatten_params(net).copy()
    grad = np.zeros_like(base)
    for i in range(base.size):
        up = base.copy()
        up[i] += eps
        set_flat_params(net, up)
        hi = loss_fn()
        down = base.copy()
        down[i] -= eps
        set_flat_params(net, down)
        lo = loss_fn()
        grad[i] = (hi - lo) / (2.0 * eps)
    set_flat_params(net, base)
    return grad


def flatten_grads(param_grads):
    out = []
    for gw, gb in param_grads:
        out.append(np.asarray(gw).ravel())
        out.append(np.asarray(gb).ravel())
    return np.concatenate(out)


def relu_kink_margin(net, x):
    """Smallest |pre-activation| over the hidden stack; finite differences are
    only trustworthy when every unit sits clear of its kink."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    margin = np.inf
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w + b
        margin = min(margin, float(np.min(np.abs(z))))
        h = np.maximum(z, 0.0)
    return margin


def max_rel_error(analytic, numeric):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
