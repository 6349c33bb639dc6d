"""Independent reference implementations used only to generate expected
values; nothing here may call the code paths under test."""

import numpy as np


def dense_normalized_adj(edges, n):
    """Brute-force D^{-1/2}(A+I)D^{-1/2} as a dense matrix."""
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    a += np.eye(n)
    d = a.sum(axis=1)
    dis = np.diag(1.0 / np.sqrt(d))
    return dis @ a @ dis


def dense_gcn_forward(a_hat, x, w1, w2):
    return a_hat @ np.maximum(a_hat @ x @ w1, 0.0) @ w2


def central_fd(f, x0, h=1e-6):
    """Central finite differences of a scalar function over every entry."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def mc_relu_dual(sig_uu, sig_uv, sig_vv, c=2.0, n_samples=10_000_000, seed=0,
                 chunk=1_000_000):
    """Monte-Carlo E[relu(x)relu(y)]*c and E[step(x)step(y)]*c over the
    bivariate normal with the given covariance."""
    cov = np.array([[sig_uu, sig_uv], [sig_uv, sig_vv]])
    l = np.linalg.cholesky(cov + 1e-15 * np.eye(2))
    rng = np.random.default_rng(seed)
    s_sum = 0.0
    d_sum = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        z = rng.standard_normal((m, 2)) @ l.T
        s_sum += np.sum(np.maximum(z[:, 0], 0) * np.maximum(z[:, 1], 0))
        d_sum += np.sum((z[:, 0] > 0) & (z[:, 1] > 0))
        done += m
    return c * s_sum / n_samples, c * d_sum / n_samples


def mc_wide_ntk(x, a_hat, layers, width, n_nets, seed, c=2.0):
    """NTK of a finite-width aggregated ReLU network with linear readout,
    averaged over random draws.  First layer uses unit-variance weights
    (unnormalized input inner products); later layers and the readout
    scale by sqrt(c/fan_in)."""
    rng = np.random.default_rng(seed)
    n = len(x)
    acc = np.zeros((n, n))
    for _ in range(n_nets):
        h = x.copy()
        aggs, ws, pre, scales = [], [], [], []
        for l in range(layers):
            g = a_hat @ h
            fan = g.shape[1]
            s = 1.0 if l == 0 else np.sqrt(c / fan)
            w = rng.standard_normal((fan, width))
            z = s * (g @ w)
            aggs.append(g)
            ws.append(w)
            pre.append(z)
            scales.append(s)
            h = np.maximum(z, 0.0)
        v = rng.standard_normal(width)
        sr = np.sqrt(c / width)
        grads = []
        for u in range(n):
            gs = [sr * np.maximum(pre[-1], 0.0)[u]]
            gh = np.zeros((n, width))
            gh[u] = sr * v
            for l in range(layers - 1, -1, -1):
                gz = gh * (pre[l] > 0)
                gs.append((scales[l] * aggs[l].T @ gz).ravel())
                if l > 0:
                    gh = a_hat.T @ (scales[l] * gz @ ws[l].T)
            grads.append(np.concatenate(gs))
        gm = np.asarray(grads)
        acc += gm @ gm.T
    return acc / n_nets
