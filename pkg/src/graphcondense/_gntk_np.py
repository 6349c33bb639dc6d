"""Pure-numpy fallback for the arc-cosine fc step of the kernel recursion.

The compiled extension (``graphcondense._ckernels``) implements the same
contract with a fused single pass; this version allocates a handful of
temporaries but is always available.
"""

import numpy as np

C_RELU = 2.0


def relu_dual(sig_uu, sig_uv, sig_vv, c=C_RELU):
    """Arc-cosine expectations for a ReLU unit over a bivariate Gaussian.

    Given variances sig_uu, sig_vv and covariance sig_uv, returns
    (next_sig, next_dot) where next_sig = c * E[relu(x) relu(y)] and
    next_dot = c * E[step(x) step(y)].  Zero-variance inputs short-circuit
    to zeros.
    """
    sig_uu = np.asarray(sig_uu, dtype=np.float64)
    sig_vv = np.asarray(sig_vv, dtype=np.float64)
    sig_uv = np.asarray(sig_uv, dtype=np.float64)
    if (sig_uu < 0).any() or (sig_vv < 0).any():
        raise ValueError("negative variance input")
    norm = np.sqrt(sig_uu * sig_vv)
    safe = norm > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.clip(np.where(safe, sig_uv / np.where(safe, norm, 1.0), 0.0), -1.0, 1.0)
    theta = np.arccos(rho)
    next_sig = (c / (2.0 * np.pi)) * norm * (np.sin(theta) + (np.pi - theta) * np.cos(theta))
    next_dot = (c / (2.0 * np.pi)) * (np.pi - theta)
    next_sig = np.where(safe, next_sig, 0.0)
    next_dot = np.where(safe, next_dot, 0.0)
    return next_sig, next_dot


def fc_step(sig, ker, diag1, diag2, c=C_RELU):
    """One fully-connected ReLU step of the kernel recursion, in place.

    sig:   (n1, n2) covariance block, replaced by the post-activation one.
    ker:   (n1, n2) tangent-kernel block, updated as ker*dot + sig.
    diag1: (n1,) variances of the left nodes (diag of the within-block sig).
    diag2: (n2,) variances of the right nodes.
    """
    next_sig, next_dot = relu_dual(diag1[:, None], sig, diag2[None, :], c=c)
    ker *= next_dot
    ker += next_sig
    sig[...] = next_sig
    return sig, ker
