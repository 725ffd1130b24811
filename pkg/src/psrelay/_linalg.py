"""Matrix-form capacity evaluation shared by both solvers."""

from __future__ import annotations

import numpy as np

from .channel import ChannelPair


def matrix_capacity(ch: ChannelPair, q_cov: np.ndarray, f_mat: np.ndarray,
                    eps: float, sigma1_sq: float, sigma2_sq: float) -> float:
    """0.5*log2 det(I + (1-eps) * H2 F H1 Q H1^H F^H H2^H * Kn^{-1}).

    Kn = sigma2^2 I + sigma1^2 H2 F F^H H2^H is the destination-side noise
    covariance.  Evaluated through a generalized Hermitian eigenvalue solve,
    which stays accurate even when Kn is badly scaled against the signal.
    """
    from scipy.linalg import eigh

    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    n = ch.h2.shape[0]
    h2f = ch.h2 @ f_mat
    sig = h2f @ ch.h1
    s_mat = (1.0 - eps) * (sig @ q_cov @ sig.conj().T)
    k_noise = sigma2_sq * np.eye(n) + sigma1_sq * (h2f @ h2f.conj().T)
    s_mat = 0.5 * (s_mat + s_mat.conj().T)
    k_noise = 0.5 * (k_noise + k_noise.conj().T)
    lam = eigh(s_mat, k_noise, eigvals_only=True)
    lam = np.clip(lam, 0.0, None)
    return float(0.5 * np.sum(np.log2(1.0 + lam)))
