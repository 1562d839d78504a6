"""Shared fixtures: synthetic small channel sets and dense reference
constructions used as oracles throughout the suite."""

from __future__ import annotations

import numpy as np
import pytest

from risdfrc.scene import ChannelSet, SceneConfig


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_channels(rng: np.random.Generator, M=3, N=4, K=2, L=4, Q=2,
                    sigma2_z=0.5, P=None, ris_scale=1.0) -> ChannelSet:
    """Synthetic O(1)-scale channel set with consistent derived factors.

    Unit-scale entries keep oracle comparisons well conditioned; the
    physical path-loss scales are exercised separately by the scene tests.
    """
    P = float(P if P is not None else M)
    bins = tuple(int(rng.integers(0, L + 1)) for _ in range(Q))
    cfg = SceneConfig(
        M=M, N=max(N, 1), K=K, L=L, Q=Q, P=P,
        sigma2_z=sigma2_z,
        sigma2_k=(1.0,) * K,
        varsigma2=tuple(float(v) for v in rng.uniform(0.3, 1.5, Q + 1)),
        clutter_pos=tuple((b, 0.0) for b in bins),
        d_k=(30.0,) * K, d_rk=(3.0,) * K,
        Gamma_k=(2.0,) * K,
        seed=0,
    )
    h_t = crandn(rng, M)
    h_rt = crandn(rng, N) * ris_scale
    G = crandn(rng, N, M)
    h_c = tuple(crandn(rng, M) for _ in range(Q))
    h_rc = tuple(crandn(rng, N) * ris_scale for _ in range(Q))
    h_user = tuple(crandn(rng, M) for _ in range(K))
    h_ruser = tuple(crandn(rng, N) * ris_scale for _ in range(K))
    direct = (h_t, *h_c)
    reflect = (h_rt, *h_rc)
    A = tuple(np.outer(h, h.conj()) for h in direct)
    B = tuple(np.diag(hr.conj()) @ G for hr in reflect)
    B_user = tuple(np.diag(hr.conj()) @ G for hr in h_ruser)
    return ChannelSet(config=cfg, h_t=h_t, h_rt=h_rt, G=G, h_c=h_c, h_rc=h_rc,
                      h_user=h_user, h_ruser=h_ruser, A=A, B=B, B_user=B_user,
                      range_bins=(0, *bins))


def dense_shift_matrix(M: int, L: int, r: int) -> np.ndarray:
    """J with J[i, j] = 1 where i - j = M r."""
    ML = M * L
    J = np.zeros((ML, ML))
    for i in range(ML):
        j = i - M * r
        if 0 <= j < ML:
            J[i, j] = 1.0
    return J


def dense_stacked(H: np.ndarray, L: int, r: int) -> np.ndarray:
    """Dense [I_L kron H] J_r."""
    return np.kron(np.eye(L), H) @ dense_shift_matrix(H.shape[0], L, r)


def dense_composite(h, h_r, G, phi) -> np.ndarray:
    """Effective channel from the raw cascade (h + G^H Phi h_r)(h^H + h_r^H Phi G)."""
    Phi = np.diag(phi)
    left = h + G.conj().T @ Phi @ h_r
    right = h.conj().T + h_r.conj().T @ Phi @ G
    return np.outer(left, right)


def dense_clutter_cov(x, phi, channels) -> np.ndarray:
    c = channels.config
    ML = c.M * c.L
    cov = c.sigma2_z * np.eye(ML, dtype=complex)
    reflect = (channels.h_rt, *channels.h_rc)
    for q in range(1, c.Q + 1):
        H = dense_composite(channels.direct[q], reflect[q], channels.G, phi)
        Ht = dense_stacked(H, c.L, channels.range_bins[q])
        u = Ht @ x
        cov += c.varsigma2[q] * np.outer(u, u.conj())
    return cov


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
