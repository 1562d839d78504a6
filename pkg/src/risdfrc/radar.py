"""Effective-channel algebra, stacked space-time operators, SINR, and the
minimum-variance distortionless-response receive filter.

The stacked operator ``[I_L (x) H] J_r`` is never materialized; everything
works blockwise on the (L, M) view of a length-ML waveform, where block l
holds sample l.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .scene import ChannelSet

__all__ = [
    "StackedOperator",
    "composite_channel",
    "stacked_operators",
    "apply_stacked",
    "apply_stacked_adjoint",
    "interference_covariance",
    "mvdr_filter",
    "radar_sinr",
    "concentrated_objective",
]


def blocks(x: np.ndarray, M: int) -> np.ndarray:
    """View a length-ML stacked vector as (L, M), row l = sample l."""
    return x.reshape(-1, M)


def composite_channel(A: np.ndarray, B: np.ndarray, h_direct: np.ndarray,
                      phi: np.ndarray) -> np.ndarray:
    """Rank-one effective channel A + h phi^T B + B^H phi h^H + B^H phi phi^T B.

    Equals (h + B^H phi)(h^H + phi^T B); note the second factor carries the
    un-conjugated reflection phases, so the result is not Hermitian.
    """
    if B.shape != (phi.shape[0], h_direct.shape[0]):
        raise ValueError(f"B shape {B.shape} inconsistent with phi/h dims")
    if A.shape != (h_direct.shape[0],) * 2:
        raise ValueError("A must be square M x M")
    left = h_direct + B.conj().T @ phi
    right = h_direct.conj() + B.T @ phi     # row (h^H + phi^T B) as a column
    return np.outer(left, right)


@dataclass(frozen=True)
class StackedOperator:
    """Factored form of ``[I_L (x) H] J_r`` acting on stacked waveforms."""

    H: np.ndarray     # (M, M) composite channel
    r: int            # range-bin shift, 0 <= r <= L
    L: int            # samples per pulse

    def __post_init__(self):
        if not 0 <= self.r <= self.L:
            raise ValueError(f"shift {self.r} outside [0, L]")


def stacked_operators(channels: ChannelSet, phi: np.ndarray) -> list[StackedOperator]:
    """Operators for q = 0..Q (target first) at reflection state ``phi``."""
    L = channels.config.L
    ops = []
    for q, h in enumerate(channels.direct):
        H = composite_channel(channels.A[q], channels.B[q], h, phi)
        ops.append(StackedOperator(H=H, r=channels.range_bins[q], L=L))
    return ops


def apply_stacked(op: StackedOperator, x: np.ndarray) -> np.ndarray:
    """Blockwise product: output block l is H x[l - r], zero for l <= r."""
    M = op.H.shape[0]
    xb = blocks(x, M)
    out = np.zeros_like(xb)
    if op.r < op.L:
        out[op.r:] = xb[:op.L - op.r] @ op.H.T
    return out.reshape(-1)


def apply_stacked_adjoint(op: StackedOperator, v: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`apply_stacked`: block l is H^H v[l + r]."""
    M = op.H.shape[0]
    vb = blocks(v, M)
    out = np.zeros_like(vb)
    if op.r < op.L:
        out[:op.L - op.r] = vb[op.r:] @ op.H.conj()
    return out.reshape(-1)


def interference_covariance(x: np.ndarray, phi: np.ndarray,
                            channels: ChannelSet) -> np.ndarray:
    """Clutter-plus-noise covariance sum_q rcs_q u_q u_q^H + noise I."""
    c = channels.config
    ops = stacked_operators(channels, phi)
    ML = c.M * c.L
    cov = c.sigma2_z * np.eye(ML, dtype=complex)
    for q in range(1, c.Q + 1):
        u = apply_stacked(ops[q], x)
        cov += c.varsigma2[q] * np.outer(u, u.conj())
    return cov


def mvdr_filter(x: np.ndarray, phi: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Closed-form MVDR filter w = M^-1 s / (s^H M^-1 s), s the target return."""
    ops = stacked_operators(channels, phi)
    s = apply_stacked(ops[0], x)
    cov = interference_covariance(x, phi, channels)
    m = cho_solve(cho_factor(cov, lower=True), s)
    denom = np.real(s.conj() @ m)
    if denom <= 0:
        raise ValueError("degenerate target response: s^H M^-1 s <= 0")
    return m / denom


def radar_sinr(x: np.ndarray, w: np.ndarray, phi: np.ndarray,
               channels: ChannelSet) -> float:
    """Output SINR of filter ``w`` (linear); invariant to scaling of w."""
    if not np.any(w):
        raise ValueError("receive filter must be nonzero")
    c = channels.config
    ops = stacked_operators(channels, phi)
    s = apply_stacked(ops[0], x)
    num = c.varsigma2[0] * abs(w.conj() @ s) ** 2
    den = c.sigma2_z * float(np.real(w.conj() @ w))
    for q in range(1, c.Q + 1):
        u = apply_stacked(ops[q], x)
        den += c.varsigma2[q] * abs(w.conj() @ u) ** 2
    return float(num / den)


def concentrated_objective(x: np.ndarray, phi: np.ndarray,
                           channels: ChannelSet) -> float:
    """f1 = -s^H M^-1 s; the MVDR-optimal SINR is -rcs0 * f1."""
    ops = stacked_operators(channels, phi)
    s = apply_stacked(ops[0], x)
    cov = interference_covariance(x, phi, channels)
    m = cho_solve(cho_factor(cov, lower=True), s)
    return -float(np.real(s.conj() @ m))
