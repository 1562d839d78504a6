"""Per-iteration majorization quantities.

Everything here is anchored at the current iterate (x_t, phi_t):

* the tangent majorizer of the concentrated objective f1 = -s^H M^-1 s,
* the waveform-subproblem quadratic (D_t, d_t),
* the reflection-subproblem reformulation into N-dimensional factors
  (Dtilde_q, ctilde_q, F, f) that never materialize the N^2-dimensional
  lifted quadratic, and
* the convex reflection surrogate (Ftilde, ftilde) with its three
  curvature bounds lambda1..lambda3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .radar import StackedOperator, apply_stacked, apply_stacked_adjoint, \
    interference_covariance, stacked_operators
from .scene import ChannelSet

__all__ = [
    "MmAnchor",
    "build_anchor",
    "majorizer_value",
    "waveform_quadratic",
    "PhiReform",
    "phi_reformulation",
    "f2_from_reform",
    "f2_direct",
    "PhiQuadratic",
    "phi_surrogate",
    "phi_quad_value",
    "f3_value",
    "f3_grad",
    "f3_hess",
]


@dataclass(frozen=True)
class MmAnchor:
    """Anchor state (x_t, phi_t) with s_t, M_t, and m = M_t^-1 s_t cached."""

    x: np.ndarray          # (ML,)
    phi: np.ndarray        # (N,)
    s: np.ndarray          # (ML,) target return at the anchor
    cov: np.ndarray        # (ML, ML) clutter+noise covariance at the anchor
    m: np.ndarray          # (ML,) cov^-1 s
    Mtilde: np.ndarray     # (M, L) column-major reshape of m
    c1: float              # tangency constant of the f1 majorizer

    @property
    def f1(self) -> float:
        """Concentrated objective value at the anchor."""
        return -float(np.real(self.s.conj() @ self.m))


def build_anchor(x: np.ndarray, phi: np.ndarray, channels: ChannelSet) -> MmAnchor:
    """Assemble s_t, M_t, M_t^-1 s_t for the current iterate."""
    c = channels.config
    ops = stacked_operators(channels, phi)
    s = apply_stacked(ops[0], x)
    cov = interference_covariance(x, phi, channels)
    m = cho_solve(cho_factor(cov, lower=True), s)
    Mtilde = m.reshape(c.L, c.M).T
    c1 = c.sigma2_z * float(np.real(m.conj() @ m))
    return MmAnchor(x=x.copy(), phi=phi.copy(), s=s, cov=cov, m=m,
                    Mtilde=Mtilde, c1=c1)


def majorizer_value(x: np.ndarray, phi: np.ndarray, anchor: MmAnchor,
                    channels: ChannelSet) -> float:
    """Upper bound of f1(x, phi), tangent at the anchor.

    Value is sum_q rcs_q |m^H u_q(x, phi)|^2 - 2 Re{m^H u_0(x, phi)} + c1
    with u_q the stacked returns and c1 fixed so the bound is tight at
    (x_t, phi_t).
    """
    c = channels.config
    ops = stacked_operators(channels, phi)
    m = anchor.m
    val = anchor.c1 - 2.0 * np.real(m.conj() @ apply_stacked(ops[0], x))
    for q in range(1, c.Q + 1):
        val += c.varsigma2[q] * abs(m.conj() @ apply_stacked(ops[q], x)) ** 2
    return float(val)


def waveform_quadratic(anchor: MmAnchor, y: np.ndarray, mu1: np.ndarray,
                       rho: float, channels: ChannelSet) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic (D_t, d_t) of the waveform subproblem x^H D x + Re{d^H x}.

    D_t = sum_q rcs_q w_q w_q^H + (rho/2) I with w_q the adjoint-propagated
    m, and d_t = -2 H0^H m - rho y + mu1.
    """
    c = channels.config
    ops = stacked_operators(channels, anchor.phi)
    ML = c.M * c.L
    D = 0.5 * rho * np.eye(ML, dtype=complex)
    for q in range(1, c.Q + 1):
        w = apply_stacked_adjoint(ops[q], anchor.m)
        D += c.varsigma2[q] * np.outer(w, w.conj())
    d = -2.0 * apply_stacked_adjoint(ops[0], anchor.m) - rho * y + mu1
    return D, d


def _shifted_reshape(x: np.ndarray, M: int, L: int, r: int) -> np.ndarray:
    """X_q with column l holding x[l - r] (zero for l <= r); J_r by indexing."""
    X0 = x.reshape(L, M).T
    Xq = np.zeros_like(X0)
    if r < L:
        Xq[:, r:] = X0[:, :L - r]
    return Xq


@dataclass(frozen=True)
class PhiReform:
    """N-dimensional factors of the reflection objective at (anchor, x).

    Index 0 is the target, 1..Q the clutter sources.  ``sMa[q]`` is the
    scalar m^H a_q with a_q the direct-only stacked return.
    """

    Dt: tuple[np.ndarray, ...]     # (Q+1) x (N, N)
    ct: tuple[np.ndarray, ...]     # (Q+1) x (N,)
    sMa: np.ndarray                # (Q+1,) complex
    F: np.ndarray                  # (N, N) Hermitian PSD
    f: np.ndarray                  # (N,)
    lambda1: float                 # 2 sum rcs ||Dt_q||_F^2, eig upper bound
    c2: float                      # constant block of the reformulated value
    x: np.ndarray                  # waveform the factors were built at


def phi_reformulation(anchor: MmAnchor, x: np.ndarray,
                      channels: ChannelSet) -> PhiReform:
    """Low-dimensional factors D~_q = B_q M~ X_q^H B_q^H, c~_q, F, f.

    ``x`` is the waveform the reflection subproblem is posed at (the one
    updated earlier in the same outer iteration); the inverse-covariance
    data comes from the anchor.
    """
    c = channels.config
    Mt = anchor.Mtilde
    Dt, ct, sMa = [], [], []
    for q in range(c.Q + 1):
        r = channels.range_bins[q]
        Xq = _shifted_reshape(x, c.M, c.L, r)
        B = channels.B[q]
        h = channels.direct[q]
        Dt.append(B @ Mt @ Xq.conj().T @ B.conj().T)
        ct.append(B.conj() @ Xq.conj() @ Mt.T @ h.conj() + B @ Mt @ Xq.conj().T @ h)
        a_q = apply_stacked(StackedOperator(H=channels.A[q], r=r, L=c.L), x)
        sMa.append(complex(anchor.m.conj() @ a_q))
    N = c.N
    F = np.zeros((N, N), dtype=complex)
    f = -2.0 * ct[0]
    c2 = -2.0 * np.real(sMa[0])
    for q in range(1, c.Q + 1):
        rcs = c.varsigma2[q]
        F += rcs * np.outer(ct[q], ct[q].conj())
        f = f + 2.0 * rcs * sMa[q] * ct[q]
        c2 += rcs * abs(sMa[q]) ** 2
    lambda1 = 2.0 * sum(c.varsigma2[q] * np.linalg.norm(Dt[q], "fro") ** 2
                        for q in range(1, c.Q + 1))
    return PhiReform(Dt=tuple(Dt), ct=tuple(ct), sMa=np.asarray(sMa),
                     F=F, f=f, lambda1=float(lambda1), c2=float(c2), x=x.copy())


def _penalty(phi: np.ndarray, varphi: np.ndarray, mu2: np.ndarray,
             rho: float) -> float:
    return 0.5 * rho * float(np.linalg.norm(phi - varphi + mu2 / rho) ** 2)


def f2_from_reform(phi: np.ndarray, reform: PhiReform, varphi: np.ndarray,
                   mu2: np.ndarray, rho: float, channels: ChannelSet) -> float:
    """Reflection objective evaluated from the reformulated factors, O(Q N^2)."""
    c = channels.config
    ph_c = phi.conj()
    val = float(np.real(ph_c @ reform.F @ phi) + np.real(ph_c @ reform.f)) + reform.c2
    e0 = ph_c @ reform.Dt[0] @ ph_c
    val -= 2.0 * np.real(e0)
    for q in range(1, c.Q + 1):
        rcs = c.varsigma2[q]
        e_q = ph_c @ reform.Dt[q] @ ph_c          # v^H vec(D~_q)
        w_q = reform.ct[q].conj() @ phi           # c~_q^H phi
        val += rcs * abs(e_q) ** 2
        val += 2.0 * rcs * np.real(reform.sMa[q] * e_q)
        val += 2.0 * rcs * np.real(e_q * w_q)
    return val + _penalty(phi, varphi, mu2, rho)


def f2_direct(phi: np.ndarray, anchor: MmAnchor, x: np.ndarray,
              varphi: np.ndarray, mu2: np.ndarray, rho: float,
              channels: ChannelSet) -> float:
    """Dense evaluation of the reflection objective (reference path)."""
    c = channels.config
    ops = stacked_operators(channels, phi)
    m = anchor.m
    val = -2.0 * np.real(m.conj() @ apply_stacked(ops[0], x))
    for q in range(1, c.Q + 1):
        val += c.varsigma2[q] * abs(m.conj() @ apply_stacked(ops[q], x)) ** 2
    return float(val) + _penalty(phi, varphi, mu2, rho)


def _realify(phi: np.ndarray) -> np.ndarray:
    return np.concatenate([phi.real, phi.imag])


def _lift(A: np.ndarray, variant: int) -> np.ndarray:
    """Real 2N x 2N block lift of a complex matrix (variants per the two
    quadratic-form expansions of Re{.} and Im{.})."""
    R, I = A.real, A.imag
    if variant == 1:
        return np.block([[R, I], [I, -R]])
    return np.block([[I, -R], [-R, -I]])


def _cbar(ct: np.ndarray, variant: int) -> np.ndarray:
    if variant == 1:
        return np.concatenate([ct.real, ct.imag])
    return np.concatenate([ct.imag, -ct.real])


def _f3_terms(reform: PhiReform, channels: ChannelSet):
    c = channels.config
    for q in range(1, c.Q + 1):
        for i in (1, 2):
            yield c.varsigma2[q], _cbar(reform.ct[q], i), _lift(reform.Dt[q], i)


def f3_value(phibar: np.ndarray, reform: PhiReform, channels: ChannelSet) -> float:
    """Cubic coupling term Re{v^H L phi} in real coordinates."""
    val = 0.0
    for rcs, cb, Db in _f3_terms(reform, channels):
        val += 2.0 * rcs * (cb @ phibar) * (phibar @ Db @ phibar)
    return float(val)


def f3_grad(phibar: np.ndarray, reform: PhiReform, channels: ChannelSet) -> np.ndarray:
    g = np.zeros_like(phibar)
    for rcs, cb, Db in _f3_terms(reform, channels):
        Ds = Db + Db.T
        g += 2.0 * rcs * ((cb @ phibar) * (Ds @ phibar) + (phibar @ Db @ phibar) * cb)
    return g


def f3_hess(phibar: np.ndarray, reform: PhiReform, channels: ChannelSet) -> np.ndarray:
    n2 = phibar.shape[0]
    H = np.zeros((n2, n2))
    for rcs, cb, Db in _f3_terms(reform, channels):
        Ds = Db + Db.T
        H += 2.0 * rcs * (np.outer(cb, Ds @ phibar) + np.outer(Ds @ phibar, cb)
                          + (cb @ phibar) * Ds)
    return H


@dataclass(frozen=True)
class PhiQuadratic:
    """Convex reflection surrogate phi^H Ftilde phi + Re{phi^H ftilde}."""

    Ft: np.ndarray         # (N, N) Hermitian, >= (rho/2) I
    ft: np.ndarray         # (N,)
    Fv_tilde: np.ndarray   # (N, N) reshaped lifted linearization
    lambda1: float
    lambda2: float
    lambda3: float


def phi_surrogate(reform: PhiReform, phi_t: np.ndarray, varphi: np.ndarray,
                  mu2: np.ndarray, rho: float, channels: ChannelSet,
                  lambda3_scale: float = 1.5,
                  lambda3_override: float | None = None) -> PhiQuadratic:
    """Convex quadratic upper bound of the reflection objective at phi_t.

    lambda1 bounds the eigenvalues of the lifted Gram term, lambda2 is the
    exact top eigenvalue of the 2N x 2N real linearization, and lambda3
    bounds the cubic-term curvature at phi_t (scaled by ``lambda3_scale``;
    the caller doubles it via ``lambda3_override`` if the post-hoc
    majorization check fails).
    """
    c = channels.config
    N = c.N
    lam1 = reform.lambda1

    Fv = -2.0 * reform.Dt[0] - 2.0 * lam1 * np.outer(phi_t, phi_t)
    for q in range(1, c.Q + 1):
        weight = phi_t @ reform.Dt[q].conj().T @ phi_t + reform.sMa[q]
        Fv = Fv + 2.0 * c.varsigma2[q] * weight * reform.Dt[q]

    Fbar = _lift(Fv, 1)
    S = Fbar + Fbar.T
    lam2 = max(float(np.linalg.eigvalsh(S)[-1]), 0.0)
    pb = _realify(phi_t)
    fbar = (S - lam2 * np.eye(2 * N)) @ pb

    if lambda3_override is not None:
        lam3 = float(lambda3_override)
    else:
        hess = f3_hess(pb, reform, channels)
        lam3 = lambda3_scale * max(float(np.linalg.eigvalsh(0.5 * (hess + hess.T))[-1]), 0.0)
    lbar = f3_grad(pb, reform, channels) - lam3 * pb

    def unlift(v: np.ndarray) -> np.ndarray:
        return v[:N] + 1j * v[N:]

    Ft = reform.F + 0.5 * (lam2 + lam3 + rho) * np.eye(N)
    ft = reform.f + unlift(fbar) + unlift(lbar) - rho * varphi + mu2
    return PhiQuadratic(Ft=Ft, ft=ft, Fv_tilde=Fv, lambda1=lam1,
                        lambda2=lam2, lambda3=lam3)


def phi_quad_value(quad: PhiQuadratic, phi: np.ndarray) -> float:
    """Value of the surrogate quadratic (without its additive constant)."""
    return float(np.real(phi.conj() @ quad.Ft @ phi) + np.real(phi.conj() @ quad.ft))
