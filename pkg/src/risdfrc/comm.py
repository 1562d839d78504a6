"""Symbol generation, per-user effective channels, and the three
communication QoS constraint families (exact-ray, bounded-disc, and
constructive-region)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ChannelSet, SceneConfig

__all__ = [
    "SymbolFrame",
    "QosSpec",
    "generate_symbols",
    "effective_rows",
    "received_noise_free",
    "received_frame",
    "qos_margin",
    "fit_alpha",
    "simulate_ser",
    "psk_ser_analytic",
]

METRICS = ("zf", "mmse", "ci")


@dataclass(frozen=True)
class SymbolFrame:
    """K x L unit-modulus PSK symbols with constellation order ``omega``."""

    s: np.ndarray          # (K, L) complex, |s| = 1
    omega: int

    @property
    def theta(self) -> float:
        """Half-angle of each decision sector, pi / omega."""
        return np.pi / self.omega


@dataclass(frozen=True)
class QosSpec:
    """Per-user QoS requirements under one of the three metrics."""

    metric: str                    # "zf" | "mmse" | "ci"
    Gamma: tuple[float, ...]       # (K,) linear SNR requirements
    sigma: tuple[float, ...]       # (K,) noise std^2 is sigma[k]
    epsilon: float = 1e-9          # disc tolerance, mmse only

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if min(self.Gamma) <= 0 or min(self.sigma) <= 0 or self.epsilon <= 0:
            raise ValueError("Gamma, sigma, epsilon must be positive")

    @classmethod
    def from_config(cls, cfg: SceneConfig, metric: str) -> "QosSpec":
        return cls(metric=metric, Gamma=tuple(cfg.Gamma_k),
                   sigma=tuple(np.sqrt(v) for v in cfg.sigma2_k),
                   epsilon=cfg.epsilon)

    def gamma_zf(self, frame: SymbolFrame) -> np.ndarray:
        """Target points sigma_k sqrt(Gamma_k) s_k[l], shape (K, L)."""
        scale = np.asarray(self.sigma) * np.sqrt(np.asarray(self.Gamma))
        return scale[:, None] * frame.s

    def gamma_ci(self, frame: SymbolFrame) -> np.ndarray:
        """Both constructive-region rotation constants, shape (K, L, 2).

        gamma_pm = e^{-j angle(s)} (sin th -/+ j cos th) / (sigma sqrt(Gamma) sin th);
        Re{gamma_pm * r} >= 1 for both signs keeps r inside the region.
        """
        th = frame.theta
        scale = np.asarray(self.sigma) * np.sqrt(np.asarray(self.Gamma)) * np.sin(th)
        rot = np.conj(frame.s)                     # e^{-j angle(s)} for unit symbols
        pair = np.stack([np.sin(th) - 1j * np.cos(th),
                         np.sin(th) + 1j * np.cos(th)])
        return rot[:, :, None] * pair[None, None, :] / scale[:, None, None]


def generate_symbols(rng: np.random.Generator, K: int, L: int, omega: int) -> SymbolFrame:
    """Uniform i.i.d. PSK symbols on the grid exp(j(pi/omega + 2 pi m/omega))."""
    if omega < 2:
        raise ValueError("omega must be >= 2")
    m = rng.integers(0, omega, size=(K, L))
    s = np.exp(1j * (np.pi / omega + 2.0 * np.pi * m / omega))
    return SymbolFrame(s=s, omega=omega)


def effective_rows(channels: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """Rows r[k, l] of length ML with r[k, l] @ x = noise-free signal of user k.

    Block l of row (k, l) holds h_k^H + phi^T diag(h_rk^H) G; all other
    blocks are zero (the Kronecker lift is realized by block placement).
    """
    c = channels.config
    rows = np.zeros((c.K, c.L, c.M * c.L), dtype=complex)
    for k in range(c.K):
        base = channels.h_user[k].conj() + channels.B_user[k].T @ phi
        for l in range(c.L):
            rows[k, l, l * c.M:(l + 1) * c.M] = base
    return rows


def received_noise_free(x: np.ndarray, phi: np.ndarray, k: int, l: int,
                        channels: ChannelSet) -> complex:
    """Noise-free receive point of user k at sample l, computed blockwise."""
    c = channels.config
    base = channels.h_user[k].conj() + channels.B_user[k].T @ phi
    return complex(base @ x.reshape(c.L, c.M)[l])


def received_frame(x: np.ndarray, phi: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """All noise-free receive points, shape (K, L)."""
    c = channels.config
    xb = x.reshape(c.L, c.M)
    out = np.empty((c.K, c.L), dtype=complex)
    for k in range(c.K):
        base = channels.h_user[k].conj() + channels.B_user[k].T @ phi
        out[k] = xb @ base
    return out


def fit_alpha(r: np.ndarray, spec: QosSpec, frame: SymbolFrame) -> np.ndarray:
    """Per-(k, l) scaling that best explains ``r`` along the symbol ray, >= 1."""
    g = spec.gamma_zf(frame)
    alpha = np.real(np.conj(g) * r) / np.abs(g) ** 2
    return np.maximum(alpha, 1.0)


def qos_margin(metric: str, x: np.ndarray, phi: np.ndarray,
               alpha: np.ndarray | None, frame: SymbolFrame, spec: QosSpec,
               channels: ChannelSet) -> np.ndarray:
    """Per-(k, l) feasibility margins; every constraint holds iff min >= -tol.

    zf:   -(deviation from the alpha-scaled symbol point)
    mmse: epsilon - deviation^2
    ci:   min over both region boundaries of Re{gamma_ci r} - 1
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    r = received_frame(x, phi, channels)
    if metric == "ci":
        g = spec.gamma_ci(frame)
        return np.min(np.real(g * r[:, :, None]), axis=2) - 1.0
    if alpha is None:
        alpha = fit_alpha(r, spec, frame)
    dev = np.abs(r - alpha * spec.gamma_zf(frame))
    if metric == "zf":
        return -dev
    return spec.epsilon - dev ** 2


def simulate_ser(x: np.ndarray, phi: np.ndarray, frame: SymbolFrame,
                 spec: QosSpec, trials: int, rng: np.random.Generator,
                 channels: ChannelSet) -> np.ndarray:
    """Monte-Carlo symbol error rate per user under nearest-sector decoding."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    c = channels.config
    r = received_frame(x, phi, channels)          # (K, L)
    omega = frame.omega
    sent = np.round((np.angle(frame.s) - np.pi / omega) / (2 * np.pi / omega))
    sent = np.mod(sent, omega).astype(int)
    errors = np.zeros(c.K, dtype=np.int64)
    chunk = max(1, min(trials, 2 ** 22 // max(c.L, 1)))
    for k in range(c.K):
        sig = spec.sigma[k]
        done = 0
        while done < trials:
            n = min(chunk, trials - done)
            noise = (rng.standard_normal((n, c.L)) +
                     1j * rng.standard_normal((n, c.L))) * (sig / np.sqrt(2.0))
            y = r[k][None, :] + noise
            dec = np.floor(np.mod(np.angle(y), 2 * np.pi) / (2 * np.pi / omega))
            errors[k] += np.count_nonzero(dec.astype(int) != sent[k][None, :])
            done += n
    return errors / float(trials * c.L)


def psk_ser_analytic(gamma: float, omega: int) -> float:
    """Exact symbol error probability for Gray PSK at SNR ``gamma``.

    For omega = 2 or 4 this is exact (1 - (1 - Q)^axes form); higher orders
    use the standard tight union bound 2 Q(sqrt(2 gamma) sin(pi/omega)).
    """
    from scipy.stats import norm
    if omega == 2:
        return float(norm.sf(np.sqrt(2.0 * gamma)))
    if omega == 4:
        q = norm.sf(np.sqrt(gamma))
        return float(2.0 * q - q ** 2)
    return float(2.0 * norm.sf(np.sqrt(2.0 * gamma) * np.sin(np.pi / omega)))
