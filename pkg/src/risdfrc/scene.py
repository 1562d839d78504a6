"""Scene geometry, propagation model, and reproducible channel realization.

All physical quantities are stored in linear units (watts, linear power
gains).  The JSON configuration layer speaks dB/dBm and is converted on
load, see :func:`config_from_dict` / :func:`config_to_dict`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "SceneConfig",
    "ChannelSet",
    "path_loss",
    "los_steering",
    "rayleigh_channel",
    "link_rng",
    "build_scene",
    "desk_config",
    "paper_config",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "save_config",
]

def db_to_lin(x_db: float) -> float:
    return float(10.0 ** (x_db / 10.0))

def lin_to_db(x: float) -> float:
    return float(10.0 * np.log10(x))

def dbm_to_watt(x_dbm: float) -> float:
    return float(10.0 ** ((x_dbm - 30.0) / 10.0))

def watt_to_dbm(x: float) -> float:
    return float(10.0 * np.log10(x) + 30.0)


@dataclass(frozen=True)
class SceneConfig:
    """All physical parameters of one scene, in linear units.

    Angles are degrees.  ``varsigma2[0]`` is the target RCS power, entries
    1..Q the clutter RCS powers.  ``clutter_pos`` holds (range_bin, angle)
    pairs with range bins measured relative to the target bin.
    """

    M: int = 4                       # BS transmit/receive antennas
    N: int = 16                      # RIS elements
    K: int = 2                       # communication users
    L: int = 8                       # samples per pulse
    Q: int = 2                       # clutter sources
    P: float = 100.0                 # total transmit power (W)
    Omega: int = 4                   # PSK order
    sigma2_z: float = 1e-11          # radar receiver noise power (W)
    sigma2_k: tuple[float, ...] = (1e-11, 1e-11)
    varsigma2: tuple[float, ...] = (1.0, 1.0, 1.0)   # target + Q clutter RCS
    clutter_pos: tuple[tuple[int, float], ...] = ((0, -50.0), (1, -10.0))
    target_angle: float = 0.0
    d_t: float = 30.0
    d_G: float = 30.0
    d_k: tuple[float, ...] = (30.0, 30.0)
    d_rt: float = 3.0
    d_rk: tuple[float, ...] = (3.0, 3.0)
    iota_G: float = 2.5
    iota_rt: float = 2.8
    iota_rc: float = 2.8
    iota_rk: float = 2.8
    iota_t: float = 3.0
    iota_c: float = 3.0
    iota_k: float = 3.0
    C0: float = 1e-3                 # reference path gain at d0
    d0: float = 1.0                  # reference distance (m)
    Gamma_k: tuple[float, ...] = (10.0, 10.0)
    epsilon: float = 1e-9            # MMSE deviation tolerance
    rho: float = 1.0                 # splitting penalty
    seed: int = 0

    def __post_init__(self):
        if min(self.M, self.N if self.N else 1, self.K, self.L) < 1 or self.Q < 0:
            raise ValueError("M, K, L must be >= 1 and Q >= 0")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.P <= 0 or self.sigma2_z <= 0:
            raise ValueError("powers must be positive")
        if self.Omega < 2 or self.Omega & (self.Omega - 1):
            raise ValueError("Omega must be a power of two >= 2")
        if len(self.sigma2_k) != self.K or len(self.Gamma_k) != self.K:
            raise ValueError("per-user arrays must have length K")
        if len(self.d_k) != self.K or len(self.d_rk) != self.K:
            raise ValueError("per-user distances must have length K")
        if len(self.varsigma2) != self.Q + 1:
            raise ValueError("varsigma2 must have length Q+1 (target first)")
        if len(self.clutter_pos) != self.Q:
            raise ValueError("clutter_pos must have length Q")
        for r, _ in self.clutter_pos:
            if not 0 <= r <= self.L:
                raise ValueError(f"clutter range bin {r} outside [0, L]")
        if any(v <= 0 for v in (self.d_t, self.d_G, self.d_rt, *self.d_k, *self.d_rk)):
            raise ValueError("distances must be positive")
        if min(self.sigma2_k) <= 0 or min(self.Gamma_k) <= 0 or self.epsilon <= 0:
            raise ValueError("sigma2_k, Gamma_k, epsilon must be positive")

    @property
    def amplitude(self) -> float:
        """Per-entry waveform magnitude sqrt(P/M)."""
        return float(np.sqrt(self.P / self.M))

    def with_updates(self, **kw) -> "SceneConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every propagation channel plus derived factors.

    ``A[q]`` and ``B[q]`` (q = 0 for the target, 1..Q for clutter) are the
    rank-one direct outer products and the RIS cascade factors
    ``diag(h_r^H) @ G``.  ``B_user[k]`` is the same cascade for user k.
    All arrays are immutable after construction.
    """

    config: SceneConfig
    h_t: np.ndarray                  # (M,)
    h_rt: np.ndarray                 # (N,)
    G: np.ndarray                    # (N, M)
    h_c: tuple[np.ndarray, ...]      # Q x (M,)
    h_rc: tuple[np.ndarray, ...]     # Q x (N,)
    h_user: tuple[np.ndarray, ...]   # K x (M,)
    h_ruser: tuple[np.ndarray, ...]  # K x (N,)
    A: tuple[np.ndarray, ...]        # (Q+1) x (M, M)
    B: tuple[np.ndarray, ...]        # (Q+1) x (N, M)
    B_user: tuple[np.ndarray, ...]   # K x (N, M)
    range_bins: tuple[int, ...]      # (Q+1,), target first (always 0)

    def __post_init__(self):
        for arr in (self.h_t, self.h_rt, self.G, *self.h_c, *self.h_rc,
                    *self.h_user, *self.h_ruser, *self.A, *self.B, *self.B_user):
            arr.setflags(write=False)

    @property
    def direct(self) -> tuple[np.ndarray, ...]:
        """Direct BS channels for q = 0..Q (target first)."""
        return (self.h_t, *self.h_c)

    def content_hash(self) -> str:
        """Stable digest of the realized channels (paired-trial bookkeeping)."""
        h = hashlib.sha256()
        for arr in (self.h_t, self.h_rt, self.G, *self.h_c, *self.h_rc,
                    *self.h_user, *self.h_ruser):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def path_loss(d: float, iota: float, c0: float = 1e-3, d0: float = 1.0) -> float:
    """Distance-power law gain ``c0 * (d0 / d)**iota`` (linear power)."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return float(c0 * (d0 / d) ** iota)


def los_steering(angle_deg: float, num_elements: int, gain: float = 1.0) -> np.ndarray:
    """Half-wavelength ULA steering vector scaled to per-entry power ``gain``.

    Entry m is ``sqrt(gain) * exp(j*pi*m*sin(angle))``.
    """
    if num_elements < 0:
        raise ValueError("num_elements must be >= 0")
    if gain < 0:
        raise ValueError("gain must be >= 0")
    m = np.arange(num_elements)
    return np.sqrt(gain) * np.exp(1j * np.pi * m * np.sin(np.deg2rad(angle_deg)))


def rayleigh_channel(rng: np.random.Generator, length: int, gain: float) -> np.ndarray:
    """I.i.d. circularly-symmetric complex Gaussian vector, per-entry power ``gain``.

    Real/imaginary parts are drawn interleaved so a longer vector from the
    same stream extends a shorter one (prefix-stable in ``length``).
    """
    ri = rng.standard_normal((length, 2))
    return np.sqrt(gain / 2.0) * (ri[:, 0] + 1j * ri[:, 1])


def link_rng(seed: int, tag: str) -> np.random.Generator:
    """Independent substream keyed by (master seed, link tag).

    Streams depend only on their own tag, so adding users or clutter never
    perturbs the other links.
    """
    digest = hashlib.sha256(tag.encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def _los_link(seed: int, tag: str, n: int, gain: float,
              angle_deg: float | None = None) -> np.ndarray:
    """LoS vector with a random global phase; angle drawn if not prescribed."""
    rng = link_rng(seed, tag)
    drawn = rng.uniform(-60.0, 60.0)    # always consume, keeps streams aligned
    if angle_deg is None:
        angle_deg = drawn
    phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
    return phase * los_steering(angle_deg, n, gain)


def build_scene(config: SceneConfig) -> ChannelSet:
    """Draw every channel of the scene; deterministic in ``config.seed``.

    BS/RIS links to target and clutter are LoS, user links are Rayleigh,
    and the BS-RIS channel is a rank-one LoS matrix.
    """
    c = config
    seed = c.seed

    h_t = _los_link(seed, "h_t", c.M, path_loss(c.d_t, c.iota_t, c.C0, c.d0),
                    angle_deg=c.target_angle)
    h_rt = _los_link(seed, "h_rt", c.N, path_loss(c.d_rt, c.iota_rt, c.C0, c.d0))

    rng_g = link_rng(seed, "G")
    a_ris = los_steering(rng_g.uniform(-60.0, 60.0), c.N)
    a_bs = los_steering(rng_g.uniform(-60.0, 60.0), c.M)
    g_gain = path_loss(c.d_G, c.iota_G, c.C0, c.d0)
    G = np.sqrt(g_gain) * np.exp(1j * rng_g.uniform(0.0, 2.0 * np.pi)) * np.outer(a_ris, a_bs)

    h_c, h_rc, bins = [], [], [0]
    for q, (r_q, theta_q) in enumerate(c.clutter_pos, start=1):
        h_c.append(_los_link(seed, f"h_c:{q}", c.M,
                             path_loss(c.d_t, c.iota_c, c.C0, c.d0), angle_deg=theta_q))
        h_rc.append(_los_link(seed, f"h_rc:{q}", c.N,
                              path_loss(c.d_rt, c.iota_rc, c.C0, c.d0)))
        bins.append(int(r_q))

    h_user, h_ruser = [], []
    for k in range(c.K):
        h_user.append(rayleigh_channel(link_rng(seed, f"h_user:{k}"), c.M,
                                       path_loss(c.d_k[k], c.iota_k, c.C0, c.d0)))
        h_ruser.append(rayleigh_channel(link_rng(seed, f"h_ruser:{k}"), c.N,
                                        path_loss(c.d_rk[k], c.iota_rk, c.C0, c.d0)))

    direct = [h_t, *h_c]
    reflect = [h_rt, *h_rc]
    A = tuple(np.outer(h, h.conj()) for h in direct)
    B = tuple(np.diag(hr.conj()) @ G for hr in reflect)
    B_user = tuple(np.diag(hr.conj()) @ G for hr in h_ruser)

    return ChannelSet(config=c, h_t=h_t, h_rt=h_rt, G=G,
                      h_c=tuple(h_c), h_rc=tuple(h_rc),
                      h_user=tuple(h_user), h_ruser=tuple(h_ruser),
                      A=A, B=B, B_user=B_user, range_bins=tuple(bins))


def without_ris(channels: ChannelSet) -> ChannelSet:
    """Baseline variant with the BS-RIS channel removed (G = 0)."""
    c = channels.config
    zero_G = np.zeros_like(channels.G)
    zero_B = tuple(np.zeros_like(b) for b in channels.B)
    zero_Bu = tuple(np.zeros_like(b) for b in channels.B_user)
    return ChannelSet(config=c, h_t=channels.h_t, h_rt=channels.h_rt, G=zero_G,
                      h_c=channels.h_c, h_rc=channels.h_rc,
                      h_user=channels.h_user, h_ruser=channels.h_ruser,
                      A=channels.A, B=zero_B, B_user=zero_Bu,
                      range_bins=channels.range_bins)


def desk_config(seed: int = 0, **overrides) -> SceneConfig:
    """Small default scene used for fast regression runs."""
    return SceneConfig(seed=seed).with_updates(**overrides)


def paper_config(seed: int = 0, N: int = 64, **overrides) -> SceneConfig:
    """Full-scale scene: M=6, K=3, Q=3, L=20, QPSK, 20 dBW, -80 dBm noise."""
    cfg = SceneConfig(
        M=6, N=N, K=3, L=20, Q=3,
        P=db_to_lin(20.0),
        sigma2_z=dbm_to_watt(-80.0),
        sigma2_k=(dbm_to_watt(-80.0),) * 3,
        varsigma2=(1.0, 1.0, 1.0, 1.0),
        clutter_pos=((0, -50.0), (1, -10.0), (2, 40.0)),
        d_k=(30.0, 30.0, 30.0),
        d_rk=(3.0, 3.0, 3.0),
        Gamma_k=(10.0, 10.0, 10.0),
        seed=seed,
    )
    return cfg.with_updates(**overrides)


# --- JSON configuration layer (dB on disk, linear in memory) ---

_DB_DOC = {
    "P_dBW": "total transmit power",
    "sigma2_z_dBm": "radar noise power",
    "sigma2_k_dBm": "per-user noise powers",
    "varsigma2_dB": "target+clutter RCS powers",
    "Gamma_k_dB": "per-user SNR requirements",
    "C0_dB": "reference path gain at d0",
}


def config_to_dict(cfg: SceneConfig) -> dict:
    """Serializable form of a config; power-like fields rendered in dB/dBm."""
    return {
        "M": cfg.M, "N": cfg.N, "K": cfg.K, "L": cfg.L, "Q": cfg.Q,
        "Omega": cfg.Omega,
        "P_dBW": lin_to_db(cfg.P),
        "sigma2_z_dBm": watt_to_dbm(cfg.sigma2_z),
        "sigma2_k_dBm": [watt_to_dbm(v) for v in cfg.sigma2_k],
        "varsigma2_dB": [lin_to_db(v) for v in cfg.varsigma2],
        "clutter_pos": [[r, th] for r, th in cfg.clutter_pos],
        "target_angle": cfg.target_angle,
        "d_t": cfg.d_t, "d_G": cfg.d_G, "d_k": list(cfg.d_k),
        "d_rt": cfg.d_rt, "d_rk": list(cfg.d_rk),
        "iota_G": cfg.iota_G, "iota_rt": cfg.iota_rt, "iota_rc": cfg.iota_rc,
        "iota_rk": cfg.iota_rk, "iota_t": cfg.iota_t, "iota_c": cfg.iota_c,
        "iota_k": cfg.iota_k,
        "C0_dB": lin_to_db(cfg.C0), "d0": cfg.d0,
        "Gamma_k_dB": [lin_to_db(v) for v in cfg.Gamma_k],
        "epsilon": cfg.epsilon, "rho": cfg.rho, "seed": cfg.seed,
    }


def config_from_dict(data: dict) -> SceneConfig:
    """Inverse of :func:`config_to_dict`; unknown keys are rejected."""
    d = dict(data)
    known = set(config_to_dict(SceneConfig()))
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for key in ("M", "N", "K", "L", "Q", "Omega", "target_angle", "d_t", "d_G",
                "d_rt", "iota_G", "iota_rt", "iota_rc", "iota_rk", "iota_t",
                "iota_c", "iota_k", "d0", "epsilon", "rho", "seed"):
        if key in d:
            kw[key] = d[key]
    if "P_dBW" in d:
        kw["P"] = db_to_lin(d["P_dBW"])
    if "sigma2_z_dBm" in d:
        kw["sigma2_z"] = dbm_to_watt(d["sigma2_z_dBm"])
    if "sigma2_k_dBm" in d:
        kw["sigma2_k"] = tuple(dbm_to_watt(v) for v in d["sigma2_k_dBm"])
    if "varsigma2_dB" in d:
        kw["varsigma2"] = tuple(db_to_lin(v) for v in d["varsigma2_dB"])
    if "Gamma_k_dB" in d:
        kw["Gamma_k"] = tuple(db_to_lin(v) for v in d["Gamma_k_dB"])
    if "clutter_pos" in d:
        kw["clutter_pos"] = tuple((int(r), float(th)) for r, th in d["clutter_pos"])
    if "d_k" in d:
        kw["d_k"] = tuple(d["d_k"])
    if "d_rk" in d:
        kw["d_rk"] = tuple(d["d_rk"])
    return SceneConfig(**kw)


def load_config(path: str | Path) -> SceneConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: SceneConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
