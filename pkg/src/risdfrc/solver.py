"""First-order conic solver for the waveform and reflection subproblems.

The problems all share one shape: a convex quadratic over complex z with
per-entry magnitude bounds plus a set of scalar-channel constraints, each
of which has a cheap exact projection:

* ``ray``       t + off = alpha*gamma, alpha >= 1   (exact-equality QoS)
* ``capsule``   |t + off - alpha*gamma| <= radius, alpha >= 1  (disc QoS)
* ``halfplane`` Re{gamma (t + off)} >= rhs          (constructive region)

They are solved by consensus splitting with over-relaxation: one copy of z
carries the magnitude bounds, one scalar copy per constraint row carries
its set, and the coupling step is a cached Cholesky solve.  The same
engine runs the max-min initialization problems, where an epigraph value
is threaded through every row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "ScalarConstraint",
    "ConicSubproblem",
    "SolveResult",
    "SolverState",
    "solve",
    "solve_maxmin_init",
]

_KINDS = ("ray", "capsule", "halfplane")


@dataclass(frozen=True)
class ScalarConstraint:
    """One QoS row acting on the scalar t = a^H z."""

    kind: str
    a: np.ndarray              # (n,) complex
    gamma: complex = 1.0 + 0j  # ray/capsule direction or halfplane coefficient
    offset: complex = 0.0 + 0j
    radius: float = 0.0        # capsule only
    rhs: float = 1.0           # halfplane only
    alpha_min: float = 1.0     # ray/capsule scaling lower bound

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "capsule" and self.radius <= 0:
            raise ValueError("capsule radius must be positive")
        if self.kind != "halfplane" and abs(self.gamma) == 0:
            raise ValueError("ray/capsule direction must be nonzero")


@dataclass(frozen=True)
class ConicSubproblem:
    """min z^H Q z + Re{q^H z} (or max tau) over the constraint product."""

    Q: np.ndarray | None       # (n, n) Hermitian PSD, None for zero
    q: np.ndarray              # (n,) complex
    bound: np.ndarray          # (n,) per-entry magnitude bounds, > 0
    constraints: tuple[ScalarConstraint, ...] = ()
    maximin: bool = False      # epigraph mode: alpha_min/rhs become >= tau

    @property
    def dim(self) -> int:
        return self.q.shape[0]


@dataclass
class SolveResult:
    z: np.ndarray
    alpha: np.ndarray          # per-row scaling (NaN for halfplane rows)
    objective: float
    kkt_residual: float
    iterations: int
    status: str                # "optimal" | "stalled" | "max_iter" | "infeasible"
    tau: float = np.nan        # maximin value when in epigraph mode

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass
class SolverState:
    """Warm-start carrier between successive related solves."""

    z: np.ndarray | None = None
    zc: np.ndarray | None = None
    u0: np.ndarray | None = None
    t: np.ndarray | None = None
    ut: np.ndarray | None = None
    tau: float = 0.0
    tauc: np.ndarray | None = None
    utau: np.ndarray | None = None
    sigma: float | None = None


@dataclass
class _Rows:
    """Row-normalized constraint data in structure-of-arrays form."""

    A: np.ndarray          # (R, n), unit-norm rows of a^H
    kind: np.ndarray       # (R,) int: 0 ray, 1 capsule, 2 halfplane
    gamma: np.ndarray      # (R,) complex (normalized)
    offset: np.ndarray     # (R,) complex (normalized)
    radius: np.ndarray     # (R,)
    rhs: np.ndarray        # (R,)
    alpha_min: np.ndarray  # (R,)
    scale: np.ndarray      # (R,) original row norms
    hp_mag: np.ndarray     # (R,) halfplane |gamma|*norm, links t-hat to tau
    hp_c: np.ndarray       # (R,) halfplane Re{gamma offset}


def _normalize_rows(cons: tuple[ScalarConstraint, ...], n: int) -> _Rows:
    R = len(cons)
    A = np.zeros((R, n), dtype=complex)
    kind = np.zeros(R, dtype=int)
    gamma = np.zeros(R, dtype=complex)
    offset = np.zeros(R, dtype=complex)
    radius = np.zeros(R)
    rhs = np.zeros(R)
    amin = np.ones(R)
    scale = np.ones(R)
    hp_mag = np.ones(R)
    hp_c = np.zeros(R)
    for i, cn in enumerate(cons):
        na = float(np.linalg.norm(cn.a))
        if na <= 0:
            raise _DegenerateRow(i, cn)
        scale[i] = na
        A[i] = cn.a.conj() / na           # row i of the map z -> a^H z / na
        amin[i] = cn.alpha_min
        if cn.kind == "halfplane":
            kind[i] = 2
            g = cn.gamma * na
            mag = abs(g)
            gamma[i] = g / mag
            hp_mag[i] = mag
            hp_c[i] = np.real(cn.gamma * cn.offset)
            rhs[i] = (cn.rhs - hp_c[i]) / mag
        else:
            kind[i] = 0 if cn.kind == "ray" else 1
            gamma[i] = cn.gamma / na
            offset[i] = cn.offset / na
            radius[i] = cn.radius / na
    return _Rows(A=A, kind=kind, gamma=gamma, offset=offset, radius=radius,
                 rhs=rhs, alpha_min=amin, scale=scale, hp_mag=hp_mag, hp_c=hp_c)


class _DegenerateRow(Exception):
    def __init__(self, index: int, con: ScalarConstraint):
        self.index = index
        self.con = con
        super().__init__(f"zero effective channel in constraint row {index}")


def _project_disc(w: np.ndarray, bound: np.ndarray) -> np.ndarray:
    mag = np.abs(w)
    over = mag > bound
    out = w.copy()
    out[over] *= bound[over] / mag[over]
    return out


def _project_rows(w: np.ndarray, tau_in: np.ndarray | None, rows: _Rows,
                  maximin: bool) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Exact projection of each scalar (and its epigraph copy) onto its set.

    Returns (t, tau_copies, alpha).
    """
    t = w.copy()
    alpha = np.full(w.shape[0], np.nan)
    tau_out = tau_in.copy() if maximin else None

    ray = rows.kind == 0
    if np.any(ray):
        g, off = rows.gamma[ray], rows.offset[ray]
        p = w[ray] + off
        a_free = np.real(np.conj(g) * p) / np.abs(g) ** 2
        if not maximin:
            a = np.maximum(a_free, rows.alpha_min[ray])
        else:
            sig = tau_in[ray]
            a = a_free.copy()
            crossed = a_free < sig
            joint = (np.real(np.conj(g) * p) + sig) / (np.abs(g) ** 2 + 1.0)
            a[crossed] = joint[crossed]
            tau_out[ray] = np.where(crossed, a, sig)
        t[ray] = a * g - off
        alpha[ray] = a

    cap = rows.kind == 1
    if np.any(cap):
        g, off, rad = rows.gamma[cap], rows.offset[cap], rows.radius[cap]
        p = w[cap] + off
        if not maximin:
            a = np.maximum(np.real(np.conj(g) * p) / np.abs(g) ** 2,
                           rows.alpha_min[cap])
        else:
            sig = tau_in[cap]
            a = _capsule_alpha_maximin(p, g, rad, sig)
            tau_out[cap] = np.minimum(a, sig)
        center = a * g
        resid = p - center
        dist = np.abs(resid)
        outside = dist > rad
        proj = p.copy()
        proj[outside] = center[outside] + rad[outside] * resid[outside] / dist[outside]
        t[cap] = proj - off
        alpha[cap] = a

    hp = rows.kind == 2
    if np.any(hp):
        g, rb = rows.gamma[hp], rows.rhs[hp]
        if not maximin:
            margin = np.real(g * w[hp]) - rb
            viol = margin < 0
            t_hp = w[hp].copy()
            t_hp[viol] = t_hp[viol] - np.conj(g[viol]) * margin[viol]
            t[hp] = t_hp
        else:
            # halfspace mag*Re{g t} + c >= tau in (Re t, Im t, tau); the
            # epigraph couples tau in original row units
            sig = tau_in[hp]
            mag, c0 = rows.hp_mag[hp], rows.hp_c[hp]
            fval = mag * np.real(g * w[hp]) + c0 - sig
            viol = fval < 0
            coef = fval / (mag ** 2 + 1.0)
            t_hp = w[hp].copy()
            tau_hp = sig.copy()
            t_hp[viol] = t_hp[viol] - (mag * coef * np.conj(g))[viol]
            tau_hp[viol] = tau_hp[viol] + coef[viol]
            t[hp] = t_hp
            tau_out[hp] = tau_hp
    return t, tau_out, alpha


def _capsule_alpha_maximin(p: np.ndarray, g: np.ndarray, rad: np.ndarray,
                           sig: np.ndarray) -> np.ndarray:
    """argmin_a max(|p - a g| - rad, 0)^2 + max(sig - a, 0)^2 (vectorized).

    Rows whose point already sits inside the lifted capsule get the exact
    zero-distance scaling; the rest fall back to golden-section on the
    convex 1-D objective.
    """
    gmag2 = np.abs(g) ** 2
    a_ray = np.real(np.conj(g) * p) / gmag2
    perp2 = np.maximum(np.abs(p) ** 2 - a_ray ** 2 * gmag2, 0.0)
    half = np.sqrt(np.maximum(rad ** 2 - perp2, 0.0) / gmag2)
    inside = perp2 <= rad ** 2
    a_hi = a_ray + half
    a_lo = a_ray - half
    zero_ok = inside & (a_hi >= sig)
    out = np.clip(a_ray, np.maximum(sig, a_lo), a_hi)

    todo = ~zero_ok
    if np.any(todo):
        pt, gt, rt, st = p[todo], g[todo], rad[todo], sig[todo]
        art = a_ray[todo]
        lo = np.minimum(art, st) - rt / np.abs(gt) - 1.0
        hi = np.maximum(art, st) + rt / np.abs(gt) + 1.0

        def val(a):
            d = np.maximum(np.abs(pt - a * gt) - rt, 0.0)
            m = np.maximum(st - a, 0.0)
            return d * d + m * m

        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        x1 = hi - invphi * (hi - lo)
        x2 = lo + invphi * (hi - lo)
        f1, f2 = val(x1), val(x2)
        for _ in range(100):
            left = f1 < f2
            lo_n = np.where(left, lo, x1)
            hi_n = np.where(left, x2, hi)
            x1_n = np.where(left, hi_n - invphi * (hi_n - lo_n), x2)
            x2_n = np.where(left, x1, lo_n + invphi * (hi_n - lo_n))
            f1_n = np.where(left, val(x1_n), f2)
            f2_n = np.where(left, f1, val(x2_n))
            lo, hi, x1, x2, f1, f2 = lo_n, hi_n, x1_n, x2_n, f1_n, f2_n
        out[todo] = 0.5 * (lo + hi)
    return out


def _violation(z: np.ndarray, tau: float, rows: _Rows, bound: np.ndarray,
               maximin: bool) -> float:
    """Worst feasibility violation of ``z`` in normalized row units."""
    v = float(np.max(np.maximum(np.abs(z) - bound, 0.0), initial=0.0))
    if rows.A.shape[0] == 0:
        return v
    t = rows.A @ z
    tin = np.full(t.shape[0], tau) if maximin else None
    tproj, _, _ = _project_rows(t, tin, rows, maximin)
    return max(v, float(np.max(np.abs(t - tproj), initial=0.0)))


def solve(problem: ConicSubproblem, tolerance: float = 1e-6,
          max_iter: int = 50000, state: SolverState | None = None,
          over_relax: float = 1.6, adapt_penalty: bool = True,
          residual_trace: list | None = None) -> SolveResult:
    """Run the splitting iteration until primal/dual residuals pass.

    Deterministic given inputs.  ``state`` (mutated in place) carries the
    previous solution and scaled duals for warm starting.  With
    ``over_relax=1`` and ``adapt_penalty=False`` the iteration is plainly
    averaged and the fixed-point displacement (appended per iteration to
    ``residual_trace`` when given) is non-increasing.
    """
    n = problem.dim
    bound = np.broadcast_to(np.asarray(problem.bound, dtype=float), (n,)).copy()
    if np.any(bound <= 0):
        raise ValueError("magnitude bounds must be positive")
    try:
        rows = _normalize_rows(problem.constraints, n)
    except _DegenerateRow as exc:
        con = exc.con
        feasible = False
        if con.kind == "halfplane":
            feasible = np.real(con.gamma * con.offset) >= con.rhs
        elif con.kind == "capsule":
            a0 = max(np.real(np.conj(con.gamma) * con.offset) / abs(con.gamma) ** 2,
                     con.alpha_min)
            feasible = abs(con.offset - a0 * con.gamma) <= con.radius
        if feasible:
            pruned = tuple(c for i, c in enumerate(problem.constraints)
                           if i != exc.index)
            sub = ConicSubproblem(Q=problem.Q, q=problem.q, bound=bound,
                                  constraints=pruned, maximin=problem.maximin)
            return solve(sub, tolerance, max_iter, state, over_relax)
        zeros = np.zeros(n, dtype=complex)
        return SolveResult(z=zeros, alpha=np.full(len(problem.constraints), np.nan),
                           objective=np.nan, kkt_residual=np.inf, iterations=0,
                           status="infeasible")

    R = rows.A.shape[0]
    maximin = problem.maximin
    Q = problem.Q if problem.Q is not None else np.zeros((n, n), dtype=complex)
    q = problem.q

    st = state if state is not None else SolverState()
    fresh = st.z is None or st.z.shape[0] != n or st.t is None or st.t.shape[0] != R
    if fresh:
        st.z = np.zeros(n, dtype=complex)
        st.zc = np.zeros(n, dtype=complex)
        st.u0 = np.zeros(n, dtype=complex)
        st.t = np.zeros(R, dtype=complex)
        st.ut = np.zeros(R, dtype=complex)
        st.tau = 0.0
        st.tauc = np.zeros(R)
        st.utau = np.zeros(R)
        st.sigma = None
    if maximin and R == 0:
        raise ValueError("epigraph mode needs at least one constraint row")
    diag_scale = 2.0 * float(np.mean(np.abs(np.diag(Q)))) if n else 1.0
    if diag_scale <= 1e-12:
        diag_scale = 1.0 / max(float(np.mean(bound)), 1e-8)
    if st.sigma is None:
        st.sigma = diag_scale
    elif not 0.25 <= st.sigma / diag_scale <= 4.0:
        # stale warm-start penalty: retarget and keep the dual information
        ratio = st.sigma / diag_scale
        st.u0 *= ratio
        st.ut *= ratio
        st.utau *= ratio
        st.sigma = diag_scale

    z, zc, u0, t, ut = st.z, st.zc, st.u0, st.t, st.ut
    tau, tauc, utau = st.tau, st.tauc, st.utau
    sigma = st.sigma

    def factor(sig_pen: float):
        K = 2.0 * Q + sig_pen * np.eye(n)
        if R:
            K = K + sig_pen * rows.A.conj().T @ rows.A
        return cho_factor(K, lower=True)

    cho = factor(sigma)
    n_rows_tau = max(R, 1)

    best_res = np.inf
    stall = 0
    status = "max_iter"
    it = 0
    alpha_rows = np.full(R, np.nan)

    for it in range(1, max_iter + 1):
        # coupled quadratic step
        v0 = zc - u0
        rhs_vec = sigma * v0 - q
        if R:
            vt = t - ut
            rhs_vec = rhs_vec + sigma * (rows.A.conj().T @ vt)
        z = cho_solve(cho, rhs_vec)
        if maximin:
            tau = float(np.mean(tauc - utau) + 1.0 / (sigma * n_rows_tau)) if R \
                else tau + 1.0 / sigma

        az = rows.A @ z if R else np.zeros(0, dtype=complex)
        # over-relaxation mixes the new map output with the old copies
        az_r = over_relax * az + (1.0 - over_relax) * t
        z_r = over_relax * z + (1.0 - over_relax) * zc
        tau_r = over_relax * tau + (1.0 - over_relax) * tauc if maximin else None

        zc_old, t_old = zc, t
        tauc_old = tauc
        u0_prev, ut_prev, utau_prev = u0, ut, utau
        zc = _project_disc(z_r + u0, bound)
        if R:
            tin = (tau_r + utau) if maximin else None
            t, tauc, alpha_rows = _project_rows(az_r + ut, tin, rows, maximin)
        u0 = u0 + z_r - zc
        if R:
            ut = ut + az_r - t
            if maximin:
                utau = utau + tau_r - tauc

        if residual_trace is not None:
            ds = np.linalg.norm(zc - u0 - (zc_old - u0_prev)) ** 2
            if R:
                ds += np.linalg.norm(t - ut - (t_old - ut_prev)) ** 2
                if maximin:
                    ds += np.linalg.norm(tauc - utau - (tauc_old - utau_prev)) ** 2
            residual_trace.append(float(np.sqrt(ds)))

        if it % 10 == 0 or it == max_iter:
            pri = np.linalg.norm(z - zc) ** 2
            dua = np.linalg.norm(zc - zc_old) ** 2
            if R:
                pri += np.linalg.norm(az - t) ** 2
                dua += np.linalg.norm(rows.A.conj().T @ (t - t_old)) ** 2
                if maximin:
                    pri += np.linalg.norm(tau - tauc) ** 2
                    dua += np.linalg.norm(tauc - tauc_old) ** 2
            pri, dua = np.sqrt(pri), sigma * np.sqrt(dua)
            scale_p = max(np.linalg.norm(z), np.linalg.norm(zc), 1.0)
            scale_d = max(sigma * np.linalg.norm(u0), 1.0)
            eps_p = np.sqrt(n + R) * tolerance * scale_p
            eps_d = np.sqrt(n) * tolerance * scale_d
            if pri <= eps_p and dua <= eps_d:
                status = "optimal"
                break
            combined = pri / scale_p + dua / scale_d
            if combined < 0.99 * best_res:
                best_res = combined
                stall = 0
            else:
                stall += 10
            if stall >= 2000:
                # residual plateau: either a positive feasibility gap
                # (infeasible) or a thin constraint set ground to its
                # attainable accuracy (iterate is usable, flagged stalled)
                status = "infeasible" if pri > 1e3 * eps_p else "stalled"
                break
            # residual balancing keeps the two sequences comparable
            if adapt_penalty and it % 30 == 0 and status == "max_iter":
                if pri > 10.0 * dua * scale_p / scale_d and sigma < 1e8:
                    sigma *= 2.0
                    u0, ut, utau = u0 / 2.0, ut / 2.0, utau / 2.0
                    cho = factor(sigma)
                elif dua * scale_p / scale_d > 10.0 * pri and sigma > 1e-8:
                    sigma /= 2.0
                    u0, ut, utau = u0 * 2.0, ut * 2.0, utau * 2.0
                    cho = factor(sigma)

    st.z, st.zc, st.u0, st.t, st.ut = z, zc, u0, t, ut
    st.tau, st.tauc, st.utau, st.sigma = tau, tauc, utau, sigma

    stat_vec = 2.0 * (Q @ z) + q + sigma * u0
    if R:
        stat_vec = stat_vec + sigma * (rows.A.conj().T @ ut)
    stat_scale = max(np.linalg.norm(q), np.linalg.norm(2.0 * Q @ z), 1.0)
    kkt = float(np.linalg.norm(stat_vec) / stat_scale)
    kkt = max(kkt, _violation(z, tau, rows, bound, maximin))

    obj = float(np.real(z.conj() @ Q @ z) + np.real(q.conj() @ z))
    if maximin:
        obj -= tau
    if status == "infeasible":
        obj = np.nan
    return SolveResult(z=z, alpha=alpha_rows, objective=obj, kkt_residual=kkt,
                       iterations=it, status=status,
                       tau=tau if maximin else np.nan)


def solve_maxmin_init(rows_a: np.ndarray, targets: np.ndarray | None,
                      metric: str, bound: float, epsilon: float = 0.0,
                      tolerance: float = 1e-6, max_iter: int = 50000) -> SolveResult:
    """Max-min initialization: best worst-row QoS under relaxed power bounds.

    ``rows_a`` holds one effective channel per row (so row @ conj is the
    a-vector with t = a^H x); ``targets`` the scaled desired points for
    zf/mmse.  For ci the objective is the worst real part of the
    noise-free signals.

    The epigraph value is rescaled internally to O(1) units (its reachable
    range is set by the row gains, which can sit many orders below the
    power bound); results are reported back in original units.
    """
    R, n = rows_a.shape
    reach = bound * np.abs(rows_a).sum(axis=1)   # per-row |t| ceiling
    cons = []
    if metric in ("zf", "mmse"):
        s_alpha = float(np.median(reach / np.abs(targets)))
        if s_alpha <= 0 or not np.isfinite(s_alpha):
            s_alpha = 1.0
        kind = "ray" if metric == "zf" else "capsule"
        radius = float(np.sqrt(epsilon)) if metric == "mmse" else 0.0
        for r in range(R):
            cons.append(ScalarConstraint(kind=kind, a=rows_a[r].conj(),
                                         gamma=complex(targets[r] * s_alpha),
                                         radius=radius))
    elif metric == "ci":
        s_tau = float(np.median(reach))
        g = 1.0 / s_tau if s_tau > 0 else 1.0
        for r in range(R):
            cons.append(ScalarConstraint(kind="halfplane", a=rows_a[r].conj(),
                                         gamma=complex(g), rhs=0.0))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    problem = ConicSubproblem(Q=None, q=np.zeros(n, dtype=complex),
                              bound=np.full(n, bound),
                              constraints=tuple(cons), maximin=True)
    res = solve(problem, tolerance=tolerance, max_iter=max_iter)
    if metric in ("zf", "mmse"):
        res.alpha = res.alpha * s_alpha
        res.tau = res.tau * s_alpha
    else:
        res.tau = res.tau / g
    return res
