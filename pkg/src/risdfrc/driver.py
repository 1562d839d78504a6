"""Alternating design loop: initialization, block updates, convergence
control, and assembly of the final waveform / reflection / filter triple."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import comm, radar, solver, surrogate
from .scene import ChannelSet, SceneConfig, link_rng, without_ris

__all__ = [
    "Scheme",
    "DriverOptions",
    "TraceRow",
    "SolveReport",
    "init_phi",
    "init_waveform",
    "update_y",
    "update_varphi",
    "run",
]

SCHEME_METRICS = ("ci", "mmse", "zf", "radar_only")


@dataclass(frozen=True)
class Scheme:
    """Which QoS family constrains the design and whether the RIS is active."""

    metric: str          # "ci" | "mmse" | "zf" | "radar_only"
    ris: bool = True

    def __post_init__(self):
        if self.metric not in SCHEME_METRICS:
            raise ValueError(f"unknown scheme metric {self.metric!r}")

    @property
    def constrained(self) -> bool:
        return self.metric != "radar_only"

    @property
    def name(self) -> str:
        return f"{self.metric}+{'ris' if self.ris else 'no_ris'}"

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        metric, _, tail = name.partition("+")
        if tail not in ("", "ris", "no_ris"):
            raise ValueError(f"bad scheme name {name!r}")
        return cls(metric=metric, ris=tail != "no_ris")


@dataclass(frozen=True)
class DriverOptions:
    max_iter: int = 100
    al_tol: float = 1e-4           # relative change of the augmented value
    feas_tol: float = 1e-4         # ||x - y|| <= feas_tol ||x|| gate for stopping
    solver_tol: float = 1e-6
    solver_max_iter: int = 60000
    phi_init_iters: int = 300
    margin_tol: float = 1e-6
    restore_rounds: int = 10
    lambda3_doublings: int = 6
    rho_stall_window: int = 20
    rho_growth: float = 1.5
    rho_cap: float = 1e3
    trace_filters: bool = True     # evaluate the instantaneous filter per iteration


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    al_value: float
    sinr_db: float
    min_margin: float
    res_x: float                  # ||x - y||
    res_phi: float                # ||phi - varphi||
    wall_s: float


@dataclass
class SolveReport:
    scheme: Scheme
    x: np.ndarray
    phi: np.ndarray
    w: np.ndarray
    alpha: np.ndarray | None
    sinr_db: float
    margins: np.ndarray | None
    zf_residual: float
    iterations: int
    status: str
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins)) if self.margins is not None else np.nan


def _phi_init_objective(phi: np.ndarray, channels: ChannelSet) -> float:
    """Gain of target + user links minus clutter links at reflection phi."""
    val = 0.0
    pairs = [(channels.h_t, channels.B[0], 1.0)]
    pairs += [(channels.h_user[k], channels.B_user[k], 1.0)
              for k in range(channels.config.K)]
    pairs += [(channels.h_c[q - 1], channels.B[q], -1.0)
              for q in range(1, channels.config.Q + 1)]
    for h, B, sign in pairs:
        row = h.conj() + B.T @ phi
        val += sign * float(np.real(row @ row.conj()))
    return val


def _phi_init_gradient(phi: np.ndarray, channels: ChannelSet) -> np.ndarray:
    grad = np.zeros_like(phi)
    pairs = [(channels.h_t, channels.B[0], 1.0)]
    pairs += [(channels.h_user[k], channels.B_user[k], 1.0)
              for k in range(channels.config.K)]
    pairs += [(channels.h_c[q - 1], channels.B[q], -1.0)
              for q in range(1, channels.config.Q + 1)]
    for h, B, sign in pairs:
        grad += sign * np.conj(B @ (h + B.conj().T @ np.conj(phi)))
    return grad


def init_phi(channels: ChannelSet, iterations: int = 300,
             step: float = 1.0, start: np.ndarray | None = None) -> np.ndarray:
    """Projected gradient ascent on the channel-gain criterion.

    Each step moves along the ascent direction and retracts every entry to
    the unit circle; backtracking halves the step when the objective would
    drop, and the best iterate is returned.
    """
    N = channels.config.N
    phi = np.ones(N, dtype=complex) if start is None else start.astype(complex)
    phi = np.exp(1j * np.angle(phi))
    best_phi, best_val = phi.copy(), _phi_init_objective(phi, channels)
    cur_val = best_val
    for _ in range(iterations):
        g = _phi_init_gradient(phi, channels)
        gnorm = np.linalg.norm(g)
        if gnorm == 0:
            break
        trial_step = step
        for _ in range(30):
            cand = phi + trial_step * g / gnorm
            cand = np.exp(1j * np.angle(cand))
            cand_val = _phi_init_objective(cand, channels)
            if cand_val >= cur_val:
                break
            trial_step *= 0.5
        else:
            break
        phi, cur_val = cand, cand_val
        if cur_val > best_val:
            best_phi, best_val = phi.copy(), cur_val
    return best_phi


def init_waveform(phi0: np.ndarray, qos: comm.QosSpec | None,
                  frame: comm.SymbolFrame | None, channels: ChannelSet,
                  options: DriverOptions) -> tuple[np.ndarray, dict]:
    """Relaxed max-min solve followed by per-entry constant-modulus projection.

    Without QoS constraints the waveform is phase-matched per sample to the
    target's effective transmit row.  For the constructive-region metric
    the max-min runs over the derotated margins (both region boundaries per
    symbol), i.e. the worst per-user QoS rather than raw real parts.
    """
    c = channels.config
    amp = c.amplitude
    info: dict = {}
    if qos is None:
        x = _unconstrained_radar_init(channels, phi0)
        info["pre_projection_margin"] = np.nan
        return x, info
    rows = comm.effective_rows(channels, phi0).reshape(c.K * c.L, c.M * c.L)
    targets = None
    if qos.metric in ("zf", "mmse"):
        targets = qos.gamma_zf(frame).reshape(-1)
    else:
        g = qos.gamma_ci(frame).reshape(c.K * c.L, 2)
        rows = np.concatenate([g[:, 0, None] * rows, g[:, 1, None] * rows])
    res = solver.solve_maxmin_init(rows, targets, qos.metric, amp,
                                   epsilon=qos.epsilon,
                                   tolerance=options.solver_tol,
                                   max_iter=options.solver_max_iter)
    if res.status == "infeasible":
        raise RuntimeError(f"{qos.metric} initialization infeasible: "
                           "QoS requirement unreachable at this power")
    x_relaxed = res.z
    x = amp * np.exp(1j * np.angle(np.where(x_relaxed == 0, 1.0, x_relaxed)))
    alpha = comm.fit_alpha(comm.received_frame(x_relaxed, phi0, channels), qos, frame) \
        if qos.metric != "ci" else None
    info["pre_projection_margin"] = float(np.min(comm.qos_margin(
        qos.metric, x_relaxed, phi0, alpha, frame, qos, channels)))
    info["maxmin_value"] = res.tau
    return x, info


def _unconstrained_radar_init(channels: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """Clutter-aware start: dominant generalized eigenvector of the target
    and interference Gram operators, snapped to constant modulus.

    Both Grams are block-diagonal: the rank-one composite channels give
    H^H H = |u|^2 conj(v) v^T per sample, the shift discards trailing
    blocks.
    """
    from scipy.linalg import eigh

    c = channels.config
    ML = c.M * c.L
    ops = radar.stacked_operators(channels, phi)

    def gram(op) -> np.ndarray:
        C = op.H.conj().T @ op.H
        G = np.zeros((ML, ML), dtype=complex)
        for l in range(c.L - op.r):
            G[l * c.M:(l + 1) * c.M, l * c.M:(l + 1) * c.M] = C
        return G

    A_sig = c.varsigma2[0] * gram(ops[0])
    A_int = c.sigma2_z * (ML / c.P) * np.eye(ML, dtype=complex)
    for q in range(1, c.Q + 1):
        A_int += c.varsigma2[q] * gram(ops[q])
    _, vecs = eigh(A_sig, A_int)
    lead = vecs[:, -1]
    phase = np.where(lead == 0, 1.0, np.exp(1j * np.angle(lead)))
    return c.amplitude * phase


def update_y(x: np.ndarray, mu1: np.ndarray, rho: float, P: float, M: int) -> np.ndarray:
    """Phase alignment onto the constant-modulus set; zero entries map to phase 0."""
    target = rho * x + mu1
    phase = np.where(target == 0, 1.0, np.exp(1j * np.angle(target)))
    return np.sqrt(P / M) * phase


def update_varphi(phi: np.ndarray, mu2: np.ndarray, rho: float) -> np.ndarray:
    """Phase alignment onto the unit-modulus set."""
    target = rho * phi + mu2
    return np.where(target == 0, 1.0, np.exp(1j * np.angle(target)))


def _qos_rows_x(channels: ChannelSet, phi: np.ndarray, qos: comm.QosSpec,
                frame: comm.SymbolFrame) -> tuple[solver.ScalarConstraint, ...]:
    """Constraint rows of the waveform subproblem at reflection state phi."""
    c = channels.config
    rows = comm.effective_rows(channels, phi)
    cons = []
    if qos.metric == "ci":
        g = qos.gamma_ci(frame)
        for k in range(c.K):
            for l in range(c.L):
                a = rows[k, l].conj()
                cons.append(solver.ScalarConstraint(kind="halfplane", a=a,
                                                    gamma=complex(g[k, l, 0])))
                cons.append(solver.ScalarConstraint(kind="halfplane", a=a,
                                                    gamma=complex(g[k, l, 1])))
    else:
        kind = "ray" if qos.metric == "zf" else "capsule"
        radius = float(np.sqrt(qos.epsilon))
        g = qos.gamma_zf(frame)
        for k in range(c.K):
            for l in range(c.L):
                cons.append(solver.ScalarConstraint(
                    kind=kind, a=rows[k, l].conj(), gamma=complex(g[k, l]),
                    radius=radius if kind == "capsule" else 0.0))
    return tuple(cons)


def _qos_rows_phi(channels: ChannelSet, x: np.ndarray, qos: comm.QosSpec,
                  frame: comm.SymbolFrame) -> tuple[solver.ScalarConstraint, ...]:
    """Constraint rows of the reflection subproblem at waveform x.

    The scalar channel is g~_{k,l}^T phi with offset h_{k,l}^H x; the solver
    sees a = conj(g~) so that a^H phi produces the transpose form.
    """
    c = channels.config
    xb = x.reshape(c.L, c.M)
    cons = []
    ge_ci = qos.gamma_ci(frame) if qos.metric == "ci" else None
    ge_zf = qos.gamma_zf(frame) if qos.metric != "ci" else None
    radius = float(np.sqrt(qos.epsilon))
    for k in range(c.K):
        gtilde = xb @ channels.B_user[k].T        # row l: B_user[k] @ x[l]
        direct = xb @ channels.h_user[k].conj()   # h_{k,l}^H x
        for l in range(c.L):
            a = gtilde[l].conj()
            off = complex(direct[l])
            if qos.metric == "ci":
                cons.append(solver.ScalarConstraint(
                    kind="halfplane", a=a, gamma=complex(ge_ci[k, l, 0]), offset=off))
                cons.append(solver.ScalarConstraint(
                    kind="halfplane", a=a, gamma=complex(ge_ci[k, l, 1]), offset=off))
            else:
                kind = "ray" if qos.metric == "zf" else "capsule"
                cons.append(solver.ScalarConstraint(
                    kind=kind, a=a, gamma=complex(ge_zf[k, l]), offset=off,
                    radius=radius if kind == "capsule" else 0.0))
    return tuple(cons)


def _augmented_value(x, y, phi, varphi, mu1, mu2, rho, channels) -> float:
    val = radar.concentrated_objective(x, phi, channels)
    val += 0.5 * rho * float(np.linalg.norm(x - y + mu1 / rho) ** 2)
    if phi.size:
        val += 0.5 * rho * float(np.linalg.norm(phi - varphi + mu2 / rho) ** 2)
    return val


def _margins(scheme, x, phi, alpha, frame, qos, channels):
    if not scheme.constrained:
        return None
    metric = qos.metric
    if metric != "ci" and alpha is None:
        alpha = comm.fit_alpha(comm.received_frame(x, phi, channels), qos, frame)
    return comm.qos_margin(metric, x, phi, alpha, frame, qos, channels)


def run(channels: ChannelSet, scheme: Scheme,
        frame: comm.SymbolFrame | None = None,
        qos: comm.QosSpec | None = None,
        options: DriverOptions = DriverOptions()) -> SolveReport:
    """Full alternating solve; returns the report with its iteration trace.

    The QoS-constrained schemes start from the max-min initialization; the
    unconstrained baseline is a local method with no anchor to the symbol
    geometry, so it restarts from a small deterministic set of waveforms
    and keeps the best final design.
    """
    cfg = channels.config
    if scheme.constrained:
        if frame is None or qos is None:
            raise ValueError("constrained schemes need a symbol frame and QoS spec")
        if qos.metric != scheme.metric:
            raise ValueError("scheme metric and QoS spec metric disagree")
    if not scheme.ris:
        channels = without_ris(channels)
    use_phi = scheme.ris and cfg.N > 0
    phi0 = init_phi(channels, options.phi_init_iters) if use_phi \
        else np.ones(cfg.N, dtype=complex)

    if scheme.constrained:
        starts = [init_waveform(phi0, qos, frame, channels, options)[0]]
        if qos.metric != "zf":
            # the exact-ray start is feasible for every looser family;
            # trying it floors the looser metric at the tighter one's basin
            zf_spec = comm.QosSpec(metric="zf", Gamma=qos.Gamma,
                                   sigma=qos.sigma, epsilon=qos.epsilon)
            starts.append(init_waveform(phi0, zf_spec, frame, channels,
                                        options)[0])
    else:
        starts = _radar_only_starts(channels, phi0)

    best = None
    for x0 in starts:
        rep = _iterate(channels, scheme, frame if scheme.constrained else None,
                       qos if scheme.constrained else None, options, x0, phi0)
        if _better_report(rep, best, options):
            best = rep
    return best


def _better_report(cand: SolveReport, incumbent: SolveReport | None,
                   options: DriverOptions) -> bool:
    if incumbent is None:
        return True
    if not np.isfinite(cand.sinr_db):
        return False

    def key(rep: SolveReport):
        feasible = rep.margins is None or \
            float(np.min(rep.margins)) >= -options.margin_tol or \
            rep.scheme.metric == "zf"
        return (feasible, rep.sinr_db)

    return key(cand) > key(incumbent)


def _radar_only_starts(channels: ChannelSet, phi0: np.ndarray) -> list[np.ndarray]:
    cfg = channels.config
    amp = cfg.amplitude
    starts = [_unconstrained_radar_init(channels, phi0)]
    row = channels.h_t.conj() + channels.B[0].T @ phi0
    phase = np.where(row == 0, 1.0, np.exp(-1j * np.angle(row)))
    starts.append(np.tile(amp * phase, cfg.L))
    rng = link_rng(cfg.seed, "radar-start")
    for _ in range(4):
        starts.append(amp * np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.M * cfg.L)))
    return starts


def _iterate(channels: ChannelSet, scheme: Scheme,
             frame: comm.SymbolFrame | None, qos: comm.QosSpec | None,
             options: DriverOptions, x0: np.ndarray,
             phi0: np.ndarray) -> SolveReport:
    cfg = channels.config
    t0 = time.perf_counter()
    amp = cfg.amplitude
    rho = cfg.rho
    N, ML = cfg.N, cfg.M * cfg.L
    use_phi = scheme.ris and N > 0

    x = x0
    phi = phi0.copy()
    y = x.copy()
    varphi = phi.copy()
    mu1 = np.zeros(ML, dtype=complex)
    mu2 = np.zeros(N, dtype=complex)
    alpha = None

    x_state = solver.SolverState()
    phi_state = solver.SolverState()
    trace: list[TraceRow] = []
    al_prev = None
    status = "max_iter"
    best_res_x = np.inf
    stall = 0

    it = 0
    for it in range(1, options.max_iter + 1):
        anchor = surrogate.build_anchor(x, phi, channels)

        # waveform block
        D, d = surrogate.waveform_quadratic(anchor, y, mu1, rho, channels)
        cons_x = _qos_rows_x(channels, phi, qos, frame) if scheme.constrained else ()
        prob_x = solver.ConicSubproblem(Q=D, q=d, bound=np.full(ML, amp),
                                        constraints=cons_x)
        res_x = solver.solve(prob_x, tolerance=options.solver_tol,
                             max_iter=options.solver_max_iter, state=x_state)
        if res_x.status == "infeasible":
            status = "infeasible"
            break
        x = res_x.z
        alpha = res_x.alpha[~np.isnan(res_x.alpha)].reshape(cfg.K, cfg.L) \
            if (scheme.constrained and qos.metric != "ci") else None
        y = update_y(x, mu1, rho, cfg.P, cfg.M)

        # reflection block
        if use_phi:
            reform = surrogate.phi_reformulation(anchor, x, channels)
            cons_p = _qos_rows_phi(channels, x, qos, frame) if scheme.constrained else ()
            f2_old = surrogate.f2_from_reform(phi, reform, varphi, mu2, rho, channels)
            slack = 1e-9 * max(1.0, abs(f2_old))
            lam3 = None
            phi_new = phi
            for attempt in range(options.lambda3_doublings + 1):
                quad = surrogate.phi_surrogate(reform, phi, varphi, mu2, rho,
                                               channels, lambda3_override=lam3)
                prob_p = solver.ConicSubproblem(Q=quad.Ft, q=quad.ft,
                                                bound=np.ones(N),
                                                constraints=cons_p)
                res_p = solver.solve(prob_p, tolerance=options.solver_tol,
                                     max_iter=options.solver_max_iter,
                                     state=phi_state)
                if res_p.status == "infeasible":
                    break
                cand = res_p.z
                gain_quad = surrogate.phi_quad_value(quad, cand) - \
                    surrogate.phi_quad_value(quad, phi)
                f2_new = surrogate.f2_from_reform(cand, reform, varphi, mu2,
                                                  rho, channels)
                if f2_new - f2_old <= gain_quad + slack:
                    phi_new = cand
                    break
                lam3 = 2.0 * quad.lambda3 if quad.lambda3 > 0 else \
                    max(2.0 * quad.lambda2, rho)
            if surrogate.f2_from_reform(phi_new, reform, varphi, mu2, rho,
                                        channels) <= f2_old + slack:
                phi = phi_new
            varphi = update_varphi(phi, mu2, rho)

        mu1 = mu1 + rho * (x - y)
        if use_phi:
            mu2 = mu2 + rho * (phi - varphi)

        al = _augmented_value(x, y, phi, varphi, mu1, mu2, rho, channels)
        if not np.isfinite(al):
            raise FloatingPointError(
                f"augmented value diverged at iteration {it}: {al}")
        rx = float(np.linalg.norm(x - y))
        rp = float(np.linalg.norm(phi - varphi)) if use_phi else 0.0
        if options.trace_filters:
            w_t = radar.mvdr_filter(x, phi, channels)
            sinr_db = 10.0 * np.log10(radar.radar_sinr(x, w_t, phi, channels))
            marg = _margins(scheme, x, phi, alpha, frame, qos, channels)
            min_marg = float(np.min(marg)) if marg is not None else np.nan
        else:
            sinr_db, min_marg = np.nan, np.nan
        trace.append(TraceRow(iteration=it, al_value=al, sinr_db=sinr_db,
                              min_margin=min_marg, res_x=rx, res_phi=rp,
                              wall_s=time.perf_counter() - t0))

        feasible = rx <= options.feas_tol * np.linalg.norm(x) and \
            (not use_phi or rp <= options.feas_tol * np.sqrt(max(N, 1)))
        if al_prev is not None and feasible and \
                abs(al - al_prev) <= options.al_tol * abs(al_prev):
            status = "converged"
            al_prev = al
            break
        al_prev = al

        # penalty growth when the consensus residual stalls
        if rx < 0.9 * best_res_x:
            best_res_x = rx
            stall = 0
        else:
            stall += 1
            if stall > options.rho_stall_window and rho < options.rho_cap:
                rho = min(rho * options.rho_growth, options.rho_cap)
                stall = 0
                best_res_x = rx

    if status == "infeasible":
        w = np.zeros(ML, dtype=complex)
        return SolveReport(scheme=scheme, x=x, phi=phi, w=w, alpha=alpha,
                           sinr_db=np.nan, margins=None, zf_residual=np.nan,
                           iterations=it, status=status, trace=trace)

    x_fin, phi_fin, alpha_fin, status = _finalize(
        channels, scheme, frame, qos, options, x, y, phi, varphi, mu1, mu2,
        rho, status=status)

    w = radar.mvdr_filter(x_fin, phi_fin, channels)
    sinr_db = 10.0 * np.log10(radar.radar_sinr(x_fin, w, phi_fin, channels))
    margins = _margins(scheme, x_fin, phi_fin, alpha_fin, frame, qos, channels)
    zf_res = np.nan
    if scheme.constrained and qos.metric == "zf":
        r = comm.received_frame(x_fin, phi_fin, channels)
        a = comm.fit_alpha(r, qos, frame)
        zf_res = float(np.max(np.abs(r - a * qos.gamma_zf(frame))))
    return SolveReport(scheme=scheme, x=x_fin, phi=phi_fin, w=w,
                       alpha=alpha_fin, sinr_db=float(sinr_db), margins=margins,
                       zf_residual=zf_res, iterations=it, status=status,
                       trace=trace)


def _finalize(channels, scheme, frame, qos, options, x, y, phi, varphi,
              mu1, mu2, rho, status):
    """Snap to the modulus-feasible copies and, for ci/mmse, recover any
    margin lost to the snap with extra waveform rounds at growing rho."""
    cfg = channels.config
    amp = cfg.amplitude
    phi_fin = np.exp(1j * np.angle(np.where(varphi == 0, 1.0, varphi))) \
        if phi.size else phi
    x_fin = amp * np.exp(1j * np.angle(np.where(y == 0, 1.0, y)))

    if not scheme.constrained:
        return x_fin, phi_fin, None, status

    def margins_of(xc):
        a = None
        if qos.metric != "ci":
            a = comm.fit_alpha(comm.received_frame(xc, phi_fin, channels), qos, frame)
        return comm.qos_margin(qos.metric, xc, phi_fin, a, frame, qos, channels), a

    marg, alpha_fin = margins_of(x_fin)
    if qos.metric == "zf" or float(np.min(marg)) >= -options.margin_tol:
        return x_fin, phi_fin, alpha_fin, status

    cons_x = _qos_rows_x(channels, phi_fin, qos, frame)
    rho_r = rho
    state = solver.SolverState()
    best_x, best_min = x_fin, float(np.min(marg))
    for _ in range(options.restore_rounds):
        anchor = surrogate.build_anchor(x, phi_fin, channels)
        D, d = surrogate.waveform_quadratic(anchor, y, mu1, rho_r, channels)
        prob = solver.ConicSubproblem(Q=D, q=d, bound=np.full(x.size, amp),
                                      constraints=cons_x)
        res = solver.solve(prob, tolerance=min(options.solver_tol, 1e-8),
                           max_iter=options.solver_max_iter, state=state)
        if res.status == "infeasible":
            break
        x = res.z
        y = update_y(x, mu1, rho_r, cfg.P, cfg.M)
        mu1 = mu1 + rho_r * (x - y)
        cand = amp * np.exp(1j * np.angle(np.where(y == 0, 1.0, y)))
        marg, alpha_fin = margins_of(cand)
        mn = float(np.min(marg))
        if mn > best_min:
            best_x, best_min = cand, mn
        if mn >= -options.margin_tol:
            return cand, phi_fin, alpha_fin, status
        rho_r = min(rho_r * 2.0, 1e6)
    marg, alpha_fin = margins_of(best_x)
    return best_x, phi_fin, alpha_fin, "margin_restore_incomplete"
