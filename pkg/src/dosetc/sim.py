"""Fixed-step closed-loop simulation and empirical stability checks."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .certify import GainSet, ModeConstants, SwitchingRecord, evaluate_iss_bound, mode_constants, underline_delta
from .dos import AttackScenario, IntervalSet, effective_fsdos_intervals, full_fsdos, mcdos_change_instants
from .observer import (
    EventLog,
    ObserverState,
    TriggerParams,
    attempt_update,
    control_input,
    trigger_errors,
    trigger_violated,
)

DIVERGENCE_NORM = 1e12


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DisturbanceSpec:
    """``kind`` is one of zero, constant, sinusoid, noise.

    ``frequency`` is angular (rad per time unit). The constant and sinusoid
    kinds act along the normalized all-ones direction, so ``amplitude`` is
    the sup norm of w. The noise kind draws a fresh vector in the ball of
    radius ``amplitude`` every integration step from a seeded generator.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sinusoid", "noise"):
            raise ConfigError(f"unknown disturbance kind {self.kind!r}")
        if self.amplitude < 0:
            raise ConfigError("disturbance amplitude must be nonnegative")

    @property
    def sup_norm(self) -> float:
        return 0.0 if self.kind == "zero" else float(self.amplitude)


class _Disturbance:
    def __init__(self, spec: DisturbanceSpec, n: int, n_steps: int):
        self.spec = spec
        self.dir = np.ones(n) / math.sqrt(n)
        self.zero = np.zeros(n)
        self.noise = None
        if spec.kind == "noise":
            rng = np.random.Generator(np.random.Philox(int(spec.seed) & 0xFFFFFFFFFFFFFFFF))
            v = rng.normal(size=(n_steps + 1, n))
            v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
            r = rng.uniform(size=(n_steps + 1, 1)) ** (1.0 / n)
            self.noise = spec.amplitude * r * v

    def stages(self, k: int, t: float, dt: float):
        s = self.spec
        if s.kind == "zero":
            return self.zero, self.zero, self.zero
        if s.kind == "constant":
            w = s.amplitude * self.dir
            return w, w, w
        if s.kind == "sinusoid":
            f = lambda tt: s.amplitude * math.sin(s.frequency * tt) * self.dir  # noqa: E731
            return f(t), f(t + 0.5 * dt), f(t + dt)
        w = self.noise[k]
        return w, w, w

    @property
    def stage_constant(self) -> bool:
        return self.spec.kind != "sinusoid"

    def sup(self, k_end: int, dt: float) -> float:
        """Largest stage norm over steps ``0 .. k_end - 1``."""
        s = self.spec
        if k_end <= 0 or s.kind == "zero":
            return 0.0
        if s.kind == "constant":
            return abs(s.amplitude)
        if s.kind == "noise":
            return float(np.sqrt(np.max(np.sum(self.noise[:k_end] ** 2, axis=1))))
        k = np.arange(k_end)
        tt = np.concatenate([k * dt, k * dt + 0.5 * dt, k * dt + dt])
        return float(np.max(np.abs(s.amplitude * np.sin(s.frequency * tt))))


@dataclass
class SimConfig:
    dt: float
    horizon: float
    x_p0: np.ndarray
    x_e0: np.ndarray | None = None
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    v_threshold: float = 1e-3
    retry_period: float | None = None
    record_stride: int = 10
    underline_Delta: float | None = None

    def __post_init__(self):
        self.x_p0 = np.array(self.x_p0, dtype=float)
        if self.x_e0 is not None:
            self.x_e0 = np.array(self.x_e0, dtype=float)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ConfigError("horizon must be at least dt")
        if int(self.record_stride) < 1:
            raise ConfigError("record_stride must be >= 1")
        if self.retry_period is not None and not self.retry_period > 0:
            raise ConfigError("retry_period must be positive")
        if not self.v_threshold > 0:
            raise ConfigError("v_threshold must be positive")


@dataclass
class ClosedLoopState:
    x_p: np.ndarray
    obs: ObserverState


def step(plant, gains: GainSet, state: ClosedLoopState, t: float, dt: float, w_value) -> ClosedLoopState:
    """One classical RK4 step of the plant/observer pair with held inputs.

    ``w_value`` is a vector (held over the step), a callable of time, or a
    triple of vectors for the start, midpoint and end of the step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if callable(w_value):
        w0, wh, w1 = w_value(t), w_value(t + 0.5 * dt), w_value(t + dt)
    elif isinstance(w_value, tuple):
        w0, wh, w1 = w_value
    else:
        w0 = wh = w1 = np.asarray(w_value, dtype=float)
    obs = state.obs
    xp, xe = _rk4(plant, gains, obs, state.x_p, obs.x_e, dt, w0, wh, w1)
    new_obs = obs.copy()
    new_obs.x_e = xe
    return ClosedLoopState(xp, new_obs)


def _rk4(plant, gains, obs, xp, xe, dt, w0, wh, w1):
    # derivative fields with u, y_hat held: plant A xp + B u + w,
    # observer (A - L C) xe + B u + L y_hat (open-loop copy when sigma = 0)
    A = plant.A
    Bu = plant.B @ control_input(obs, gains.K)
    if obs.sigma >= 1:
        L = gains.L[obs.sigma - 1]
        M = A - L @ plant.channels[obs.sigma - 1]
        ce = Bu + L @ obs.held_y[obs.sigma - 1]
    else:
        M, ce = A, Bu
    h2 = 0.5 * dt
    k1p = A @ xp + Bu + w0
    k1e = M @ xe + ce
    k2p = A @ (xp + h2 * k1p) + Bu + wh
    k2e = M @ (xe + h2 * k1e) + ce
    k3p = A @ (xp + h2 * k2p) + Bu + wh
    k3e = M @ (xe + h2 * k2e) + ce
    k4p = A @ (xp + dt * k3p) + Bu + w1
    k4e = M @ (xe + dt * k3e) + ce
    return (xp + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p),
            xe + dt / 6.0 * (k1e + 2 * k2e + 2 * k3e + k4e))


def rk4_linear_maps(F: np.ndarray, h: float):
    """Matrices of one RK4 step for ``z' = F z + c(t)``.

    Returns ``(Phi, Psi0, Psih, Psi1)`` with
    ``z(t+h) = Phi z + Psi0 c(t) + Psih c(t+h/2) + Psi1 c(t+h)``,
    the same arithmetic as the explicit four-stage formula.
    """
    n = F.shape[0]
    I = np.eye(n)
    Z = np.zeros((n, n))
    # stage k_i = Kz z + K0 c0 + Kh ch + K1 c1
    k1 = (F, I, Z, Z)
    k2 = tuple(F @ (0.5 * h * a) for a in k1)
    k2 = (F + k2[0], k2[1], k2[2] + I, k2[3])
    k3 = tuple(F @ (0.5 * h * a) for a in k2)
    k3 = (F + k3[0], k3[1], k3[2] + I, k3[3])
    k4 = tuple(F @ (h * a) for a in k3)
    k4 = (F + k4[0], k4[1], k4[2], k4[3] + I)
    comb = [h / 6.0 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    return I + comb[0], comb[1], comb[2], comb[3]


class _StepMaps:
    """Per-mode RK4 maps for the stacked state ``(x_p, x_e)``."""

    def __init__(self, plant, gains, dt):
        n = plant.n_p
        self.n = n
        self.maps = {}
        for s in range(0, plant.n_s + 1):
            M = plant.A if s == 0 else plant.A - gains.L[s - 1] @ plant.channels[s - 1]
            F = np.block([[plant.A, np.zeros((n, n))], [np.zeros((n, n)), M]])
            phi, p0, ph, p1 = rk4_linear_maps(F, dt)
            # only the plant half of c carries w
            self.maps[s] = (phi, p0 + ph + p1, p0[:, :n], ph[:, :n], p1[:, :n])
        self.qsum = {s: m[2] + m[3] + m[4] for s, m in self.maps.items()}

    def held_term(self, plant, gains, obs):
        Bu = plant.B @ control_input(obs, gains.K)
        ce = Bu + (gains.L[obs.sigma - 1] @ obs.held_y[obs.sigma - 1] if obs.sigma >= 1 else 0.0)
        _, psum, *_ = self.maps[obs.sigma]
        return psum @ np.concatenate([Bu, ce])


def lyapunov_value(gains: GainSet, sigma: int, x_p, x_e) -> float:
    s = max(int(sigma), 1) - 1
    xt = np.asarray(x_p) - np.asarray(x_e)
    return float(x_p @ gains.P_p[s] @ x_p + xt @ gains.P_e[s] @ xt)


@dataclass
class Trace:
    t: np.ndarray
    xp: np.ndarray
    xe: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    xi_sigma_norm: np.ndarray
    xi_e_norm: np.ndarray
    V: np.ndarray
    event: np.ndarray
    blocked: np.ndarray
    log: EventLog
    record: SwitchingRecord
    effective_fsdos: IntervalSet
    summary: dict
    dt: float
    stride: int
    floor_steps: int
    trigger: TriggerParams

    @property
    def x_tilde(self) -> np.ndarray:
        return self.xp - self.xe

    @property
    def x_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xp**2, axis=1) + np.sum(self.x_tilde**2, axis=1))

    def in_effective_fsdos(self) -> np.ndarray:
        """Per-row membership in the effective FSDoS set.

        An interval cut off by the horizon had no closing success, so the
        final row counts as inside it despite the half-open convention.
        """
        eff = self.effective_fsdos
        inside = np.array([eff.contains(float(t)) for t in self.t], dtype=bool)
        if self.t.size and eff.spans and eff.spans[-1][1] >= self.t[-1] and not self.event[-1]:
            inside[-1] = inside[-1] or eff.spans[-1][0] < self.t[-1]
        return inside

    def header(self) -> list[str]:
        n, m = self.xp.shape[1], self.u.shape[1]
        return (["t"] + [f"xp_{i}" for i in range(n)] + [f"xe_{i}" for i in range(n)]
                + [f"u_{i}" for i in range(m)]
                + ["sigma", "xi_sigma_norm", "xi_e_norm", "V", "event", "blocked"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for i in range(self.t.size):
            row = [repr(float(self.t[i]))]
            row += [repr(float(v)) for v in self.xp[i]]
            row += [repr(float(v)) for v in self.xe[i]]
            row += [repr(float(v)) for v in self.u[i]]
            row += [str(int(self.sigma[i])), repr(float(self.xi_sigma_norm[i])), repr(float(self.xi_e_norm[i])),
                    repr(float(self.V[i])), str(int(self.event[i])), str(int(self.blocked[i]))]
            w.writerow(row)
        return buf.getvalue()


def runtime_floor_steps(underline_Delta: float, dt: float) -> int:
    return max(1, math.ceil(underline_Delta / dt - 1e-9))


def run(plant, gains: GainSet, scenario: AttackScenario, config: SimConfig) -> Trace:
    """Simulate the closed loop on the grid ``t_k = k dt``.

    At every grid point the pending update is attempted when due (a retry
    every ``retry_period``, a trigger violation, or a violation seen while
    the minimum inter-event floor was still running), then the row is
    recorded, then the state is advanced one step.
    """
    gains.validate_for(plant)
    if scenario.n_s != plant.n_s:
        raise ConfigError(f"scenario has {scenario.n_s} sensor channels, plant has {plant.n_s}")
    if config.x_p0.shape != (plant.n_p,):
        raise ConfigError(f"x_p0 must have shape ({plant.n_p},)")
    d_min = config.underline_Delta if config.underline_Delta is not None else underline_delta(plant, gains)[1]
    if not d_min > 0:
        raise ConfigError("underline_Delta must be positive")
    dt = config.dt
    if dt > d_min / 4 * (1 + 1e-12):
        raise ConfigError(f"dt={dt} exceeds a quarter of the minimum inter-event time {d_min}")
    trig = TriggerParams(gains.psi1, gains.psi2, d_min, config.retry_period)
    floor = runtime_floor_steps(d_min, dt)
    retry = runtime_floor_steps(trig.retry_period, dt)
    n_steps = int(round(config.horizon / dt))
    stride = int(config.record_stride)
    dist = _Disturbance(config.disturbance, plant.n_p, n_steps)

    maps = _StepMaps(plant, gains, dt)
    obs = ObserverState.initial(plant, config.x_e0, config.v_threshold)
    state = ClosedLoopState(config.x_p0.copy(), obs)
    log = EventLog()
    rows: list[tuple] = []
    pending = True
    violated = False
    last_attempt = -(10**18)
    tk = -(10**18)
    verdict = "stable"
    max_norm = 0.0
    success_steps: list[int] = []
    held = None
    n = plant.n_p
    w_zero = config.disturbance.kind == "zero"
    w_flat = dist.stage_constant

    for k in range(n_steps + 1):
        t = k * dt
        x_p, obs = state.x_p, state.obs
        nrm = math.sqrt(float(x_p @ x_p) + float((x_p - obs.x_e) @ (x_p - obs.x_e)))
        if not math.isfinite(nrm) or nrm > DIVERGENCE_NORM:
            verdict = "diverged"
            break
        max_norm = max(max_norm, nrm)

        attempt = False
        if pending:
            attempt = k >= last_attempt + retry and k >= tk + floor
        else:
            if not violated:
                C = plant.channels[obs.sigma - 1]
                y = C @ x_p
                violated = trigger_violated(trigger_errors(obs, y, obs.x_e), y, obs.x_e, trig)
            attempt = violated and k >= tk + floor
        ev = bl = 0
        if attempt:
            obs, rec = attempt_update(obs, t, scenario, plant, x_p)
            log.add(rec)
            last_attempt = k
            if rec.advanced:
                tk = k
                violated = False
            pending = not rec.success
            if rec.success:
                ev = 1
                success_steps.append(k)
            else:
                bl = 1
            state = ClosedLoopState(x_p, obs)
            held = None

        if k % stride == 0 or k == n_steps:
            s = obs.sigma
            if s >= 1:
                y = plant.channels[s - 1] @ x_p
                xs, xe_err = trigger_errors(obs, y, obs.x_e)
                xsn, xen = float(np.linalg.norm(xs)), float(np.linalg.norm(xe_err))
            else:
                xsn = xen = math.nan
            u = control_input(obs, gains.K)
            rows.append((t, x_p.copy(), obs.x_e.copy(), u, s, xsn, xen,
                         lyapunov_value(gains, s, x_p, obs.x_e), ev, bl))
        if k == n_steps:
            break
        if held is None:
            held = maps.held_term(plant, gains, obs)
        phi, _, q0, qh, q1 = maps.maps[obs.sigma]
        z = phi @ np.concatenate([x_p, obs.x_e]) + held
        if not w_zero:
            w0, wh, w1 = dist.stages(k, t, dt)
            if w_flat:
                z += maps.qsum[obs.sigma] @ w0
            else:
                z += q0 @ w0 + qh @ wh + q1 @ w1
        obs.x_e = z[n:]
        state = ClosedLoopState(z[:n], obs)

    # the loop leaves k equal to the number of steps advanced
    w_sup = dist.sup(k, dt)
    return _assemble(plant, gains, scenario, config, rows, log, success_steps, verdict, max_norm, w_sup,
                     d_min, floor, trig, n_steps)


def _assemble(plant, gains, scenario, config, rows, log, success_steps, verdict, max_norm, w_sup,
              d_min, floor, trig, n_steps) -> Trace:
    dt = config.dt
    t_end = rows[-1][0] if rows else 0.0
    n, m = plant.n_p, plant.n_u
    col = lambda j: [r[j] for r in rows]  # noqa: E731
    succ_times = [k * dt for k in success_steps]

    # switching record: the first successful mode counts as the initial one
    sw_t, sw_m = [0.0], []
    prev = None
    for rec in log.attempts:
        if rec.success and rec.sigma != prev:
            if prev is None:
                sw_m.append(rec.sigma)
            else:
                sw_t.append(rec.time)
                sw_m.append(rec.sigma)
            prev = rec.sigma
    if not sw_m:
        sw_m = [1]
    fs = full_fsdos(scenario)
    horizon = n_steps * dt
    eff = effective_fsdos_intervals(fs.clip(0.0, horizon), succ_times, horizon)
    if not succ_times:
        eff = IntervalSet.from_spans([(0.0, horizon)])
    elif succ_times[0] > 0:
        eff = eff.union(IntervalSet.from_spans([(0.0, succ_times[0])]))
    record = SwitchingRecord(sw_t, sw_m, eff)

    gaps = np.diff(success_steps) if len(success_steps) > 1 else np.array([], dtype=int)
    xs = np.array(col(1)).reshape(-1, n)
    final = float(np.sqrt(np.sum(xs[-1] ** 2) + np.sum((xs[-1] - np.array(col(2)).reshape(-1, n)[-1]) ** 2))) if rows else math.nan
    changes = [x for x in mcdos_change_instants(scenario, fs) if x < horizon]
    summary = {
        "verdict": verdict,
        "t_end": t_end,
        "max_norm": max_norm,
        "final_norm": final if verdict == "stable" else math.inf,
        "event_count": len(success_steps),
        "attempt_count": len(log.attempts),
        "blocked_attempts": len(log.blocked_attempt_indices),
        "min_inter_event_gap": float(gaps.min() * dt) if gaps.size else None,
        "min_inter_event_steps": int(gaps.min()) if gaps.size else None,
        "floor_steps": floor,
        "underline_Delta": d_min,
        "switch_count": len(sw_t) - 1,
        "w_sup": w_sup,
        "dos": {
            "fsdos_measure": fs.clip(0.0, horizon).measure(),
            "fsdos_onsets": sum(1 for a in fs.starts if a < horizon),
            "mcdos_changes": len(changes),
            "effective_fsdos_measure": eff.measure(),
        },
    }
    return Trace(
        t=np.array(col(0), dtype=float),
        xp=xs,
        xe=np.array(col(2)).reshape(-1, n),
        u=np.array(col(3)).reshape(-1, m),
        sigma=np.array(col(4), dtype=int),
        xi_sigma_norm=np.array(col(5), dtype=float),
        xi_e_norm=np.array(col(6), dtype=float),
        V=np.array(col(7), dtype=float),
        event=np.array(col(8), dtype=int),
        blocked=np.array(col(9), dtype=int),
        log=log, record=record, effective_fsdos=eff, summary=summary,
        dt=dt, stride=int(config.record_stride), floor_steps=floor, trigger=trig,
    )


# -- empirical checks -----------------------------------------------------------

def trigger_residuals(trace: Trace, plant) -> np.ndarray:
    """``||xi_sigma||^2 + ||xi_e||^2 - psi1 ||y_sigma||^2 - psi2 ||x_e||^2`` per row."""
    out = np.full(trace.t.size, np.nan)
    for i, s in enumerate(trace.sigma):
        if s < 1:
            continue
        y = plant.channels[s - 1] @ trace.xp[i]
        xe = trace.xe[i]
        out[i] = (trace.xi_sigma_norm[i] ** 2 + trace.xi_e_norm[i] ** 2
                  - trace.trigger.psi1 * float(y @ y) - trace.trigger.psi2 * float(xe @ xe))
    return out


@dataclass
class DissipationReport:
    checked: int
    violations: int
    excluded: int

    @property
    def fraction_ok(self) -> float:
        return 1.0 if self.checked == 0 else 1.0 - self.violations / self.checked

    def to_dict(self) -> dict:
        return {"checked": self.checked, "violations": self.violations, "excluded": self.excluded,
                "fraction_ok": self.fraction_ok}


def check_dissipation(trace: Trace, gains: GainSet, plant, constants=None, slack_coeff: float = 10.0,
                      w_sup: float | None = None) -> DissipationReport:
    """Finite-difference test of ``dV/dt <= -omega_1 V + nu_1 omega_1 f^2``.

    Consecutive rows of the stored V column are compared; when the mode
    changes between them the later value is recomputed in the earlier
    mode. Pairs touching effective FSDoS are skipped. The slack is ``slack_coeff * h * omega_1 * D`` with ``h`` the
    row spacing and ``D`` the larger of ``|dV/dt|`` and ``omega_1 V``.
    """
    if constants is None:
        constants = [mode_constants(plant, gains, s) for s in range(1, plant.n_s + 1)]
    f2 = (trace.summary["w_sup"] if w_sup is None else w_sup) ** 2
    checked = viol = excl = 0
    eff = trace.effective_fsdos
    for i in range(trace.t.size - 1):
        t0, t1 = trace.t[i], trace.t[i + 1]
        s = trace.sigma[i]
        if s < 1 or eff.contains(t0) or eff.contains(t1) or eff.clip(t0, t1).measure() > 0:
            excl += 1
            continue
        c: ModeConstants = constants[s - 1]
        v0 = trace.V[i]
        # across a switch the stored value uses the new mode's P matrices
        v1 = trace.V[i + 1] if trace.sigma[i + 1] == s else lyapunov_value(gains, s, trace.xp[i + 1], trace.xe[i + 1])
        h = t1 - t0
        dv = (v1 - v0) / h
        bound = -c.omega1 * v0 + c.nu1 * c.omega1 * f2
        slack = slack_coeff * h * c.omega1 * max(abs(dv), c.omega1 * v0) + 1e-300
        checked += 1
        if dv > bound + slack:
            viol += 1
    return DissipationReport(checked, viol, excl)


@dataclass
class IssReport:
    applicable: bool
    max_ratio: float
    samples: int
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.applicable and self.max_ratio <= 1.0

    def to_dict(self) -> dict:
        return {"applicable": self.applicable, "max_ratio": self.max_ratio, "samples": self.samples,
                "passed": self.passed, "reason": self.reason}


def check_empirical_iss(trace: Trace, gains: GainSet, plant, w_sup: float, admissible: bool = True,
                        constants=None, every: int = 1) -> IssReport:
    """Largest ratio of the recorded ``||x(t)||`` to the trajectory bound."""
    if not admissible:
        return IssReport(False, math.nan, 0, "attack scenario is not admissible")
    if trace.summary["verdict"] != "stable":
        return IssReport(False, math.nan, 0, "run diverged")
    if constants is None:
        constants = [mode_constants(plant, gains, s) for s in range(1, plant.n_s + 1)]
    xn = trace.x_norm
    x0 = float(xn[0])
    worst = 0.0
    count = 0
    for i in range(0, trace.t.size, max(1, every)):
        b = evaluate_iss_bound(trace.record, gains, plant, float(trace.t[i]), x0, w_sup,
                               underline_Delta=trace.trigger.underline_Delta, constants=constants)
        r = xn[i] / b if b > 0 else (0.0 if xn[i] == 0 else math.inf)
        worst = max(worst, r)
        count += 1
    return IssReport(True, worst, count)
