"""Switched partial observer, control law and the resilient event trigger."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dos import ACTUATOR, AttackScenario, full_fsdos
from .linalg import DimensionError, RankError, as_matrix, right_pseudo_inverse, spectral_norm


class ConfigurationError(ValueError):
    pass


class DegenerateSystemError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TriggerParams:
    psi1: float
    psi2: float
    underline_Delta: float
    retry_period: float | None = None

    def __post_init__(self):
        if self.retry_period is None:
            object.__setattr__(self, "retry_period", self.underline_Delta)
        for name in ("psi1", "psi2", "underline_Delta", "retry_period"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass
class ObserverState:
    x_e: np.ndarray
    held_y: tuple
    held_xe: np.ndarray
    sigma: int = 0
    last_event_time: float = -math.inf
    last_success_index: int = 0
    any_success: bool = False
    v_threshold: float = 1e-3

    @classmethod
    def initial(cls, plant, x_e0=None, v_threshold: float = 1e-3) -> "ObserverState":
        x_e = np.zeros(plant.n_p) if x_e0 is None else np.array(x_e0, dtype=float)
        if x_e.shape != (plant.n_p,):
            raise DimensionError(f"x_e0 must have shape ({plant.n_p},)")
        if not v_threshold > 0:
            raise ValueError("v_threshold must be positive")
        held = tuple(np.zeros(C.shape[0]) for C in plant.channels)
        return cls(x_e=x_e, held_y=held, held_xe=x_e.copy(), v_threshold=v_threshold)

    def copy(self) -> "ObserverState":
        return replace(
            self,
            x_e=self.x_e.copy(),
            held_y=tuple(y.copy() for y in self.held_y),
            held_xe=self.held_xe.copy(),
        )


@dataclass(frozen=True)
class AttemptRecord:
    time: float
    success: bool
    sensor_resets: tuple[int, ...]
    actuator_reset: bool
    sigma: int
    advanced: bool


@dataclass
class EventLog:
    attempts: list[AttemptRecord] = field(default_factory=list)
    blocked_attempt_indices: set[int] = field(default_factory=set)

    def add(self, rec: AttemptRecord) -> None:
        if self.attempts and not rec.time > self.attempts[-1].time:
            raise ValueError("attempt times must be strictly increasing")
        if not rec.success:
            self.blocked_attempt_indices.add(len(self.attempts))
        self.attempts.append(rec)

    @property
    def success_times(self) -> list[float]:
        return [r.time for r in self.attempts if r.success]

    @property
    def event_times(self) -> list[float]:
        """Times at which t_k advanced (at least one side refreshed)."""
        return [r.time for r in self.attempts if r.advanced]


def select_sigma(state: ObserverState, candidate_outputs: Sequence, t_k_in_fsdos: bool) -> int:
    """Channel-switching rule.

    Leave the active channel once its held output has dropped to the
    threshold ``v``, moving to the lowest-index channel whose output is
    above it. Switching is frozen while the update instant lies in FSDoS.
    """
    if len(candidate_outputs) == 0:
        raise ValueError("at least one channel is required")
    prev = state.sigma
    v = state.v_threshold
    norms = [float(np.linalg.norm(y)) for y in candidate_outputs]
    prev_small = prev == 0 or norms[prev - 1] <= v
    if prev_small and not t_k_in_fsdos:
        for i, nrm in enumerate(norms, start=1):
            if nrm > v:
                return i
    return prev


def observer_derivative(plant, state: ObserverState, u, L: Sequence) -> np.ndarray:
    x_e = state.x_e
    d = plant.A @ x_e + plant.B @ np.asarray(u, dtype=float)
    s = state.sigma
    if s == 0:
        return d
    if s > len(L) or L[s - 1] is None:
        raise ConfigurationError(f"no observer gain for mode {s}")
    C = plant.channels[s - 1]
    return d + np.asarray(L[s - 1]) @ (state.held_y[s - 1] - C @ x_e)


def control_input(state: ObserverState, K, any_success_yet: bool | None = None) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[1] != state.held_xe.shape[0]:
        raise DimensionError(f"K has shape {K.shape}, expected (n_u, {state.held_xe.shape[0]})")
    if any_success_yet is None:
        any_success_yet = state.any_success
    if not any_success_yet:
        return np.zeros(K.shape[0])
    return -K @ state.held_xe


def trigger_errors(state: ObserverState, y_sigma_now, x_e_now) -> tuple[np.ndarray, np.ndarray]:
    s = max(state.sigma, 1)
    xi_sigma = state.held_y[s - 1] - np.asarray(y_sigma_now, dtype=float)
    xi_e = state.held_xe - np.asarray(x_e_now, dtype=float)
    return xi_sigma, xi_e


def trigger_violated(errors, y_sigma_now, x_e_now, params: TriggerParams) -> bool:
    xi_sigma, xi_e = errors
    lhs = float(np.dot(xi_sigma, xi_sigma) + np.dot(xi_e, xi_e))
    y = np.asarray(y_sigma_now, dtype=float)
    x = np.asarray(x_e_now, dtype=float)
    rhs = params.psi1 * float(np.dot(y, y)) + params.psi2 * float(np.dot(x, x))
    return lhs >= rhs


def next_event_time(t_k: float, varpi: float | None, params: TriggerParams) -> float:
    """Next update instant given the first violation time ``varpi`` (None: never)."""
    if varpi is None or math.isinf(varpi):
        return math.inf
    if varpi < t_k:
        raise ValueError("violation time precedes the last event")
    floor = t_k + params.underline_Delta
    return floor if varpi <= floor else float(varpi)


def attempt_update(state: ObserverState, t: float, scenario: AttackScenario, plant, x_p) -> tuple[ObserverState, AttemptRecord]:
    """One transmission attempt at time ``t``.

    Each clear sensor channel delivers a fresh sample; the actuator-side
    hold refreshes iff the actuator channel is clear. A blocked channel
    offers nothing, so for channel selection it looks like a silent
    (zero) output and the rule moves away from it. If the rule still lands
    on a blocked channel while a clear one exists, the lowest clear index
    is taken. The attempt counts as a success only when both the active
    sensor sample and the observer-state hold were refreshed.
    """
    new = state.copy()
    x_p = np.asarray(x_p, dtype=float)
    clear = [not scenario.channel(i).contains(t) for i in range(1, plant.n_s + 1)]
    act_clear = not scenario.actuator_dos.contains(t)
    in_fsdos = full_fsdos(scenario).contains(t)

    fresh = [plant.output(i, x_p) for i in range(1, plant.n_s + 1)]
    seen = [fresh[i] if clear[i] else np.zeros_like(fresh[i]) for i in range(plant.n_s)]
    sigma = select_sigma(new, seen, in_fsdos)
    if (sigma == 0 or not clear[sigma - 1]) and any(clear) and not in_fsdos:
        sigma = clear.index(True) + 1
    if sigma == 0 and any(clear):
        sigma = clear.index(True) + 1

    held = list(new.held_y)
    resets = []
    for i in range(plant.n_s):
        if clear[i]:
            held[i] = fresh[i].copy()
            resets.append(i + 1)
    new.held_y = tuple(held)
    new.sigma = sigma
    if act_clear:
        new.held_xe = new.x_e.copy()

    sensor_ok = sigma >= 1 and clear[sigma - 1]
    success = sensor_ok and act_clear
    advanced = sensor_ok or act_clear
    if advanced:
        new.last_event_time = float(t)
        new.last_success_index += 1
    if success:
        new.any_success = True
    rec = AttemptRecord(float(t), success, tuple(resets), act_clear, sigma, advanced)
    return new, rec


# -- minimum inter-execution time --------------------------------------------

def _simpson(f, n: int) -> float:
    s = np.linspace(0.0, 1.0, n + 1)
    v = f(s)
    h = 1.0 / n
    return h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum())


def inverse_quadratic_integral(a: float, b: float, c: float, tol: float = 1e-12) -> float:
    """``int_0^1 ds / (a + b s + c s^2)`` for a denominator positive on [0, 1].

    Composite Simpson, doubling the panel count until two successive
    Richardson-extrapolated values agree to ``tol``.
    """
    if not a > 0:
        raise DegenerateSystemError("integrand is singular at s = 0")
    f = lambda s: 1.0 / (a + b * s + c * s * s)  # noqa: E731
    n = 8
    prev_s = _simpson(f, n)
    prev_r = None
    while n < 1 << 22:
        n *= 2
        cur_s = _simpson(f, n)
        cur_r = cur_s + (cur_s - prev_s) / 15.0
        if prev_r is not None and abs(cur_r - prev_r) < tol:
            return float(cur_r)
        prev_s, prev_r = cur_s, cur_r
    return float(prev_r)


def interexecution_blocks(plant, K, L_sigma, sigma: int) -> tuple[np.ndarray, np.ndarray]:
    """The two block matrices whose norms enter the inter-event integrand."""
    A, B = plant.A, plant.B
    C = plant.channels[sigma - 1]
    K = as_matrix(K, "K")
    L_sigma = as_matrix(L_sigma, "L")
    m, n = C.shape
    if L_sigma.shape != (n, m):
        raise DimensionError(f"L for mode {sigma} must be {n}x{m}, got {L_sigma.shape}")
    Cp = right_pseudo_inverse(C)
    BK = B @ K
    G = np.block([[C @ A @ Cp, -C @ BK], [L_sigma, A - BK - L_sigma @ C]])
    H = np.block([[np.zeros((m, m)), -C @ BK], [L_sigma, -BK]])
    return G, H


def min_inter_execution(plant, K, L: Sequence, params: TriggerParams) -> tuple[list[float], float]:
    """Per-mode guaranteed inter-event times and their minimum."""
    if len(L) != plant.n_s:
        raise ConfigurationError(f"need {plant.n_s} observer gains, got {len(L)}")
    psi = min(params.psi1, params.psi2)
    rp = math.sqrt(psi)
    out = []
    for s in range(1, plant.n_s + 1):
        try:
            G, H = interexecution_blocks(plant, K, L[s - 1], s)
        except RankError:
            raise
        g, h = spectral_norm(G), spectral_norm(H)
        c = spectral_norm(plant.channels[s - 1])
        a0 = (g + c) / rp
        if a0 == 0.0:
            raise DegenerateSystemError(f"mode {s}: integrand vanishes at s = 0")
        out.append(inverse_quadratic_integral(a0, g + h + c, rp * h))
    return out, min(out)
