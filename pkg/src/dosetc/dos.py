"""Denial-of-service interval algebra, admissibility checks and attack generation.

Every DoS set is an :class:`IntervalSet` of half-open intervals
``[start, start + length)``; a zero length encodes an impulse ``{start}``.
Full-scale DoS (FSDoS) is the part of the time axis where no control update
can get through: all sensor channels blocked at once, or the
controller-to-actuator channel blocked.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ACTUATOR = "actuator"


class OrderingError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


class IntervalSet:
    """Sorted, disjoint half-open intervals; zero-length entries are impulses.

    Positive-length intervals that overlap or touch are merged. An impulse
    inside a positive interval is absorbed, one sitting exactly on the open
    right end of an interval is kept as a separate entry.
    """

    __slots__ = ("_starts", "_ends")

    def __init__(self, pairs: Iterable[Sequence[float]] = ()):
        spans = []
        for p in pairs:
            s, length = float(p[0]), float(p[1])
            if not (math.isfinite(s) or s == -math.inf) or math.isnan(length):
                raise ValueError(f"bad interval {p!r}")
            if length < 0:
                raise ValueError(f"negative interval length in {p!r}")
            if s < 0:
                raise ValueError(f"interval start must be >= 0, got {s}")
            spans.append((s, s + length))
        self._starts, self._ends = self._normalize(spans)

    @classmethod
    def from_spans(cls, spans: Iterable[tuple[float, float]]) -> "IntervalSet":
        out = cls.__new__(cls)
        out._starts, out._ends = cls._normalize([(float(a), float(b)) for a, b in spans])
        return out

    @staticmethod
    def _normalize(spans):
        pos = sorted((a, b) for a, b in spans if b > a)
        merged: list[list[float]] = []
        for a, b in pos:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        pos_starts = [m[0] for m in merged]
        imps = sorted({a for a, b in spans if b == a})
        kept = []
        for d in imps:
            k = bisect_right(pos_starts, d) - 1
            if k >= 0 and merged[k][0] <= d < merged[k][1]:
                continue
            kept.append(d)
        allspans = sorted([(m[0], m[1]) for m in merged] + [(d, d) for d in kept])
        return tuple(a for a, _ in allspans), tuple(b for _, b in allspans)

    # -- views -----------------------------------------------------------
    @property
    def spans(self) -> list[tuple[float, float]]:
        return list(zip(self._starts, self._ends))

    @property
    def intervals(self) -> list[tuple[float, float]]:
        """``(start, length)`` pairs."""
        return [(a, b - a) for a, b in zip(self._starts, self._ends)]

    @property
    def starts(self) -> tuple[float, ...]:
        return self._starts

    @property
    def ends(self) -> tuple[float, ...]:
        return self._ends

    def positive_spans(self) -> list[tuple[float, float]]:
        return [(a, b) for a, b in zip(self._starts, self._ends) if b > a]

    def impulses(self) -> list[float]:
        return [a for a, b in zip(self._starts, self._ends) if b == a]

    def __len__(self):
        return len(self._starts)

    def __iter__(self):
        return iter(self.intervals)

    def __bool__(self):
        return bool(self._starts)

    def __eq__(self, other):
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._starts == other._starts and self._ends == other._ends

    def __hash__(self):
        return hash((self._starts, self._ends))

    def __repr__(self):
        body = ", ".join(f"[{a:g}, {b:g})" if b > a else f"{{{a:g}}}" for a, b in self.spans)
        return f"IntervalSet({body})"

    # -- queries ---------------------------------------------------------
    def contains(self, t: float) -> bool:
        k = bisect_right(self._starts, t) - 1
        if k < 0:
            return False
        a, b = self._starts[k], self._ends[k]
        return a <= t < b or a == t

    def measure(self) -> float:
        return float(sum(b - a for a, b in zip(self._starts, self._ends)))

    def measure_before(self, x: float) -> float:
        """Measure of the set inside ``[0, x)``."""
        return float(sum(max(0.0, min(b, x) - a) for a, b in zip(self._starts, self._ends) if a < x))

    def contains_interior(self, t: float) -> bool:
        """True iff ``t`` lies strictly inside a positive-length interval."""
        k = bisect_right(self._starts, t) - 1
        return k >= 0 and self._starts[k] < t < self._ends[k]

    # -- algebra ---------------------------------------------------------
    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet.from_spans(self.spans + other.spans)

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        p1, p2 = self.positive_spans(), other.positive_spans()
        i = j = 0
        while i < len(p1) and j < len(p2):
            a = max(p1[i][0], p2[j][0])
            b = min(p1[i][1], p2[j][1])
            if b > a:
                out.append((a, b))
            if p1[i][1] < p2[j][1]:
                i += 1
            else:
                j += 1
        out += [(d, d) for d in self.impulses() if other.contains(d)]
        out += [(d, d) for d in other.impulses() if self.contains(d)]
        return IntervalSet.from_spans(out)

    def clip(self, lo: float, hi: float) -> "IntervalSet":
        """Restriction to the window ``[lo, hi)``."""
        if hi < lo:
            raise OrderingError(f"window start {lo} exceeds end {hi}")
        out = []
        for a, b in self.spans:
            if b == a:
                if lo <= a < hi:
                    out.append((a, a))
                continue
            a2, b2 = max(a, lo), min(b, hi)
            if b2 > a2:
                out.append((a2, b2))
        return IntervalSet.from_spans(out)

    def complement(self, lo: float, hi: float) -> "IntervalSet":
        """``[lo, hi)`` minus the set; impulses (measure zero) are ignored."""
        if hi < lo:
            raise OrderingError(f"window start {lo} exceeds end {hi}")
        out = []
        cur = lo
        for a, b in self.positive_spans():
            if b <= lo:
                continue
            if a >= hi:
                break
            if a > cur:
                out.append((cur, a))
            cur = max(cur, b)
        if cur < hi:
            out.append((cur, hi))
        return IntervalSet.from_spans(out)

    def to_list(self) -> list[list[float]]:
        return [[a, length] for a, length in self.intervals]


EMPTY = IntervalSet()


@dataclass(frozen=True)
class AttackScenario:
    sensor_dos: tuple[IntervalSet, ...]
    actuator_dos: IntervalSet = EMPTY

    def __post_init__(self):
        object.__setattr__(self, "sensor_dos", tuple(self.sensor_dos))
        if not self.sensor_dos:
            raise ValueError("a scenario needs at least one sensor channel")

    @property
    def n_s(self) -> int:
        return len(self.sensor_dos)

    @classmethod
    def quiet(cls, n_s: int) -> "AttackScenario":
        return cls(tuple(EMPTY for _ in range(n_s)), EMPTY)

    def channel(self, i) -> IntervalSet:
        if i == ACTUATOR:
            return self.actuator_dos
        if not isinstance(i, (int, np.integer)) or not 1 <= i <= self.n_s:
            raise IndexError(f"channel index {i!r} outside 1..{self.n_s}")
        return self.sensor_dos[i - 1]

    def event_points(self) -> list[float]:
        pts = set()
        for s in (*self.sensor_dos, self.actuator_dos):
            pts.update(s.starts)
            pts.update(s.ends)
        return sorted(pts)

    def to_dict(self) -> dict:
        return {
            "sensors": [s.to_list() for s in self.sensor_dos],
            "actuator": self.actuator_dos.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackScenario":
        return cls(
            tuple(IntervalSet(ch) for ch in d["sensors"]),
            IntervalSet(d.get("actuator", [])),
        )


@dataclass(frozen=True)
class AssumptionParams:
    """Frequency/duration budgets: (kappa, tau_D) for MCDoS changes,
    (eta, tau_F) for FSDoS onsets and (zeta, T) for FSDoS duration."""

    varkappa: float
    tau_D: float
    eta: float
    tau_F: float
    zeta: float
    T_ratio: float

    def check(self, underline_Delta: float) -> None:
        if min(self.varkappa, self.eta, self.zeta) < 0:
            raise ValueError("varkappa, eta and zeta must be nonnegative")
        if not self.tau_D > underline_Delta:
            raise ValueError(f"tau_D={self.tau_D} must exceed the minimum inter-event time {underline_Delta}")
        if not self.tau_F > underline_Delta:
            raise ValueError(f"tau_F={self.tau_F} must exceed the minimum inter-event time {underline_Delta}")
        if not self.T_ratio > 1:
            raise ValueError(f"T={self.T_ratio} must exceed 1")


def channel_blocked(scenario: AttackScenario, i, t: float) -> bool:
    if t < 0:
        raise ValueError("time must be nonnegative")
    return scenario.channel(i).contains(t)


def full_fsdos(scenario: AttackScenario, sensors_only: bool = False) -> IntervalSet:
    """FSDoS over the whole time axis (no window)."""
    acc = scenario.sensor_dos[0]
    for s in scenario.sensor_dos[1:]:
        acc = acc.intersect(s)
    if not sensors_only:
        acc = acc.union(scenario.actuator_dos)
    return acc


def _check_window(tau, t):
    if tau < 0 or t < tau:
        raise OrderingError(f"need 0 <= tau <= t, got tau={tau}, t={t}")


def fsdos_set(scenario: AttackScenario, tau: float, t: float, sensors_only: bool = False) -> IntervalSet:
    _check_window(tau, t)
    return full_fsdos(scenario, sensors_only).clip(tau, t)


def upsilon_set(scenario: AttackScenario, tau: float, t: float, sensors_only: bool = False) -> IntervalSet:
    _check_window(tau, t)
    return full_fsdos(scenario, sensors_only).complement(tau, t)


def count_fsdos_transitions(scenario: AttackScenario, tau: float, t: float, sensors_only: bool = False) -> int:
    """Number of FSDoS onsets in ``[tau, t)``; an attack already running at
    ``tau`` is not an onset inside the window."""
    _check_window(tau, t)
    return sum(1 for a in full_fsdos(scenario, sensors_only).starts if tau <= a < t)


def fsdos_duration(scenario: AttackScenario, tau: float, t: float, sensors_only: bool = False) -> float:
    return fsdos_set(scenario, tau, t, sensors_only).measure()


def mcdos_change_instants(scenario: AttackScenario, fsdos: IntervalSet | None = None) -> list[float]:
    """Per-channel DoS toggle instants (with multiplicity), minus those inside FSDoS."""
    if fsdos is None:
        fsdos = full_fsdos(scenario)
    out = []
    for ch in scenario.sensor_dos:
        for a, b in ch.spans:
            pts = (a,) if a == b else (a, b)
            out.extend(x for x in pts if not fsdos.contains_interior(x))
    return sorted(out)


def count_mcdos_changes(scenario: AttackScenario, tau: float, t: float) -> int:
    _check_window(tau, t)
    return sum(1 for x in mcdos_change_instants(scenario) if tau <= x < t)


@dataclass
class AssumptionReport:
    mcdos_frequency: bool
    fsdos_frequency: bool
    fsdos_duration: bool
    varkappa_bound: bool
    margins: dict = field(default_factory=dict)
    worst_windows: dict = field(default_factory=dict)

    @property
    def assumptions_hold(self) -> bool:
        """The three counting/duration budgets, without the kappa side condition."""
        return self.mcdos_frequency and self.fsdos_frequency and self.fsdos_duration

    @property
    def ok(self) -> bool:
        return self.assumptions_hold and self.varkappa_bound

    def to_dict(self) -> dict:
        return {
            "mcdos_frequency": self.mcdos_frequency,
            "fsdos_frequency": self.fsdos_frequency,
            "fsdos_duration": self.fsdos_duration,
            "varkappa_bound": self.varkappa_bound,
            "assumptions_hold": self.assumptions_hold,
            "ok": self.ok,
            "margins": self.margins,
            "worst_windows": self.worst_windows,
        }


def _worst(slack: np.ndarray, E: np.ndarray):
    mask = np.triu(np.ones_like(slack, dtype=bool), 1)
    if not mask.any():
        return math.inf, None
    vals = np.where(mask, slack, np.inf)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    return float(vals[k]), (float(E[k[0]]), float(E[k[1]]))


def validate_assumptions(
    scenario: AttackScenario,
    params: AssumptionParams,
    horizon: float,
    underline_Delta: float,
) -> AssumptionReport:
    """Check the three counting/duration budgets on every window ``[tau, t)``
    whose endpoints are scenario event points (plus 0 and the horizon)."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    fs = full_fsdos(scenario)
    pts = {0.0, float(horizon)}
    pts.update(x for x in scenario.event_points() if 0 <= x <= horizon)
    pts.update(x for x in fs.starts + fs.ends if 0 <= x <= horizon)
    E = np.array(sorted(pts))
    length = E[None, :] - E[:, None]

    changes = np.array(mcdos_change_instants(scenario, fs))
    onsets = np.array(fs.starts)
    cum_l = np.searchsorted(changes, E, side="left") if changes.size else np.zeros(E.size, int)
    cum_n = np.searchsorted(onsets, E, side="left") if onsets.size else np.zeros(E.size, int)
    cum_m = np.array([fs.measure_before(x) for x in E])

    l_cnt = cum_l[None, :] - cum_l[:, None]
    n_cnt = cum_n[None, :] - cum_n[:, None]
    dur = cum_m[None, :] - cum_m[:, None]

    slack_l = params.varkappa + length / params.tau_D - l_cnt
    slack_n = params.eta + length / params.tau_F - n_cnt
    slack_d = params.zeta + length / params.T_ratio - dur
    ml, wl = _worst(slack_l, E)
    mn, wn = _worst(slack_n, E)
    md, wd = _worst(slack_d, E)
    kappa_margin = 1.0 - underline_Delta / params.tau_D - params.varkappa
    tol = 1e-12
    return AssumptionReport(
        mcdos_frequency=ml >= -tol,
        fsdos_frequency=mn >= -tol,
        fsdos_duration=md >= -tol * max(1.0, horizon),
        varkappa_bound=kappa_margin >= -tol and params.tau_D > underline_Delta,
        margins={"mcdos_frequency": ml, "fsdos_frequency": mn, "fsdos_duration": md, "varkappa_bound": kappa_margin},
        worst_windows={"mcdos_frequency": wl, "fsdos_frequency": wn, "fsdos_duration": wd},
    )


def effective_fsdos_intervals(fsdos: IntervalSet, event_times: Sequence[float], horizon: float | None = None) -> IntervalSet:
    """Stretch each FSDoS interval up to the first successful update after it.

    An attack interval ``[a, a + l)`` becomes ``[a, e)`` with ``e`` the
    earliest event time strictly later than ``a + l`` that is not itself
    inside the attack set. With no such event the interval runs to
    ``horizon`` (or is left as is when no horizon is given).
    """
    ev = np.asarray(sorted(event_times), dtype=float)
    spans = []
    for a, b in fsdos.spans:
        k = int(np.searchsorted(ev, b, side="right"))
        end = None
        while k < ev.size:
            if not fsdos.contains(ev[k]):
                end = float(ev[k])
                break
            k += 1
        if end is None:
            end = b if horizon is None else max(b, float(horizon))
        spans.append((a, end))
    return IntervalSet.from_spans(spans)


def generate_admissible_attack(
    plant,
    params: AssumptionParams,
    horizon: float,
    underline_Delta: float,
    seed: int,
    *,
    fsdos_attempts: int = 40,
    mcdos_attempts: int = 40,
    actuator_fraction: float = 0.5,
    max_retries: int = 1000,
) -> AttackScenario:
    """Draw a random scenario that satisfies the admissibility budgets.

    Candidate intervals are proposed from a counter-based generator seeded
    with ``seed`` and kept only when the scenario still validates, so the
    result meets the three budgets of :func:`validate_assumptions` by
    construction (the kappa side condition is a property of the parameters). FSDoS is
    realized either on the actuator channel or as a simultaneous outage of
    every sensor channel; MCDoS candidates hit a single sensor channel.
    """
    try:
        params.check(underline_Delta)
    except ValueError as exc:
        raise GenerationError(str(exc)) from exc
    n_s = plant.n_s if hasattr(plant, "n_s") else int(plant)
    sensors = [[] for _ in range(n_s)]
    actuator: list[tuple[float, float]] = []

    def build():
        return AttackScenario(tuple(IntervalSet.from_spans(s) for s in sensors), IntervalSet.from_spans(actuator))

    def admissible():
        return validate_assumptions(build(), params, horizon, underline_Delta).assumptions_hold

    if not admissible():
        raise GenerationError("the empty scenario already violates the budgets")

    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    max_fs_len = params.zeta + horizon / params.T_ratio
    retries = 0

    def propose(max_len):
        start = float(rng.uniform(0.0, horizon))
        length = float(rng.uniform(0.0, max_len)) if max_len > 0 else 0.0
        return start, min(start + length, horizon)

    for _ in range(fsdos_attempts):
        if retries >= max_retries:
            break
        if params.eta < 1:
            break  # no room for even a single onset
        a, b = propose(max_fs_len)
        use_actuator = rng.uniform() < actuator_fraction
        target = [actuator] if use_actuator else sensors
        for lst in target:
            lst.append((a, b))
        if not admissible():
            for lst in target:
                lst.pop()
            retries += 1

    if n_s >= 2:
        mc_len = max(params.tau_D, horizon / 10)
        for _ in range(mcdos_attempts):
            if retries >= max_retries:
                break
            i = int(rng.integers(n_s))
            a, b = propose(mc_len)
            sensors[i].append((a, b))
            if not admissible():
                sensors[i].pop()
                retries += 1

    scen = build()
    if not admissible():
        raise GenerationError("could not produce an admissible scenario")
    return scen
