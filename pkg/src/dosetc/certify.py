"""LMI verification, stability constants, heuristic gain synthesis and the
trajectory bound along a realized switching record.

Block layout of the augmented state is ``(x_p, x_tilde)`` where
``x_tilde = x_p - x_e`` is the estimation error.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dos import AssumptionParams, IntervalSet
from .linalg import (
    DimensionError,
    NoSolutionError,
    as_matrix,
    he,
    lambda_max,
    lambda_min,
    is_positive_definite,
    solve_lyapunov,
    spectral_norm,
    sym_part,
    symmetrize,
)
from .observer import TriggerParams, min_inter_execution

PD_TOL = 1e-9
SQRT2P1 = 1.0 + math.sqrt(2.0)
DEFAULT_EPS34 = 1e6


class CertificationOrderError(ArithmeticError):
    """A constant was requested for a mode whose prerequisites fail."""


class InvalidRecordError(ValueError):
    pass


class OrderingError(ValueError):
    pass


def _per_mode(v, n, name):
    if np.isscalar(v):
        return [float(v)] * n
    v = [float(x) for x in v]
    if len(v) != n:
        raise DimensionError(f"{name} needs {n} entries, got {len(v)}")
    return v


@dataclass
class GainSet:
    K: np.ndarray
    L: list
    P_p: list
    P_e: list
    psi1: float
    psi2: float
    eps1: list
    eps2: list
    eps3: list | None = None
    eps4: list | None = None

    def __post_init__(self):
        n = len(self.L)
        self.K = as_matrix(self.K, "K")
        self.L = [as_matrix(x, f"L[{i}]") for i, x in enumerate(self.L)]
        self.P_p = [symmetrize(x) for x in self.P_p]
        self.P_e = [symmetrize(x) for x in self.P_e]
        if len(self.P_p) != n or len(self.P_e) != n:
            raise DimensionError("L, P_p and P_e must have one entry per mode")
        self.eps1 = _per_mode(self.eps1, n, "eps1")
        self.eps2 = _per_mode(self.eps2, n, "eps2")
        self.eps3 = _per_mode(DEFAULT_EPS34 if self.eps3 is None else self.eps3, n, "eps3")
        self.eps4 = _per_mode(DEFAULT_EPS34 if self.eps4 is None else self.eps4, n, "eps4")
        for name in ("psi1", "psi2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("eps1", "eps2", "eps3", "eps4"):
            if min(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        for i, (pp, pe) in enumerate(zip(self.P_p, self.P_e)):
            if not (is_positive_definite(pp) and is_positive_definite(pe)):
                raise ValueError(f"P_p/P_e of mode {i + 1} must be positive definite")

    @property
    def n_modes(self) -> int:
        return len(self.L)

    def validate_for(self, plant) -> None:
        n, m = plant.n_p, plant.n_u
        if self.n_modes != plant.n_s:
            raise DimensionError(f"gain set has {self.n_modes} modes, plant has {plant.n_s} channels")
        if self.K.shape != (m, n):
            raise DimensionError(f"K must be {m}x{n}, got {self.K.shape}")
        for i, C in enumerate(plant.channels):
            if self.L[i].shape != (n, C.shape[0]):
                raise DimensionError(f"L[{i + 1}] must be {n}x{C.shape[0]}, got {self.L[i].shape}")
            if self.P_p[i].shape != (n, n) or self.P_e[i].shape != (n, n):
                raise DimensionError(f"P matrices of mode {i + 1} must be {n}x{n}")
        try:
            solve_lyapunov(plant.A - plant.B @ self.K, np.eye(n))
        except NoSolutionError as exc:
            raise ValueError("A - BK is not Hurwitz") from exc

    def trigger_params(self, underline_Delta: float, retry_period: float | None = None) -> TriggerParams:
        return TriggerParams(self.psi1, self.psi2, underline_Delta, retry_period)

    def to_dict(self) -> dict:
        return {
            "K": self.K.tolist(),
            "L": [x.tolist() for x in self.L],
            "P_p": [x.tolist() for x in self.P_p],
            "P_e": [x.tolist() for x in self.P_e],
            "psi1": self.psi1,
            "psi2": self.psi2,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "eps3": self.eps3,
            "eps4": self.eps4,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GainSet":
        return cls(
            K=d["K"], L=d["L"], P_p=d["P_p"], P_e=d["P_e"],
            psi1=float(d["psi1"]), psi2=float(d["psi2"]),
            eps1=d["eps1"], eps2=d["eps2"], eps3=d.get("eps3"), eps4=d.get("eps4"),
        )


def _mode(plant, gains, sigma):
    if not 1 <= sigma <= plant.n_s:
        raise IndexError(f"mode {sigma} outside 1..{plant.n_s}")
    i = sigma - 1
    return (plant.A, plant.B, plant.channels[i], gains.K, gains.L[i], gains.P_p[i], gains.P_e[i],
            gains.eps1[i], gains.eps2[i])


def build_gamma1(plant, gains: GainSet, sigma: int) -> np.ndarray:
    A, B, C, K, L, Pp, Pe, e1, e2 = _mode(plant, gains, sigma)
    n = A.shape[0]
    I = np.eye(n)
    BK = B @ K
    PBK = Pp @ BK
    PL = Pe @ L
    t11 = -he(Pp @ (A - BK)) - PBK @ PBK.T - gains.psi1 * C.T @ C - gains.psi2 * I - Pp @ Pp / e1
    t12 = -PBK + gains.psi2 * I
    t22 = -he(Pe @ (A - L @ C)) - PL @ PL.T - gains.psi2 * I - Pe @ Pe / e2
    G = np.block([[t11, t12], [t12.T, t22]])
    return sym_part(G)


def build_gamma2(plant, gains: GainSet, sigma: int) -> np.ndarray:
    A, B, C, K, L, Pp, Pe, e1, e2 = _mode(plant, gains, sigma)
    n, m = A.shape[0], C.shape[0]
    I = np.eye(n)
    Z = np.zeros((n, n))
    Zm = np.zeros((n, m))
    BK = B @ K
    N = Pe @ L
    th1 = -he(Pp @ (A - BK)) - gains.psi1 * C.T @ C - gains.psi2 * I
    th12 = -Pp @ BK + gains.psi2 * I
    th2 = -he(Pe @ A) + N @ C + C.T @ N.T - gains.psi2 * I
    upper = [
        [th1, Pp, Pp @ BK, th12, Z, Zm],
        [None, e1 * I, Z, Z, Z, Zm],
        [None, None, I, Z, Z, Zm],
        [None, None, None, th2, Pe, N],
        [None, None, None, None, e2 * I, Zm],
        [None, None, None, None, None, np.eye(m)],
    ]
    rows = []
    for r in range(6):
        row = []
        for c in range(6):
            row.append(upper[r][c] if c >= r else upper[c][r].T)
        rows.append(row)
    return sym_part(np.block(rows))


def schur_reduce_gamma2(G2: np.ndarray, n: int, m: int) -> np.ndarray:
    """Eliminate blocks 2, 3, 5, 6 of a Gamma_2-shaped matrix."""
    idx_keep = np.r_[0:n, 3 * n:4 * n]
    idx_elim = np.r_[n:3 * n, 4 * n:5 * n + m]
    X = G2[np.ix_(idx_keep, idx_keep)]
    Y = G2[np.ix_(idx_keep, idx_elim)]
    Z = G2[np.ix_(idx_elim, idx_elim)]
    return sym_part(X - Y @ np.linalg.solve(Z, Y.T))


@dataclass
class LmiReport:
    passed: bool
    per_mode: list[bool]
    lambda_min_gamma2: list[float]
    lambda_min_gamma1: list[float]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "per_mode": self.per_mode,
            "lambda_min_gamma2": self.lambda_min_gamma2,
            "lambda_min_gamma1": self.lambda_min_gamma1,
        }


def verify_lmi(plant, gains: GainSet, tol: float = PD_TOL) -> LmiReport:
    gains.validate_for(plant)
    l2, l1, ok = [], [], []
    for s in range(1, plant.n_s + 1):
        g2 = lambda_min(build_gamma2(plant, gains, s))
        g1 = lambda_min(build_gamma1(plant, gains, s))
        l2.append(g2)
        l1.append(g1)
        ok.append(g2 > tol)
    return LmiReport(all(ok), ok, l2, l1)


def _lmax_nonsym(M: np.ndarray, convention: str) -> float:
    if convention == "norm":
        return spectral_norm(M)
    if convention == "sym":
        return lambda_max(sym_part(M))
    raise ValueError(f"unknown convention {convention!r}")


def build_gamma5(plant, gains: GainSet, sigma: int) -> np.ndarray:
    A, B, C, K, L, Pp, Pe, e1, e2 = _mode(plant, gains, sigma)
    PBK = Pp @ B @ K
    top = he(Pp @ (A - B @ K)) + Pp @ Pp / e1
    bot = he(Pe @ (A - L @ C)) + Pe @ Pe / e2
    return sym_part(np.block([[top, PBK], [PBK.T, bot]]))


def gamma_terms(plant, gains: GainSet, sigma: int, convention: str = "norm") -> dict:
    """gamma_1..3 together with the 2x2 matrices Gamma_3 and Gamma_4."""
    A, B, C, K, L, Pp, Pe, *_ = _mode(plant, gains, sigma)
    G5 = build_gamma5(plant, gains, sigma)
    g1 = lambda_min(-G5)
    if not g1 > PD_TOL:
        raise CertificationOrderError(f"mode {sigma}: Gamma_5 is not negative definite")
    g2 = _lmax_nonsym(Pp @ B @ K, convention)
    g3 = spectral_norm(Pe @ L)
    nc = spectral_norm(C)
    r1, r2 = SQRT2P1 * math.sqrt(gains.psi1), SQRT2P1 * math.sqrt(gains.psi2)
    G3 = np.array([[2 * g2 - g1, g3], [g3, -g1]])
    G4 = np.array([
        [g2 * (r1 * nc + r2 + 2), g2 * (r2 + 2)],
        [g3 * ((r1 + 2) * nc + r2), g3 * r2],
    ])
    return {"gamma1": g1, "gamma2": g2, "gamma3": g3, "Gamma3": G3, "Gamma4": G4}


def alpha_bounds(gains: GainSet, sigma: int) -> tuple[float, float]:
    Pp, Pe = gains.P_p[sigma - 1], gains.P_e[sigma - 1]
    return min(lambda_min(Pp), lambda_min(Pe)), max(lambda_max(Pp), lambda_max(Pe))


def rates(plant, gains: GainSet, sigma: int, convention: str = "norm") -> tuple[float, float]:
    """Decay rate outside FSDoS and growth rate inside it for mode ``sigma``."""
    lo, hi = alpha_bounds(gains, sigma)
    zeta1 = lambda_min(build_gamma1(plant, gains, sigma))
    if not zeta1 > PD_TOL:
        raise CertificationOrderError(f"mode {sigma}: Gamma_1 is not positive definite")
    omega1 = zeta1 / hi
    gt = gamma_terms(plant, gains, sigma, convention)
    lm4 = _lmax_nonsym(gt["Gamma4"], convention)
    omega2 = (lambda_max(gt["Gamma3"]) + lm4) / lo
    return omega1, omega2


@dataclass
class ModeConstants:
    sigma: int
    zeta1: float
    lambda_min_gamma2: float
    omega1: float
    omega2: float
    nu1: float
    nu2: float
    nu3: float
    alpha_lo: float
    alpha_hi: float
    underline_Delta: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mode_constants(plant, gains: GainSet, sigma: int, underline_Delta: float = math.nan,
                   convention: str = "norm") -> ModeConstants:
    i = sigma - 1
    lo, hi = alpha_bounds(gains, sigma)
    zeta1 = lambda_min(build_gamma1(plant, gains, sigma))
    om1, om2 = rates(plant, gains, sigma, convention)
    nu1 = (gains.eps1[i] + gains.eps2[i] + gains.psi1) / om1
    nu2 = gains.eps1[i] + gains.eps2[i] + gains.eps3[i] / 2 + gains.eps4[i] / 2
    return ModeConstants(
        sigma=sigma, zeta1=zeta1,
        lambda_min_gamma2=lambda_min(build_gamma2(plant, gains, sigma)),
        omega1=om1, omega2=om2, nu1=nu1, nu2=nu2, nu3=nu2 / om2,
        alpha_lo=lo, alpha_hi=hi, underline_Delta=underline_Delta,
    )


def underline_delta(plant, gains: GainSet) -> tuple[list[float], float]:
    # the floor value itself does not enter the integral
    return min_inter_execution(plant, gains.K, gains.L, TriggerParams(gains.psi1, gains.psi2, 1.0))


def tau_d_lower_bound(plant, gains: GainSet, underline_Delta: float | None = None) -> float:
    if underline_Delta is None:
        underline_Delta = underline_delta(plant, gains)[1]
    worst = 0.0
    for s in range(1, plant.n_s + 1):
        lo, hi = alpha_bounds(gains, s)
        zeta1 = lambda_min(build_gamma1(plant, gains, s))
        if not zeta1 > PD_TOL:
            raise CertificationOrderError(f"mode {s}: Gamma_1 is not positive definite")
        worst = max(worst, hi / zeta1 * math.log(hi / lo))
    return max(underline_Delta, worst)


def varkappa_upper_bound(underline_Delta: float, tau_D: float) -> float:
    if not tau_D > underline_Delta:
        raise OrderingError(f"tau_D={tau_D} must exceed underline_Delta={underline_Delta}")
    return 1.0 - underline_Delta / tau_D


@dataclass
class FsdosConditionReport:
    lhs: float
    rhs: float
    passed: bool
    zeta_star: float
    T_star: float
    beta: list[float]
    secondary_passed: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["margin"] = self.margin
        return d


def check_fsdos_condition(plant, gains: GainSet, params: AssumptionParams, underline_Delta: float,
                          retry_period: float | None = None, convention: str = "norm",
                          mode_rates: Sequence[tuple[float, float]] | None = None) -> FsdosConditionReport:
    if mode_rates is None:
        mode_rates = [rates(plant, gains, s, convention) for s in range(1, plant.n_s + 1)]
    delta_star = underline_Delta if retry_period is None else retry_period
    lhs = 1.0 / params.T_ratio + underline_Delta / params.tau_F
    rhs = min(w1 / (w1 + w2) for w1, w2 in mode_rates)
    zeta_star = params.zeta + (1.0 + params.eta) * delta_star
    T_star = params.T_ratio * params.tau_F / (params.T_ratio * delta_star + params.tau_F)
    beta = [w1 - (w1 + w2) / T_star for w1, w2 in mode_rates]
    return FsdosConditionReport(lhs, rhs, lhs < rhs, zeta_star, T_star, beta, all(b > 0 for b in beta))


@dataclass
class CertificationReport:
    lmi: LmiReport
    modes: list[ModeConstants]
    underline_Delta_modes: list[float]
    underline_Delta: float
    alpha_lo: float
    alpha_hi: float
    tau_D_lower_bound: float
    varkappa_upper_bound: float | None
    fsdos: FsdosConditionReport | None
    tau_D: float | None = None
    varkappa: float | None = None
    errors: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if not self.lmi.passed or self.errors:
            return False
        if any(not (m.omega1 > 0 and m.omega2 > 0) for m in self.modes):
            return False
        if self.tau_D is not None and not self.tau_D > self.tau_D_lower_bound:
            return False
        if self.varkappa is not None and self.varkappa_upper_bound is not None:
            if self.varkappa > self.varkappa_upper_bound:
                return False
        if self.fsdos is not None and not (self.fsdos.passed and self.fsdos.secondary_passed):
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "lmi": self.lmi.to_dict(),
            "modes": [m.to_dict() for m in self.modes],
            "underline_Delta_modes": self.underline_Delta_modes,
            "underline_Delta": self.underline_Delta,
            "alpha_lo": self.alpha_lo,
            "alpha_hi": self.alpha_hi,
            "tau_D_lower_bound": self.tau_D_lower_bound,
            "varkappa_upper_bound": self.varkappa_upper_bound,
            "tau_D": self.tau_D,
            "varkappa": self.varkappa,
            "fsdos": None if self.fsdos is None else self.fsdos.to_dict(),
            "errors": self.errors,
        }


def certify(plant, gains: GainSet, params: AssumptionParams | None = None,
            retry_period: float | None = None, convention: str = "norm") -> CertificationReport:
    """Run every analytic check and collect the constants in one report."""
    lmi = verify_lmi(plant, gains)
    d_modes, d_min = underline_delta(plant, gains)
    errors: list[str] = []
    modes: list[ModeConstants] = []
    for s in range(1, plant.n_s + 1):
        try:
            modes.append(mode_constants(plant, gains, s, d_modes[s - 1], convention))
        except CertificationOrderError as exc:
            errors.append(str(exc))
    bounds = [alpha_bounds(gains, s) for s in range(1, plant.n_s + 1)]
    a_lo = min(b[0] for b in bounds)
    a_hi = max(b[1] for b in bounds)
    tau_lb = math.nan
    if not errors:
        tau_lb = tau_d_lower_bound(plant, gains, d_min)
    kub = fs = None
    tau_D = kappa = None
    if params is not None:
        tau_D, kappa = params.tau_D, params.varkappa
        try:
            kub = varkappa_upper_bound(d_min, params.tau_D)
        except OrderingError as exc:
            errors.append(str(exc))
        if not errors:
            fs = check_fsdos_condition(plant, gains, params, d_min, retry_period,
                                       mode_rates=[(m.omega1, m.omega2) for m in modes])
    return CertificationReport(lmi, modes, d_modes, d_min, a_lo, a_hi, tau_lb, kub, fs, tau_D, kappa, errors)


# -- synthesis -----------------------------------------------------------------

@dataclass
class SynthesisOptions:
    psi_grid: Sequence[float] = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 1e-4)
    scale_grid: Sequence[float] = tuple(float(x) for x in np.geomspace(1.0, 1e-3, 13))
    eps_grid: Sequence[float] = (1.0, 10.0, 100.0, 1e3, 1e4)
    shift_grid: Sequence[float] = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    objective: str = "first"  # or "omega1": best decay rate at the first feasible psi
    max_evaluations: int = 500_000


@dataclass
class SynthesisResult:
    gains: GainSet | None
    feasible: bool
    best_lambda_min: list[float]
    evaluations: int
    grid_point: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "best_lambda_min": self.best_lambda_min,
            "evaluations": self.evaluations,
            "grid_point": self.grid_point,
            "gains": None if self.gains is None else self.gains.to_dict(),
        }


def observer_gain(A: np.ndarray, C: np.ndarray, shift: float) -> np.ndarray | None:
    """``L`` with ``A - L C`` decaying faster than ``shift`` (dual Lyapunov construction)."""
    n = A.shape[0]
    Ash = A + shift * np.eye(n)
    try:
        P = solve_lyapunov(-Ash, C.T @ C)
    except NoSolutionError:
        return None
    if not is_positive_definite(P, 1e-12):
        return None
    return np.linalg.solve(P, C.T)


def _gamma1_batch(A, B, C, K, L, X, Y, cs, ds, psi, e1s, e2s):
    """Gamma_1 for P_p = c X, P_e = d Y over a batch of (c, d, eps1, eps2)."""
    n = A.shape[0]
    I = np.eye(n)
    cs, ds, e1s, e2s = (np.asarray(v, dtype=float)[:, None, None] for v in (cs, ds, e1s, e2s))
    BK = B @ K
    XBK = X @ BK
    YL = Y @ L
    t11 = (-cs * he(X @ (A - BK)) - cs**2 * (XBK @ XBK.T) - psi * (C.T @ C) - psi * I
           - cs**2 * (X @ X) / e1s)
    t12 = -cs * XBK + psi * I
    t22 = -ds * he(Y @ (A - L @ C)) - ds**2 * (YL @ YL.T) - psi * I - ds**2 * (Y @ Y) / e2s
    top = np.concatenate([t11, t12], axis=2)
    bot = np.concatenate([np.swapaxes(t12, 1, 2), t22], axis=2)
    return np.concatenate([top, bot], axis=1)


def synthesize_candidate_gains(plant, K, options: SynthesisOptions | None = None) -> SynthesisResult:
    """Deterministic grid search for gains that pass :func:`verify_lmi`.

    Observer gains come from the dual Lyapunov construction at several decay
    shifts, P_p and P_e are scaled Lyapunov solutions of the closed-loop and
    error dynamics. ``psi`` (shared by both trigger weights) is scanned from
    large to small so the trigger stays as loose as the grid allows. The
    screening uses LAPACK eigenvalues; the final answer is re-checked with
    :func:`verify_lmi`.
    """
    opts = options or SynthesisOptions()
    if opts.objective not in ("first", "omega1"):
        raise ValueError(f"unknown objective {opts.objective!r}")
    A, B = plant.A, plant.B
    K = as_matrix(K, "K")
    n = plant.n_p
    I = np.eye(n)
    try:
        X = solve_lyapunov(A - B @ K, I)
    except NoSolutionError as exc:
        raise ValueError("A - BK is not Hurwitz") from exc
    base = max(float(np.max(np.linalg.eigvals(A).real)), 0.0)

    per_mode: list[list[tuple[float, np.ndarray, np.ndarray]]] = []
    for C in plant.channels:
        cands = []
        for mu in opts.shift_grid:
            L = observer_gain(A, C, base + mu)
            if L is None:
                continue
            try:
                Y = solve_lyapunov(A - L @ C, I)
            except NoSolutionError:
                continue
            cands.append((mu, L, Y))
        per_mode.append(cands)

    grid = np.array(list(itertools.product(opts.scale_grid, opts.scale_grid, opts.eps_grid, opts.eps_grid)))
    lx = np.linalg.eigvalsh(X)[-1]
    evals = 0
    best = [-math.inf] * plant.n_s
    for psi in opts.psi_grid:
        chosen = []
        for s, C in enumerate(plant.channels, start=1):
            hit = None
            for mu, L, Y in per_mode[s - 1]:
                if evals >= opts.max_evaluations:
                    break
                evals += len(grid)
                G = _gamma1_batch(A, B, C, K, L, X, Y, grid[:, 0], grid[:, 1], psi, grid[:, 2], grid[:, 3])
                lm = np.linalg.eigvalsh(G)[:, 0]
                best[s - 1] = max(best[s - 1], float(lm.max()))
                ok = np.flatnonzero(lm > 10 * PD_TOL)
                if ok.size == 0:
                    continue
                if opts.objective == "first":
                    k = int(ok[0])
                    hit = (float(lm[k]), mu, L, Y, grid[k])
                    break
                ly = np.linalg.eigvalsh(Y)[-1]
                om = lm[ok] / np.maximum(grid[ok, 0] * lx, grid[ok, 1] * ly)
                k = int(ok[np.argmax(om)])
                score = float(om.max())
                if hit is None or score > hit[0]:
                    hit = (score, mu, L, Y, grid[k])
            if hit is None:
                break
            chosen.append(hit)
        if len(chosen) == plant.n_s:
            gains = GainSet(
                K=K, L=[h[2] for h in chosen],
                P_p=[h[4][0] * X for h in chosen], P_e=[h[4][1] * h[3] for h in chosen],
                psi1=psi, psi2=psi,
                eps1=[float(h[4][2]) for h in chosen], eps2=[float(h[4][3]) for h in chosen],
            )
            rep = verify_lmi(plant, gains)
            if rep.passed:
                point = [
                    {"psi": psi, "shift": h[1], "scale_p": float(h[4][0]), "scale_e": float(h[4][1]),
                     "eps1": float(h[4][2]), "eps2": float(h[4][3])}
                    for h in chosen
                ]
                return SynthesisResult(gains, True, rep.lambda_min_gamma2, evals, point)
        if evals >= opts.max_evaluations:
            break
    return SynthesisResult(None, False, best, evals)


# -- trajectory bound -----------------------------------------------------------

@dataclass
class SwitchingRecord:
    """Realized mode switches. ``switch_times[0]`` must be 0 (the initial mode)."""

    switch_times: list[float]
    mode_after: list[int]
    effective_fsdos: IntervalSet = field(default_factory=IntervalSet)

    def __post_init__(self):
        if len(self.switch_times) != len(self.mode_after) or not self.switch_times:
            raise InvalidRecordError("switch_times and mode_after must be nonempty and aligned")
        if self.switch_times[0] != 0.0:
            raise InvalidRecordError("the record must start at time 0")
        if any(b <= a for a, b in zip(self.switch_times, self.switch_times[1:])):
            raise InvalidRecordError("switch times must be strictly increasing")

    def mode_at(self, t: float) -> int:
        k = int(np.searchsorted(self.switch_times, t, side="right")) - 1
        return self.mode_after[max(k, 0)]

    def occupancy(self, sigma: int, lo: float, hi: float) -> float:
        """Time spent in ``sigma`` within ``[lo, hi)``."""
        total = 0.0
        ends = list(self.switch_times[1:]) + [math.inf]
        for a, b, s in zip(self.switch_times, ends, self.mode_after):
            if s == sigma:
                total += max(0.0, min(b, hi) - max(a, lo))
        return total


def evaluate_iss_bound(record: SwitchingRecord, gains: GainSet, plant, t: float, x0_norm: float,
                       w_sup: float, underline_Delta: float | None = None,
                       constants: Sequence[ModeConstants] | None = None) -> float:
    """Upper bound on ``||x(t)||`` along ``record`` by Lyapunov comparison.

    The horizon is cut at switches and effective-FSDoS boundaries. On a
    clear piece the mode's Lyapunov value decays with rate omega_1 plus a
    nu_1-weighted disturbance term; inside effective FSDoS it may grow with
    rate omega_2 with a nu_3-weighted term. At a switch the value is carried
    over through the ratio of the new upper to the old lower Rayleigh bound.
    Disturbance and initial-state contributions are propagated separately
    and combined as ``sqrt(a) + sqrt(b)``.
    """
    if t < 0 or x0_norm < 0 or w_sup < 0:
        raise ValueError("t, x0_norm and w_sup must be nonnegative")
    if constants is None:
        if underline_Delta is None:
            underline_Delta = underline_delta(plant, gains)[1]
        constants = [mode_constants(plant, gains, s) for s in range(1, plant.n_s + 1)]
    if underline_Delta is not None:
        gaps = np.diff(record.switch_times)
        if gaps.size and gaps.min() < underline_Delta * (1 - 1e-9):
            raise InvalidRecordError("switches closer than the minimum inter-event time")
    for m in record.mode_after:
        if not 1 <= m <= len(constants):
            raise InvalidRecordError(f"mode {m} outside 1..{len(constants)}")

    cuts = {0.0, float(t)}
    cuts.update(x for x in record.switch_times if 0 < x < t)
    for a, b in record.effective_fsdos.spans:
        cuts.update(x for x in (a, b) if 0 < x < t)
    pts = sorted(cuts)

    cur = record.mode_after[0]
    c = constants[cur - 1]
    vx = c.alpha_hi * x0_norm ** 2
    vw = 0.0
    w2 = w_sup ** 2
    sw = dict(zip(record.switch_times, record.mode_after))
    for a, b in zip(pts, pts[1:]):
        if a in sw and a > 0 and sw[a] != cur:
            new = sw[a]
            ratio = constants[new - 1].alpha_hi / constants[cur - 1].alpha_lo
            vx *= ratio
            vw *= ratio
            cur = new
        c = constants[cur - 1]
        h = b - a
        if record.effective_fsdos.contains(0.5 * (a + b)):
            g = math.exp(c.omega2 * h)
            vx *= g
            vw = g * vw + c.nu3 * g * w2
        else:
            d = math.exp(-c.omega1 * h)
            vx *= d
            vw = d * vw + c.nu1 * w2
    lo = constants[cur - 1].alpha_lo
    return math.sqrt(vx / lo) + math.sqrt(vw / lo)
