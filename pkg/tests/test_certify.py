import importlib
import math

import numpy as np
import pytest

from dosetc.certify import (
    CertificationOrderError,
    GainSet,
    InvalidRecordError,
    ModeConstants,
    OrderingError,
    SwitchingRecord,
    SynthesisOptions,
    build_gamma1,
    build_gamma2,
    check_fsdos_condition,
    evaluate_iss_bound,
    gamma_terms,
    mode_constants,
    rates,
    schur_reduce_gamma2,
    synthesize_candidate_gains,
    tau_d_lower_bound,
    varkappa_upper_bound,
    verify_lmi,
)
from dosetc.dos import AssumptionParams, IntervalSet
from dosetc.linalg import lambda_max, lambda_min
from dosetc.plant import PlantModel
from conftest import unit_scalar_gains

cert = importlib.import_module("dosetc.certify")
SQ2 = math.sqrt(2.0)
QUICK = SynthesisOptions(psi_grid=(0.1, 0.01, 1e-3), scale_grid=(1.0, 0.3, 0.1, 0.03, 0.01),
                         eps_grid=(1.0, 100.0, 1e4), shift_grid=(1.0, 4.0))


def scalar_plant(a=1.0, b=1.0):
    return PlantModel(np.array([[a]]), np.array([[b]]), (np.eye(1),))


def stable_unit_instance():
    """Scalar loop where P_p = P_e = 1 already certifies."""
    plant = scalar_plant(-1.0)
    g = GainSet(K=[[0.5]], L=[[[1.0]]], P_p=[[[1.0]]], P_e=[[[1.0]]], psi1=1e-3, psi2=1e-3,
                eps1=[100.0], eps2=[100.0])
    return plant, g


def random_instance(rng, n=2):
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, 1))
    C = rng.normal(size=(1, n))
    plant = PlantModel(A, B, (C,))
    K = rng.normal(size=(1, n))
    def spd():
        M = rng.normal(size=(n, n))
        return M @ M.T + 0.1 * np.eye(n)
    g = GainSet(K=K, L=[rng.normal(size=(n, 1))], P_p=[spd()], P_e=[spd()],
                psi1=float(rng.uniform(0.01, 1)), psi2=float(rng.uniform(0.01, 1)),
                eps1=[float(rng.uniform(0.5, 50))], eps2=[float(rng.uniform(0.5, 50))])
    return plant, g


class TestGainSet:
    def test_validation(self):
        with pytest.raises(ValueError):
            unit_scalar_gains(psi1=0.0)
        with pytest.raises(ValueError):
            unit_scalar_gains(P_p=[[[-1.0]]])
        with pytest.raises(ValueError):
            unit_scalar_gains(eps1=[0.0])

    def test_hurwitz_check(self):
        with pytest.raises(ValueError):
            unit_scalar_gains(K=[[0.5]]).validate_for(scalar_plant(1.0))
        unit_scalar_gains(K=[[2.0]]).validate_for(scalar_plant(1.0))

    def test_roundtrip(self, scalar_cfg):
        g = scalar_cfg.gains()
        back = GainSet.from_dict(g.to_dict())
        assert np.array_equal(back.P_p[0], g.P_p[0]) and back.eps3 == g.eps3


class TestGammaAssembly:
    @pytest.mark.parametrize("a,b,k,l,p1,p2,e1,e2", [(1.0, 1.0, 2.0, 3.0, 0.1, 0.2, 5.0, 7.0),
                                                    (-0.5, 2.0, 0.3, 1.5, 1.0, 0.5, 1.0, 2.0)])
    def test_scalar_gamma1(self, a, b, k, l, p1, p2, e1, e2):
        plant = scalar_plant(a, b)
        g = GainSet(K=[[k]], L=[[[l]]], P_p=[[[1.0]]], P_e=[[[1.0]]], psi1=p1, psi2=p2, eps1=[e1], eps2=[e2])
        bk = b * k
        t11 = -2 * (a - bk) - bk**2 - p1 - p2 - 1 / e1
        t12 = -bk + p2
        t22 = -2 * (a - l) - l**2 - p2 - 1 / e2
        assert np.allclose(build_gamma1(plant, g, 1), [[t11, t12], [t12, t22]], atol=1e-14)

    def test_scalar_gamma2(self):
        a, b, k, l, p1, p2, e1, e2 = 1.0, 1.0, 2.0, 3.0, 0.1, 0.2, 5.0, 7.0
        pp, pe = 2.0, 0.5
        g = GainSet(K=[[k]], L=[[[l]]], P_p=[[[pp]]], P_e=[[[pe]]], psi1=p1, psi2=p2, eps1=[e1], eps2=[e2])
        bk, N = b * k, pe * l
        th1 = -2 * pp * (a - bk) - p1 - p2
        th12 = -pp * bk + p2
        th2 = -2 * pe * a + 2 * N - p2
        ref = np.array([
            [th1, pp, pp * bk, th12, 0, 0],
            [pp, e1, 0, 0, 0, 0],
            [pp * bk, 0, 1, 0, 0, 0],
            [th12, 0, 0, th2, pe, N],
            [0, 0, 0, pe, e2, 0],
            [0, 0, 0, N, 0, 1],
        ])
        assert np.allclose(build_gamma2(scalar_plant(a, b), g, 1), ref, atol=1e-14)

    def test_unit_blocks(self, rng):
        plant, g = random_instance(rng)
        g = GainSet(K=g.K, L=g.L, P_p=[np.eye(2)], P_e=[np.eye(2)], psi1=0.1, psi2=0.1, eps1=[1.0], eps2=[1.0])
        G2 = build_gamma2(plant, g, 1)
        assert np.allclose(G2[2:4, 2:4], np.eye(2)) and np.allclose(G2[8:10, 8:10], np.eye(2))

    def test_symmetric_and_schur_equivalent(self, rng):
        for _ in range(10):
            plant, g = random_instance(rng, n=3)
            G1, G2 = build_gamma1(plant, g, 1), build_gamma2(plant, g, 1)
            assert np.abs(G1 - G1.T).max() < 1e-12 and np.abs(G2 - G2.T).max() < 1e-12
            red = schur_reduce_gamma2(G2, 3, 1)
            assert np.allclose(red, G1, atol=1e-9 * max(1.0, np.abs(G1).max()))

    def test_mode_index(self, scalar_cfg):
        with pytest.raises(IndexError):
            build_gamma1(scalar_cfg.plant(), scalar_cfg.gains(), 2)


class TestVerifyLmi:
    def test_identity_passes_and_flip_fails(self, monkeypatch):
        plant = scalar_plant(1.0)
        g = unit_scalar_gains(K=[[2.0]])
        monkeypatch.setattr(cert, "build_gamma2", lambda *a: np.eye(6))
        assert verify_lmi(plant, g).passed
        flipped = np.eye(6)
        flipped[3, 3] = -1.0
        monkeypatch.setattr(cert, "build_gamma2", lambda *a: flipped)
        rep = verify_lmi(plant, g)
        assert not rep.passed and rep.lambda_min_gamma2 == [pytest.approx(-1.0)]

    def test_fixtures_pass(self, scalar_cfg, dint_cfg):
        for cfg in (scalar_cfg, dint_cfg):
            rep = verify_lmi(cfg.plant(), cfg.gains())
            assert rep.passed
            assert all(l1 > 0 for l1 in rep.lambda_min_gamma1)


class TestRates:
    def test_omega1_formula(self, dint_cfg):
        plant, g = dint_cfg.plant(), dint_cfg.gains()
        for s in (1, 2):
            w1, w2 = rates(plant, g, s)
            hi = max(lambda_max(g.P_p[s - 1]), lambda_max(g.P_e[s - 1]))
            assert w1 == pytest.approx(lambda_min(build_gamma1(plant, g, s)) / hi, rel=1e-12)
            assert w2 > 0

    def test_scaled_p_recomputation(self, scalar_cfg):
        plant, g = scalar_cfg.plant(), scalar_cfg.gains()
        g2 = GainSet(K=g.K, L=g.L, P_p=[0.5 * g.P_p[0]], P_e=[0.5 * g.P_e[0]], psi1=g.psi1, psi2=g.psi2,
                     eps1=g.eps1, eps2=g.eps2)
        w1, _ = rates(plant, g2, 1)
        hi = max(lambda_max(g2.P_p[0]), lambda_max(g2.P_e[0]))
        assert w1 == pytest.approx(lambda_min(build_gamma1(plant, g2, 1)) / hi, rel=1e-12)

    def test_xi11_unit_values(self):
        # unit plant data; eps = 10 keeps Gamma_5 negative definite
        plant = scalar_plant(0.0, 1.0)
        g = unit_scalar_gains(eps1=[10.0], eps2=[10.0])
        gt = gamma_terms(plant, g, 1)
        assert gt["gamma2"] == pytest.approx(1.0)
        assert gt["Gamma4"][0, 0] / gt["gamma2"] == pytest.approx(4 + 2 * SQ2, rel=1e-14)

    def test_conventions(self, dint_cfg):
        plant, g = dint_cfg.plant(), dint_cfg.gains()
        a = gamma_terms(plant, g, 1, "norm")["gamma2"]
        b = gamma_terms(plant, g, 1, "sym")["gamma2"]
        assert a >= b
        with pytest.raises(ValueError):
            gamma_terms(plant, g, 1, "other")

    def test_gamma5_order_error(self):
        plant = scalar_plant(0.0, 1.0)
        with pytest.raises(CertificationOrderError):
            gamma_terms(plant, unit_scalar_gains(eps1=[1.0], eps2=[1.0]), 1)


class TestDwellAndFsdos:
    def test_tau_d_identity_p(self):
        plant, g = stable_unit_instance()
        assert lambda_min(build_gamma1(plant, g, 1)) > 0
        assert tau_d_lower_bound(plant, g, 0.01) == 0.01

    def test_tau_d_analytic(self, monkeypatch):
        plant = scalar_plant(1.0)
        g = unit_scalar_gains(K=[[2.0]], P_p=[[[2.0]]])
        monkeypatch.setattr(cert, "build_gamma1", lambda *a: np.eye(1))
        assert tau_d_lower_bound(plant, g, 0.01) == pytest.approx(2 * math.log(2))

    def test_tau_d_recomputed(self, dint_cfg):
        plant, g = dint_cfg.plant(), dint_cfg.gains()
        ref = max(
            max(lambda_max(g.P_p[s]), lambda_max(g.P_e[s]))
            / lambda_min(build_gamma1(plant, g, s + 1))
            * math.log(max(lambda_max(g.P_p[s]), lambda_max(g.P_e[s])) / min(lambda_min(g.P_p[s]), lambda_min(g.P_e[s])))
            for s in range(2)
        )
        assert tau_d_lower_bound(plant, g, 1e-3) == pytest.approx(max(ref, 1e-3), rel=1e-12)

    def test_varkappa(self):
        assert varkappa_upper_bound(0.1, 0.2) == pytest.approx(0.5)
        assert varkappa_upper_bound(0.1, 1e12) == pytest.approx(1.0)
        with pytest.raises(OrderingError):
            varkappa_upper_bound(0.1, 0.1)

    def test_fsdos_condition_examples(self, scalar_cfg):
        plant, g = scalar_cfg.plant(), scalar_cfg.gains()
        ok = check_fsdos_condition(plant, g, AssumptionParams(0.5, 1.0, 1.0, 1.0, 0.0, 4.0), 0.1, mode_rates=[(1.0, 1.0)])
        assert ok.lhs == pytest.approx(0.35) and ok.rhs == pytest.approx(0.5) and ok.passed
        bad = check_fsdos_condition(plant, g, AssumptionParams(0.5, 1.0, 1.0, 0.25, 0.0, 2.0), 0.1, mode_rates=[(1.0, 1.0)])
        assert bad.lhs == pytest.approx(0.9) and not bad.passed

    def test_beta_sign(self, dint_cfg):
        plant, g = dint_cfg.plant(), dint_cfg.gains()
        rep = check_fsdos_condition(plant, g, dint_cfg.assumptions(), 0.0065)
        for s, b in enumerate(rep.beta, start=1):
            w1, w2 = rates(plant, g, s)
            assert (b > 0) == (rep.T_star > (w1 + w2) / w1)


class TestCertify:
    def test_fixture_report(self, dint_cfg):
        rep = cert.certify(dint_cfg.plant(), dint_cfg.gains(), dint_cfg.assumptions())
        assert rep.passed
        assert rep.fsdos.passed and rep.fsdos.secondary_passed
        d = rep.to_dict()
        assert d["tau_D"] > d["tau_D_lower_bound"]

    def test_inflated_psi_fails(self, scalar_cfg):
        g = scalar_cfg.gains()
        bad = GainSet(K=g.K, L=g.L, P_p=g.P_p, P_e=g.P_e, psi1=g.psi1 * 1e6, psi2=g.psi2,
                      eps1=g.eps1, eps2=g.eps2)
        rep = cert.certify(scalar_cfg.plant(), bad)
        assert not rep.passed and rep.lmi.lambda_min_gamma2[0] < 0


class TestSynthesis:
    def test_scalar_succeeds(self):
        plant = scalar_plant(1.0)
        res = synthesize_candidate_gains(plant, [[2.0]], QUICK)
        assert res.feasible and verify_lmi(plant, res.gains).passed
        assert res.grid_point[0]["psi"] in QUICK.psi_grid

    def test_barely_stable_reports_negative_margin(self):
        plant = scalar_plant(1.0)
        res = synthesize_candidate_gains(plant, [[1.0 + 1e-6]], QUICK)
        assert not res.feasible and res.best_lambda_min[0] < 0

    def test_two_channel_double_integrator(self, dint_plant):
        res = synthesize_candidate_gains(dint_plant, [[2.0, 3.0]], SynthesisOptions(objective="omega1"))
        assert res.feasible and verify_lmi(dint_plant, res.gains).passed

    def test_unobservable_channel_is_infeasible(self):
        # channel 2 sees only velocity, so no observer gain stabilizes its error dynamics
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        plant = PlantModel(A, np.array([[0.0], [1.0]]), (np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])))
        res = synthesize_candidate_gains(plant, [[2.0, 3.0]], QUICK)
        assert not res.feasible
        assert res.best_lambda_min[1] < 0


def _consts(omega1=0.5, omega2=2.0, lo=1.0, hi=1.0, nu1=3.0, nu3=1.5, sigma=1):
    return ModeConstants(sigma=sigma, zeta1=omega1 * hi, lambda_min_gamma2=1.0, omega1=omega1, omega2=omega2,
                         nu1=nu1, nu2=nu3 * omega2, nu3=nu3, alpha_lo=lo, alpha_hi=hi, underline_Delta=0.01)


class TestIssBound:
    def test_single_mode_decay(self):
        c = _consts(lo=1.0, hi=2.0)
        rec = SwitchingRecord([0.0], [1])
        for t in (0.0, 1.0, 7.5):
            got = evaluate_iss_bound(rec, None, None, t, 3.0, 0.0, constants=[c])
            assert got == pytest.approx(math.sqrt(2.0) * math.exp(-0.25 * t) * 3.0, rel=1e-14)

    def test_single_mode_disturbance(self):
        plant, g = stable_unit_instance()
        m = mode_constants(plant, g, 1)
        got = evaluate_iss_bound(SwitchingRecord([0.0], [1]), g, plant, 4.0, 0.0, 0.2, constants=[m])
        expected = math.sqrt((g.eps1[0] + g.eps2[0] + g.psi1) / (m.alpha_lo * m.zeta1)) * 0.2
        assert got == pytest.approx(expected, rel=1e-12)

    def test_two_identical_modes_collapse(self):
        c1, c2 = _consts(sigma=1), _consts(sigma=2)
        rec = SwitchingRecord([0.0, 1.0, 2.5, 4.0], [1, 2, 1, 2])
        single = evaluate_iss_bound(SwitchingRecord([0.0], [1]), None, None, 5.0, 2.0, 0.0, constants=[c1])
        assert evaluate_iss_bound(rec, None, None, 5.0, 2.0, 0.0, constants=[c1, c2]) == pytest.approx(single, rel=1e-14)

    def test_switch_ratio(self):
        c1, c2 = _consts(lo=1.0, hi=2.0, sigma=1), _consts(lo=0.5, hi=3.0, sigma=2)
        rec = SwitchingRecord([0.0, 1.0], [1, 2])
        got = evaluate_iss_bound(rec, None, None, 2.0, 1.0, 0.0, constants=[c1, c2])
        v = 2.0 * math.exp(-0.5) * (3.0 / 1.0) * math.exp(-0.5)
        assert got == pytest.approx(math.sqrt(v / 0.5), rel=1e-14)

    def test_fsdos_growth(self):
        c = _consts()
        rec = SwitchingRecord([0.0], [1], IntervalSet([(1.0, 0.5)]))
        got = evaluate_iss_bound(rec, None, None, 2.0, 1.0, 0.0, constants=[c])
        assert got == pytest.approx(math.sqrt(math.exp(-0.5 * 1.5 + 2.0 * 0.5)), rel=1e-14)
        quiet = evaluate_iss_bound(SwitchingRecord([0.0], [1]), None, None, 2.0, 1.0, 0.0, constants=[c])
        assert got > quiet

    def test_monotone_in_inputs(self):
        c = _consts()
        rec = SwitchingRecord([0.0], [1])
        vals = [evaluate_iss_bound(rec, None, None, 1.0, x, w, constants=[c]) for x, w in ((1, 0.1), (2, 0.1), (2, 0.3))]
        assert vals[0] < vals[1] < vals[2]

    def test_record_errors(self):
        with pytest.raises(InvalidRecordError):
            SwitchingRecord([0.5], [1])
        with pytest.raises(InvalidRecordError):
            SwitchingRecord([0.0, 1.0, 1.0], [1, 2, 1])
        rec = SwitchingRecord([0.0, 0.001], [1, 2])
        with pytest.raises(InvalidRecordError):
            evaluate_iss_bound(rec, None, None, 1.0, 1.0, 0.0, underline_Delta=0.01,
                               constants=[_consts(sigma=1), _consts(sigma=2)])
