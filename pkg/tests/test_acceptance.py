"""End-to-end acceptance criteria, each reported as a single PASS/FAIL line."""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from steinpair import bounds as B
from steinpair import cli
from steinpair import couplings as C
from steinpair import models as M
from steinpair import stein_normal as SN
from steinpair import stein_poisson as SP

from conftest import ACCEPTANCE_LINES

ZS = (-1.0, 0.0, 1.0)
TS = (0.25, 0.5, 1.0)


@contextmanager
def criterion(number, title):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        line = f"[{status}] criterion {number:2d}: {title} ({elapsed:.2f} s)"
        ACCEPTANCE_LINES.append((number, line))
        print(line)


def _normal_pipeline(name, params):
    c, meta = M.build_model(name, params)
    cs = C.standardize(c)
    d = C.regression_decompose(cs, meta.structural_lambda)
    mom = C.conditional_V2(cs, d)
    return cs, meta, d, mom


def test_01_kolmogorov_dominance_rademacher():
    with criterion(1, "Kolmogorov bounds dominate delta on Rademacher sums"):
        for n in (4, 8, 16, 32):
            start = time.perf_counter()
            c, meta, d, mom = _normal_pipeline("rademacher", {"n": n})
            rep = B.normal_report(c, d, mom, A=meta.A_bound)
            elapsed = time.perf_counter() - start
            assert d.lam == pytest.approx(1 / n, abs=1e-14)
            assert np.max(np.abs(d.R)) < 1e-14 and mom.var_EWV2 < 1e-28
            assert rep.delta_actual <= rep.bound_2_4
            assert rep.delta_actual <= rep.bound_2_5
            assert rep.bound_2_5 == pytest.approx(280 / math.sqrt(n), rel=1e-12)
            assert 0.3 <= rep.delta_actual * math.sqrt(n) <= 1.0
            assert elapsed < 1.0


def test_02_kolmogorov_dominance_without_exchangeability():
    with criterion(2, "Kolmogorov bound dominates delta on non-exchangeable cycles"):
        start = time.perf_counter()
        for m in (8, 12, 24):
            for drift in (0.1, 0.2):
                c, meta, d, mom = _normal_pipeline("biased_cycle", {"m": m, "drift": drift})
                assert c.marginal_discrepancy < 1e-12
                assert not C.is_exchangeable(c)
                rep = B.normal_report(c, d, mom)
                assert d.ER2 > 0 and 19 * math.sqrt(d.ER2) / d.lam > 0
                assert rep.delta_actual <= rep.bound_2_4
        assert time.perf_counter() - start < 1.0


def test_03_pair_identity_on_zoo(normal_zoo):
    with criterion(3, "regression identity holds without exchangeability"):
        worst = 0.0
        for label, c, meta in normal_zoo:
            d = C.regression_decompose(c, meta.structural_lambda)
            for z in ZS:
                for t in TS:
                    rep = SN.identity_2_11_check(c, d, SN.SmoothedHalfLineTest(z, t))
                    worst = max(worst, abs(rep.residual))
        assert worst < 1e-6


def test_04_remainder_split(normal_zoo):
    with criterion(4, "remainder split vanishes exactly for exchangeable pairs"):
        tests = [SN.SmoothedHalfLineTest(z, t) for z in ZS for t in TS]
        seen = 0
        for label, c, meta in normal_zoo:
            if C.is_exchangeable(c):
                seen += 1
                assert max(abs(SN.remainder_split_term(c, s)) for s in tests) < 1e-8, label
        assert seen >= 4
        for m in (8, 12):
            c, *_ = _normal_pipeline("biased_cycle", {"m": m, "drift": 0.2})
            assert max(abs(SN.remainder_split_term(c, s)) for s in tests) > 1e-6


def test_05_antisymmetric_dichotomy(normal_zoo, poisson_zoo):
    with criterion(5, "antisymmetric expectations: integral form always, product form only if exchangeable"):
        tests = [SN.SmoothedHalfLineTest(z, t) for z in ZS for t in TS]
        for label, c, meta in normal_zoo:
            integral = max(abs(SN.ef_zero_check(c, s, "integral_form")) for s in tests)
            product = max(abs(SN.ef_zero_check(c, s, "product_form")) for s in tests)
            assert integral < 1e-8, label
            if C.is_exchangeable(c):
                assert product < 1e-10, label
            else:
                assert product > 0, label
        for label, c, meta in poisson_zoo:
            kernel = C.jump_probabilities(c)
            basis = B.PoissonBasis.for_coupling(c, meta.poisson_mean, kernel)
            tel = max(abs(SP.telescope_check(c, basis.F[j], kernel)) for j in range(basis.F.shape[0]))
            ef = max(abs(SP.ef_zero_poisson_check(c, basis.F[j], kernel)) for j in range(basis.F.shape[0]))
            assert tel < 1e-8, label
            if C.is_exchangeable(c):
                assert ef < 1e-10, label
            else:
                assert ef > 0, label


def test_06_solution_certificates():
    with criterion(6, "Stein solution certificates, normal and Poisson"):
        start = time.perf_counter()
        for z in ZS:
            for t in (0.1,) + TS:
                cert = SN.certify_solution(SN.SmoothedHalfLineTest(z, t))
                assert cert.residual < 1e-8
                assert cert.f_norm <= 2.6 and cert.fprime_norm <= 4 and cert.fsecond_norm <= 1.6 / t
        rng = np.random.default_rng(2024)
        for lam in (0.5, 1.0, 2.0):
            for _ in range(200):
                A = np.flatnonzero(rng.random(41) < 0.5)
                sol = SP.solve_poisson_stein(lam, A, 40)
                assert sol.residual() < 1e-12
                assert sol.norm <= lam**-0.5
                assert sol.delta1_norm <= (1 - math.exp(-lam)) / lam
        assert time.perf_counter() - start < 30.0


def test_07_tv_dominance():
    with criterion(7, "total-variation bound dominates d_TV on integer models"):
        cases = [("immigration_death", {"lambda": lam, "N": 12}) for lam in (0.5, 1.0, 2.0)]
        cases += [("skewed_two_step", {"eps": eps}) for eps in (0.005, 0.01)]
        cases += [("fixed_points", {"n": n}) for n in (4, 5, 6)]
        for name, params in cases:
            c, meta = M.build_model(name, params)
            lam = meta.poisson_mean
            c_scale = meta.structural_c or B.choose_c(c, lam, B.default_c_grid())
            for mode in ("exact", "bounded"):
                rep = B.poisson_total(c, lam, c_scale, mode)
                assert rep.total_bound >= rep.dtv_upper - B.THEOREM_SLACK, (name, params, mode)
            if name == "fixed_points":
                assert rep.rho_exact < 1e-12 and rep.rho_bound_joint < 1e-12
                assert rep.rho_bound_marginal > 0


def test_08_supremum_oracle():
    with criterion(8, "singleton supremum equals exhaustive subset search"):
        start = time.perf_counter()
        for name, params in (("immigration_death", {"lambda": 1.0, "N": 12}),
                             ("skewed_two_step", {"lambda": 1.0, "N": 10, "eps": 0.01})):
            c, meta = M.build_model(name, params)
            kernel = C.jump_probabilities(c)
            basis = B.PoissonBasis.for_coupling(c, 1.0, kernel)
            for c_scale in (2.0, meta.structural_c):
                fast = B.kappa_exact(c, kernel, 1.0, c_scale, basis)
                slow = B.kappa_bruteforce(c, kernel, 1.0, c_scale)
                assert abs(fast - slow) < 1e-10
        assert time.perf_counter() - start < 60.0


def test_09_ordering_chain(poisson_zoo):
    with criterion(9, "kappa and rho variants are ordered"):
        for label, c, meta in poisson_zoo:
            for c_scale in (0.5, 3.0, meta.structural_c or 10.0):
                rep = B.poisson_total(c, meta.poisson_mean, c_scale, "exact")
                assert rep.rho_exact <= rep.rho_bound_joint + 1e-10, label
                assert rep.rho_bound_joint <= rep.rho_bound_marginal + 1e-10, label
                assert rep.kappa_exact <= rep.kappa_simple + 1e-10, label


def test_10_delta_inequality():
    with criterion(10, "closed form dominates the fixed point of delta = p + q sqrt(delta)"):
        rng = np.random.default_rng(10)
        for p, q in rng.uniform(0, 10, size=(100, 2)):
            fixed = ((q + math.sqrt(q * q + 4 * p)) / 2) ** 2
            assert B.solve_delta_inequality(p, q) >= fixed - 1e-9


def test_11_verify_deterministic(tmp_path, capsys):
    with criterion(11, "verify reports are byte-identical across runs"):
        first, second = tmp_path / "a", tmp_path / "b"
        assert cli.main(["verify", "--seed", "7", "--out", str(first)]) == 0
        assert cli.main(["verify", "--seed", "7", "--out", str(second), "--jobs", "4"]) == 0
        capsys.readouterr()
        assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
