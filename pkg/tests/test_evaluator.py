import math

import numpy as np
import pytest

from dcsi import evaluator
from dcsi.allocation import alloc_decaying_wyner, PolicySpec
from dcsi.evaluator import (
    AggregationError,
    SimConfig,
    amplitude_profile,
    build_allocation,
    estimate_mg,
    estimate_mu_prime,
    parse_policy,
    run_sweep,
    run_trial,
    snr_to_power,
    user_rates,
)
from dcsi.numerics import SingularMatrixError
from dcsi.precoder import zf_perfect


class TestUserRates:
    def test_single_user(self):
        np.testing.assert_allclose(user_rates([[1]], [[10]]), [math.log2(101)])
        assert user_rates([[1]], [[10]])[0] == pytest.approx(6.6582, abs=1e-4)

    def test_orthogonal(self):
        np.testing.assert_allclose(user_rates(np.eye(2), 10 * np.eye(2)), [math.log2(101)] * 2)

    def test_interference_by_hand(self):
        H = np.array([[1, 1], [0, 1]])
        T = np.array([[10, 0], [0, 10]])
        # user 1: signal 100, interference 100
        assert user_rates(H, T)[0] == pytest.approx(math.log2(1 + 100 / 101), abs=1e-12)
        assert user_rates(H, T)[0] == pytest.approx(0.9928, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            user_rates(np.eye(2), np.eye(3))


class TestParsePolicy:
    def test_names(self):
        assert parse_policy("perfect", "wyner").is_perfect
        assert parse_policy("decaying", "wyner").template.kind == "decaying_wyner"
        assert parse_policy("decaying", "expdecay").template.kind == "decaying_exp"
        assert parse_policy("cluster", "wyner").template.kind == "overlapping_cluster"
        p = parse_policy("fixed4", "wyner")
        assert p.template.kind == "uniform" and p.template.bits_per_pair == 4

    def test_unknown(self):
        with pytest.raises(ValueError):
            parse_policy("magic", "wyner")


def test_budget_matching():
    tmpl = parse_policy("uniform", "wyner").template
    a = build_allocation(tmpl, 25, 100.0, 0.5)
    assert a.total() == alloc_decaying_wyner(PolicySpec("decaying_wyner"), 25).total()
    fixed = build_allocation(parse_policy("fixed3", "wyner").template, 4, 100.0, 0.5)
    assert np.all(fixed.bits == 3)


class TestRunTrial:
    cfg = SimConfig(model="wyner", K=6, mu=0.5, trials=3, seed=11)

    def test_perfect_branch(self):
        r = run_trial(self.cfg, 100.0, "perfect", 0)
        assert r.distance == 0 and not r.outage
        H = evaluator._draw_channel(self.cfg, 0.5, 0)
        np.testing.assert_allclose(r.rates, user_rates(H, zf_perfect(H, 100.0)))

    def test_deterministic(self):
        a = run_trial(self.cfg, 100.0, "decaying", 2)
        b = run_trial(self.cfg, 100.0, "decaying", 2)
        np.testing.assert_array_equal(a.rates, b.rates)
        assert a.distance == b.distance

    def test_huge_budget_near_perfect(self):
        cfg = SimConfig(model="wyner", K=6, mu=0.5, policies=("fixed200",), seed=1)
        r = run_trial(cfg, 100.0, "fixed200", 0)
        p = run_trial(cfg, 100.0, "perfect", 0)
        np.testing.assert_allclose(r.rates, p.rates, rtol=1e-6)
        assert r.distance < 1e-6

    def test_enforce_sharing(self):
        cfg = SimConfig(model="wyner", K=15, mu=0.5, enforce_sharing=True, seed=2)
        r = run_trial(cfg, 100.0, "decaying", 0)
        assert not r.outage and np.all(r.rates >= 0)

    def test_zero_bits_saturate(self):
        cfg = SimConfig(model="wyner", K=2, mu=0.5, policies=("fixed0",), trials=300, seed=4)
        lo = np.mean([run_trial(cfg, snr_to_power(20), "fixed0", t).rates.mean() for t in range(300)])
        hi = np.mean([run_trial(cfg, snr_to_power(40), "fixed0", t).rates.mean() for t in range(300)])
        # an MG of 1 would add 6.6 bits over these 20 dB
        assert hi - lo < 1.0

    def test_outage(self, monkeypatch):
        real = evaluator.zf_perfect

        def flaky(H, P):
            if abs(H[0, 0]) < 0.5:
                raise SingularMatrixError("forced")
            return real(H, P)

        monkeypatch.setattr(evaluator, "zf_perfect", flaky)
        cfg = SimConfig(model="wyner", K=3, mu=0.5, policies=("perfect",), trials=40, seed=5)
        res = run_sweep(cfg)[0]
        assert 0 < res.outage_trials < 40
        assert math.isfinite(res.avg_rate_per_user)

    def test_all_outage(self, monkeypatch):
        def broken(H, P):
            raise SingularMatrixError("forced")

        monkeypatch.setattr(evaluator, "zf_perfect", broken)
        with pytest.raises(AggregationError):
            run_sweep(SimConfig(model="wyner", K=3, policies=("perfect",), trials=3))


class TestRunSweep:
    def test_single_trial_stderr_zero(self):
        res = run_sweep(SimConfig(model="wyner", K=5, policies=("decaying",), trials=1))
        assert res[0].stderr == 0.0

    def test_threads_identical(self):
        cfg = SimConfig(model="wyner", K=7, mu_list=(0.3, 0.8), snr_db_list=(10.0, 30.0),
                        policies=("perfect", "decaying", "uniform"), trials=12, seed=9)
        assert run_sweep(cfg, threads=1) == run_sweep(cfg, threads=3)

    def test_accounting(self):
        cfg = SimConfig(model="wyner", K=9, policies=("perfect", "full", "decaying", "cluster", "uniform"),
                        trials=4)
        res = {r.policy: r for r in run_sweep(cfg)}
        assert res["perfect"].total_bits is None and res["perfect"].percent_of_full is None
        assert res["full"].percent_of_full == 1.0
        assert res["decaying"].total_bits == res["cluster"].total_bits == res["uniform"].total_bits
        for r in res.values():
            assert r.avg_rate_per_user >= 0 and r.stderr >= 0

    def test_perfect_dominates(self):
        cfg = SimConfig(model="expdecay", K=8, mu=0.5, snr_db_list=(10.0, 30.0),
                        policies=("perfect", "decaying", "broadcast", "fixed2"), trials=60, seed=3)
        res = run_sweep(cfg)
        for snr in (10.0, 30.0):
            cell = [r for r in res if r.snr_db == snr]
            best = next(r for r in cell if r.policy == "perfect")
            for r in cell:
                assert r.avg_rate_per_user <= best.avg_rate_per_user + 2 * math.hypot(r.stderr, best.stderr)


class TestEstimateMG:
    def test_exact_line(self):
        snr = [0, 10, 20, 30, 40]
        rates = [2 + s / (10 * math.log10(2)) for s in snr]
        assert estimate_mg(snr, rates) == pytest.approx(1.0)

    def test_top_half_only(self):
        # flat low end is ignored
        snr = [0, 10, 20, 30]
        log2P = np.array(snr) / (10 * math.log10(2))
        rates = [1, 1, 0.5 * log2P[2], 0.5 * log2P[3]]
        assert estimate_mg(snr, rates) == pytest.approx(0.5)

    @pytest.mark.parametrize("snr", [[20, 30], [20, 25, 30]])
    def test_insufficient(self, snr):
        with pytest.raises(ValueError):
            estimate_mg(snr, [1.0] * len(snr))

    def test_decaying_reaches_full_mg(self):
        cfg = SimConfig(model="wyner", K=5, snr_db_list=(20.0, 30.0, 40.0),
                        policies=("perfect", "decaying"), trials=150, seed=3)
        res = run_sweep(cfg)
        for pol, lo in (("perfect", 0.85), ("decaying", 0.8)):
            rates = [r.avg_rate_per_user for r in res if r.policy == pol]
            assert lo <= estimate_mg([20, 30, 40], rates) <= 1.05


class TestAmplitudeProfile:
    def test_flat_channel_at_mu_one(self):
        pr = amplitude_profile(SimConfig(model="expdecay", K=9, mu=1.0, policies=("perfect",),
                                         trials=400, seed=1), 100.0)
        assert np.ptp(pr.channel_log10) < 0.1
        assert pr.stream == 4

    def test_decreasing_at_mu_04(self):
        cfg = SimConfig(model="expdecay", K=25, mu=0.4, policies=("perfect",), trials=300, seed=2)
        pr = amplitude_profile(cfg, 100.0)
        assert np.all(np.diff(pr.precoder_log10[1:]) < 0)
        pre = np.polyfit(pr.distance, pr.precoder_log10, 1)[0]
        chan = np.polyfit(pr.distance, pr.channel_log10, 1)[0]
        assert pre < 0 and pre / chan >= 0.5

    def test_quantized_policy(self):
        cfg = SimConfig(model="expdecay", K=9, mu=0.5, policies=("decaying",), trials=5)
        pr = amplitude_profile(cfg, 100.0, "decaying")
        assert np.all(np.isfinite(pr.precoder_log10))


def test_estimate_mu_prime_clipped():
    m = estimate_mu_prime("expdecay", 9, 0.4, trials=50, seed=0)
    assert 0 < m <= 0.4


@pytest.mark.parametrize("kwargs", [dict(model="ring"), dict(K=0), dict(trials=0), dict(snr_db_list=()),
                                    dict(mu=0.0), dict(mu=0.5, mu_prime=0.6)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)
