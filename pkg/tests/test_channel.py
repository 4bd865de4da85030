import numpy as np
import pytest

from dcsi.channel import (
    ExpDecayParams,
    RandomStream,
    WynerParams,
    entry_std,
    gen_expdecay,
    gen_wyner,
    support_mask,
)
from dcsi.numerics import fit_decay_rate

N_DRAWS = 100_000


def test_wyner_single_cell():
    H = gen_wyner(WynerParams(1, 0.5), RandomStream(1))
    assert H.shape == (1, 1) and H[0, 0] != 0


def test_wyner_zero_pattern():
    H = gen_wyner(WynerParams(4, 0.5), RandomStream(2))
    far = np.abs(np.subtract.outer(np.arange(4), np.arange(4))) >= 2
    assert np.all(H[far] == 0)
    assert np.all(H[~far] != 0)


def test_wyner_moments():
    # diagonal ~ CN(0,1); off-diagonals ~ CN(0, mu^2)
    mu = 0.6
    gen = RandomStream(3).generator()
    d, off = [], []
    for _ in range(N_DRAWS // 10):
        H = gen_wyner(WynerParams(10, mu), gen)
        d.append(np.diag(H))
        off.append(np.diag(H, 1))
    d = np.concatenate(d)
    off = np.concatenate(off)
    assert 0.98 <= np.mean(np.abs(d) ** 2) <= 1.02
    assert 0.98 * mu ** 2 <= np.mean(np.abs(off) ** 2) <= 1.02 * mu ** 2
    # real and imaginary parts each carry half the variance
    assert np.var(d.real) == pytest.approx(0.5, abs=0.01)


def test_expdecay_mu_one_is_iid():
    H = gen_expdecay(ExpDecayParams(5, 1.0), RandomStream(4))
    G = RandomStream(4).generator()
    G = (G.standard_normal((5, 5)) + 1j * G.standard_normal((5, 5))) / np.sqrt(2)
    np.testing.assert_array_equal(H, G)


def test_expdecay_corner_variance():
    gen = RandomStream(5).generator()
    h13 = np.array([gen_expdecay(ExpDecayParams(3, 0.5), gen)[0, 2] for _ in range(N_DRAWS)])
    assert abs(np.mean(np.abs(h13) ** 2) - 0.0625) <= 0.01


def test_expdecay_profile_decay_rate():
    mu = 0.5
    gen = RandomStream(6).generator()
    acc = np.zeros((6, 6))
    n = 20_000
    for _ in range(n):
        acc += np.abs(gen_expdecay(ExpDecayParams(6, mu), gen))
    fit = fit_decay_rate(acc / n)
    assert abs(fit.base - mu) <= 0.02


def test_determinism_and_stream_independence():
    a = gen_wyner(WynerParams(8, 0.5), RandomStream(9, 3))
    b = gen_wyner(WynerParams(8, 0.5), RandomStream(9, 3))
    c = gen_wyner(WynerParams(8, 0.5), RandomStream(9, 4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    s = RandomStream(9, 3)
    assert not np.array_equal(s.substream(1).generator().random(4),
                              s.substream(2).generator().random(4))


@pytest.mark.parametrize("K,mu", [(0, 0.5), (3, 0.0), (3, 1.5)])
def test_invalid_params(K, mu):
    with pytest.raises(ValueError):
        WynerParams(K, mu)
    with pytest.raises(ValueError):
        ExpDecayParams(K, mu)


def test_support_and_std():
    m = support_mask("wyner", 5)
    assert m.sum() == 5 + 2 * 4
    assert support_mask("expdecay", 5).all()
    s = entry_std("expdecay", 4, 0.5)
    assert s[0, 3] == 0.125 and s[2, 2] == 1.0
    w = entry_std("wyner", 4, 0.3)
    assert w[1, 2] == 0.3 and w[0, 2] == 0.0
