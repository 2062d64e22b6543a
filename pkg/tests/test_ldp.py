import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmcphase.ldp import (RateFunction, StepLaw, mgf_infimum, randenv_criterion, rho_from_ldp, speed_threshold,
                          write_rate_csv)


def bernoulli_rate(p, a):
    q = 1 - p
    if a in (-1.0, 1.0):
        return -math.log(p if a == 1 else q)
    return (1 + a) / 2 * math.log((1 + a) / (2 * p)) + (1 - a) / 2 * math.log((1 - a) / (2 * q))


@settings(max_examples=60)
@given(st.floats(0.05, 0.95), st.floats(-0.99, 0.99))
def test_bernoulli_closed_form(p, a):
    rf = RateFunction(StepLaw.bernoulli(p))
    assert rf(a) == pytest.approx(bernoulli_rate(p, a), abs=1e-9)


def test_rate_shape():
    rf = RateFunction(StepLaw.bernoulli(0.75))
    assert rf(0.5) == 0.0
    assert rf(1.5) == math.inf and rf(-1.01) == math.inf
    # P(S_n = -n) = (1/4)^n
    assert rf(-1.0) == pytest.approx(math.log(4))
    assert rf(0.0) == pytest.approx(math.log(2 / math.sqrt(3)))
    g = np.linspace(-0.99, 0.99, 67)
    v = np.array([rf(a) for a in g])
    assert np.all(np.diff(v, 2) >= -1e-9)
    assert rf.left(0.9) == 0.0


def test_three_point_law():
    rf = RateFunction(StepLaw({-2: 0.2, 0: 0.3, 1: 0.5}))
    a = -0.7
    theta = rf.argmax_theta(a)
    assert rf.tilted_mean(theta) == pytest.approx(a, abs=1e-12)
    grid = np.linspace(-3, 3, 601)
    brute = max(t * a - rf.log_mgf(t) for t in grid)
    assert rf(a) >= brute - 1e-12
    assert rf(a) == pytest.approx(brute, abs=1e-4)


def test_speed_threshold():
    rf = RateFunction(StepLaw.bernoulli(0.75))
    assert speed_threshold(rf, 1.0).value == pytest.approx(0.5)
    s = speed_threshold(rf, 1.5)
    assert rf(s.value) == pytest.approx(math.log(1.5), abs=1e-9)
    assert s.value == pytest.approx(-0.3574, abs=1e-4)
    c = speed_threshold(rf, 10.0)
    assert c.clamped and c.value == -1.0
    rf0 = RateFunction(StepLaw.bernoulli((2 + math.sqrt(3)) / 4))
    assert speed_threshold(rf0, 2.0).value == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        speed_threshold(rf, 0.5)


def test_rho_from_ldp():
    for p in (0.6, 0.75, 0.9):
        assert rho_from_ldp(RateFunction(StepLaw.bernoulli(p))).value == pytest.approx(2 * math.sqrt(p * (1 - p)),
                                                                                     abs=1e-12)


def test_rate_csv(tmp_path):
    path = tmp_path / "I.csv"
    write_rate_csv(path, RateFunction(StepLaw.bernoulli(0.75)), np.linspace(-1, 1, 41))
    assert len(path.read_text().splitlines()) == 42


def test_mgf_infimum():
    val, theta, one = mgf_infimum({(1,): 0.75, (-1,): 0.25}, 1)
    assert val == pytest.approx(math.sqrt(3) / 2)
    assert not one
    val, _, one = mgf_infimum({(1, 0): 0.5, (0, 1): 0.25, (0, -1): 0.25}, 2)
    assert one and val == pytest.approx(0.5)


def test_randenv_criterion():
    r = math.sqrt(3) / 2
    assert randenv_criterion([{1: 0.75, -1: 0.25}], 1.3).verdict == "StronglyRecurrent"
    assert randenv_criterion([{1: 0.75, -1: 0.25}], 1.1).verdict == "Transient"
    b = randenv_criterion([{1: 0.75, -1: 0.25}], 1 / r)
    assert b.verdict == "Transient" and b.boundary
    # the hull of {0.9, 0.4} contains the symmetric walk, so any m > 1 is strongly recurrent
    mix = randenv_criterion([{1: 0.9, -1: 0.1}, {1: 0.4, -1: 0.6}], 1.01)
    assert mix.verdict == "StronglyRecurrent" and mix.value == pytest.approx(1.0, abs=1e-6)
    two_d = randenv_criterion([{(1, 0): 0.4, (-1, 0): 0.1, (0, 1): 0.25, (0, -1): 0.25}], 1.2, dim=2)
    assert two_d.value == pytest.approx(2 * math.sqrt(0.04) + 0.5)
    with pytest.raises(ValueError):
        randenv_criterion([{(1, 0, 0, 0): 1.0}], 2.0, dim=4)
    with pytest.raises(ValueError):
        randenv_criterion([{(1, 0): 1.0}], 2.0, dim=1)
