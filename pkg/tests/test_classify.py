import json
import math

import numpy as np
import pytest

from bmcphase.classify import (PHASE_ORDER, ApplicabilityError, MissingEvidence, PhaseVerdict, analytic_verdict,
                               empirical_verdict, reconcile)
from bmcphase.engine import SimulationSummary
from bmcphase.models import (CycleGraph, DriftZd, OffspringLaw, RegularTree, SeedChain, TwoPointEnvironmentZ,
                             law_with_mean, line_tree, pos_rec_law)
from test_models import cone_example

DRIFT = DriftZd([0.75], [0.25])
CRIT = 2 / math.sqrt(3)


def summ(est, lo, hi, value=None, model_id="m", law_id="l", **extra):
    value = (lo + hi) / 2 if value is None else value
    return SimulationSummary(est, model_id, law_id, 1000, value, lo, hi, 0, 100, 10**6, extra=extra)


def test_examples():
    assert analytic_verdict(DRIFT, law_with_mean(1.05)).phase == "Transient"
    v = analytic_verdict(line_tree(5), law_with_mean(1.23))
    assert v.phase == "WeaklyRecurrent"
    assert v.thresholds["1/rho"] == pytest.approx(1.2247448713915890)
    assert v.thresholds["1/varrho"] == pytest.approx(1.25)
    assert analytic_verdict(DRIFT, law_with_mean(2.0)).phase == "PositiveRecurrent"
    assert analytic_verdict(RegularTree(4), law_with_mean(1.2)).phase == "StronglyRecurrent"


def test_boundary_rules():
    v = analytic_verdict(DRIFT, law_with_mean(CRIT))
    assert v.phase == "Transient" and v.boundary
    # the infimum over two components is always attained
    v = analytic_verdict(line_tree(5), law_with_mean(1.25))
    assert v.phase == "WeaklyRecurrent" and v.boundary


def test_non_constant_mean_rejected():
    law = OffspringLaw((0.0, 1.0), overrides={0: (1.0,)})
    with pytest.raises(ApplicabilityError, match="constant mean"):
        analytic_verdict(DRIFT, law)


def test_no_branching_is_unknown():
    v = analytic_verdict(DRIFT, OffspringLaw((1.0,)))
    assert v.phase == "Unknown" and v.theorems


def test_positive_recurrence_needs_constant_distribution():
    law = OffspringLaw((0.0, 1.0), overrides={3: (0.5, 0.0, 0.5)})
    v = analytic_verdict(DRIFT, law)
    assert v.phase == "StronglyRecurrent"


@pytest.mark.parametrize("model", [DRIFT, line_tree(5), SeedChain(), RegularTree(4), cone_example()],
                         ids=lambda m: m.model_id)
def test_monotone_in_m(model):
    ranks = []
    for m in np.linspace(1.01, 3.0, 25):
        v = analytic_verdict(model, law_with_mean(float(m)))
        assert v.theorems
        if v.phase in PHASE_ORDER:
            ranks.append(PHASE_ORDER[v.phase])
    assert ranks == sorted(ranks)


def test_family_examples():
    assert analytic_verdict(SeedChain(), law_with_mean(2.0)).phase == "WeaklyRecurrent"
    assert analytic_verdict(CycleGraph(), pos_rec_law()).phase == "StronglyRecurrent"
    assert analytic_verdict(CycleGraph(), law_with_mean(2.0)).phase == "PositiveRecurrent"
    env = TwoPointEnvironmentZ([0.9, 0.4], [0.5, 0.5])
    assert analytic_verdict(env, law_with_mean(1.2)).phase == "StronglyRecurrent"
    env = TwoPointEnvironmentZ([0.9, 0.8], [0.5, 0.5])
    assert analytic_verdict(env, law_with_mean(1.1)).phase == "Transient"


def test_cone_three_phases():
    c = cone_example()
    v = analytic_verdict(c, law_with_mean(3.0))
    assert v.phase == "StronglyRecurrent"
    assert set(v.thresholds) == {"1/rho", "1/tilde_rho"}
    assert analytic_verdict(c, law_with_mean(1.3)).phase == "WeaklyRecurrent"


def test_empirical_rules():
    assert empirical_verdict([summ("nu", 0.82, 0.94)]).label == "Transient-evidence"
    v = empirical_verdict([summ("nu", 1.3, 1.6), summ("alpha_proxy", 0.4, 0.6, 0.52, K=50)])
    assert v.label == "WeaklyRecurrent-evidence"
    v = empirical_verdict([summ("nu", 2.1, 2.4), summ("alpha_proxy", 0.95, 1.0, 0.98, K=50),
                           summ("return_time", 2.0, 3.0, tail_r2=0.95, censored_fraction=0.0)])
    assert v.label == "Positive-evidence" and v.phase == "PositiveRecurrent"
    assert empirical_verdict([summ("nu", 0.9, 1.2)]).phase == "Unknown"
    with pytest.raises(MissingEvidence):
        empirical_verdict([summ("alpha_proxy", 0.4, 0.6)])


def test_reconcile():
    a = PhaseVerdict("Transient", "m", "l", CRIT, {"1/rho": CRIT}, ["t"], boundary=True)
    rep = reconcile(a, empirical_verdict([summ("nu", 0.9, 1.2)]))
    assert rep.boundary_flag and rep.phase == "Transient" and rep.agree is None
    a = PhaseVerdict("StronglyRecurrent", "m", "l", 1.5, {"1/rho": CRIT}, ["t"])
    e = empirical_verdict([summ("nu", 2.0, 3.0), summ("alpha_proxy", 0.97, 1.0, 1.0, K=50)])
    assert reconcile(a, e).agree
    a = PhaseVerdict("WeaklyRecurrent", "m", "l", 2.0, {"1/rho": 1.1}, ["t"])
    e = empirical_verdict([summ("nu", 2.0, 3.0), summ("alpha_proxy", 0.4, 0.6, 0.5, K=50)])
    rep = reconcile(a, e)
    assert rep.agree and rep.phase == "WeaklyRecurrent"
    a = PhaseVerdict("Transient", "m", "l", 1.05, {"1/rho": CRIT}, ["t"])
    rep = reconcile(a, e)
    assert rep.agree is False and rep.phase == "Transient"
    with pytest.raises(ValueError):
        reconcile(PhaseVerdict("Transient", "x", "l", 1.0, {}, ["t"]), e)


def test_serialisation():
    v = analytic_verdict(line_tree(5), law_with_mean(1.3))
    d = json.loads(v.to_json())
    assert d["phase"] == "StronglyRecurrent" and d["theorems"]
    assert v.csv_row()[3] == "StronglyRecurrent"
    with pytest.raises(ValueError):
        PhaseVerdict("Sideways", "m", "l")
    with pytest.raises(ValueError):
        PhaseVerdict("Transient", "m", "l")
