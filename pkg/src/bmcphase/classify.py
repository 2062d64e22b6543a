"""Analytic phase verdicts per model family and their reconciliation with
simulation evidence."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

from .ldp import randenv_criterion
from .models import (ConeTypeTree, CycleGraph, DriftZd, Finite, Glued, KernelModel, OffspringLaw,
                     RegularTree, SeedChain, TwoPointEnvironmentZ)
from .spectral import SpectralEstimate, cone_classes, rho, rho_variant

PHASES = ("Transient", "WeaklyRecurrent", "StronglyRecurrent", "PositiveRecurrent", "Boundary", "Unknown")
PHASE_ORDER = {"Transient": 0, "WeaklyRecurrent": 1, "StronglyRecurrent": 2, "PositiveRecurrent": 3}

# theorem tags
T_TRANSIENT = "transient iff m <= 1/rho"
T_STRONG = "strongly recurrent if m > 1/rho (quasi-transitive)"
T_GLUED = "three phases for glued quasi-transitive chains"
T_CONE_IRR = "two phases for finitely many irreducible cone types"
T_CONE = "three phases for finitely many cone types"
T_POSREC_Z = "positive recurrent on Z with drift if m > 1/rho"
T_SEED = "seed example on Z"
T_CYCLE = "cycle graph example"
T_RANDENV = "random environment criterion on Z^d"
T_DEGENERATE = "no branching"

GLUE_REMARK = ("the attained-infimum rule is applied only because every component is quasi-transitive; "
               "with a non-quasi-transitive component the critical value 1/varrho can behave differently")

QUASI_TRANSITIVE = (DriftZd, RegularTree, Finite)


class ApplicabilityError(ValueError):
    """A theorem hypothesis (named in the message) does not hold for the input."""


class MissingEvidence(ValueError):
    pass


@dataclass
class PhaseVerdict:
    phase: str
    model_id: str
    law_id: str
    m: float | None = None
    thresholds: dict = field(default_factory=dict)
    theorems: list = field(default_factory=list)
    note: str = ""
    kind: str = "analytic"
    label: str = ""
    boundary: bool = False
    evidence: list = field(default_factory=list)

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.kind == "analytic" and not self.theorems:
            raise ValueError("an analytic verdict needs at least one theorem tag")

    def boundary_distance(self) -> float | None:
        if self.m is None or not self.thresholds:
            return None
        return min(abs(self.m - t) for t in self.thresholds.values() if math.isfinite(t))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["boundary_distance"] = self.boundary_distance()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=str)

    def csv_row(self) -> list:
        th = ";".join(f"{k}={v!r}" for k, v in sorted(self.thresholds.items()))
        return [self.model_id, self.law_id, "" if self.m is None else repr(self.m), self.phase,
                self.kind, th, "|".join(self.theorems), int(self.boundary)]


VERDICT_HEADER = ["model_id", "law_id", "m", "phase", "kind", "thresholds", "theorems", "boundary"]


def write_verdict_csv(path, verdicts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERDICT_HEADER)
        for v in verdicts:
            w.writerow(v.csv_row())


# ---------------------------------------------------------------- analytic


def _band(est: SpectralEstimate, tol: float):
    """Interval that contains 1/rho.

    Closed forms get a relative band of ``tol``.  Truncation values are lower
    bounds of rho, so 1/rho lies below 1/value by at most the residual plus the
    last monotone gap.
    """
    thr = 1.0 / est.value
    if est.method == "closed_form":
        return thr, thr * (1 - tol), thr * (1 + tol), True
    slack = est.residual + est.extra.get("monotone_gap", 0.0)
    if not math.isfinite(slack):
        slack = est.value
    lo = 1.0 / (est.value + slack)
    return thr, min(lo, thr * (1 - tol)), thr * (1 + tol), False


def _where(m, band):
    """-1 below, 0 inside, +1 above the band."""
    _, lo, hi, _ = band
    if m < lo:
        return -1
    if m > hi:
        return 1
    return 0


def _require_constant_mean(law: OffspringLaw, hypothesis: str) -> float:
    m = law.constant_mean()
    if m is None:
        raise ApplicabilityError(f"constant mean offspring is required ({hypothesis})")
    return m


def _two_phase(model, law, m, est, tol, upper_phase, tags, note=""):
    band = _band(est, tol)
    thr = band[0]
    pos = _where(m, band)
    th = {"1/rho": thr}
    if pos < 0:
        return PhaseVerdict("Transient", model.model_id, law.law_id, m, th, [T_TRANSIENT], note)
    if pos == 0:
        if band[3]:
            return PhaseVerdict("Transient", model.model_id, law.law_id, m, th, [T_TRANSIENT],
                                "critical value m = 1/rho is transient", boundary=True)
        return PhaseVerdict("Boundary", model.model_id, law.law_id, m, th, [T_TRANSIENT],
                            f"m lies within the truncation band [{band[1]:.6g}, {band[2]:.6g}] of 1/rho",
                            boundary=True)
    return PhaseVerdict(upper_phase, model.model_id, law.law_id, m, th, [T_TRANSIENT, *tags], note)


def analytic_verdict(model: KernelModel, law: OffspringLaw, tol: float = 1e-9,
                     max_radius: int | None = None) -> PhaseVerdict:
    """Phase from the strongest theorem that applies to the model family."""
    mid, lid = model.model_id, law.law_id
    m = law.constant_mean()
    if m is not None and m <= 1.0 + 1e-15:
        return PhaseVerdict("Unknown", mid, lid, m, {}, [T_DEGENERATE],
                            "m = 1: no branching theorem applies; the phase is that of the Markov chain")

    if isinstance(model, DriftZd):
        m = _require_constant_mean(law, "transience/strong recurrence for quasi-transitive chains")
        est = rho(model)
        tags = [T_STRONG]
        phase = "StronglyRecurrent"
        note = ""
        if model.d == 1 and abs(model.drift()[0]) > 0:
            if law.is_constant():
                tags.append(T_POSREC_Z)
                phase = "PositiveRecurrent"
            else:
                note = "positive recurrence needs a constant offspring distribution"
        return _two_phase(model, law, m, est, tol, phase, tags, note)

    if isinstance(model, RegularTree):
        m = _require_constant_mean(law, "transience/strong recurrence for quasi-transitive chains")
        return _two_phase(model, law, m, rho(model), tol, "StronglyRecurrent", [T_STRONG])

    if isinstance(model, Glued):
        m = _require_constant_mean(law, "three-phase law for glued chains")
        return _glued_verdict(model, law, m, tol, max_radius)

    if isinstance(model, ConeTypeTree):
        m = _require_constant_mean(law, "phase law for finitely many cone types")
        return _cone_verdict(model, law, m, tol, max_radius or 10)

    if isinstance(model, SeedChain):
        m = _require_constant_mean(law, "seed example")
        return _seed_verdict(model, law, m, tol, max_radius or 60)

    if isinstance(model, CycleGraph):
        m = _require_constant_mean(law, "cycle graph example")
        th = {"1/rho": 1.0}
        origin_ms = law.masses_at(model.origin)
        if law.is_constant() and law.masses == (0.0, 1.0):
            return PhaseVerdict("PositiveRecurrent", mid, lid, m, th, [T_TRANSIENT, T_CYCLE],
                                "binary branching everywhere: E_x T_x < infinity for all x")
        if origin_ms == (0.5, 0.0, 0.5) and all(law.masses_at((i, 1)) == (0.0, 1.0)
                                                for i in range(1, model.max_cycle + 1)):
            return PhaseVerdict("StronglyRecurrent", mid, lid, m, th, [T_TRANSIENT, T_CYCLE],
                                "E_o T_o = infinity, so not positive recurrent at the origin")
        return PhaseVerdict("Unknown", mid, lid, m, th, [T_TRANSIENT],
                            "recurrent since m > 1/rho = 1; strong/positive recurrence not decided")

    if isinstance(model, TwoPointEnvironmentZ):
        m = _require_constant_mean(law, "random environment criterion")
        support = [{1: p, -1: 1.0 - p} for p in model.p_right]
        v = randenv_criterion(support, m)
        th = {"1/sup_hull_inf_mgf": 1.0 / v.value}
        return PhaseVerdict(v.verdict, mid, lid, m, th, [T_RANDENV], "; ".join(v.notes), boundary=v.boundary)

    if isinstance(model, Finite):
        m = _require_constant_mean(law, "finite chain")
        return PhaseVerdict("PositiveRecurrent", mid, lid, m, {"1/rho": 1.0}, [T_TRANSIENT],
                            "finite irreducible chain with m > 1")

    raise ApplicabilityError(f"no theorem implemented for family {model.family}")


def _glued_verdict(model: Glued, law, m, tol, max_radius):
    mid, lid = model.model_id, law.law_id
    est = rho(model, max_radius=max_radius or 60)
    band1 = _band(est, tol)
    if not all(isinstance(c, QUASI_TRANSITIVE) for c in model.components):
        v = _two_phase(model, law, m, est, tol, "Unknown", [],
                       "a component is not quasi-transitive; only the transience threshold applies")
        return v
    vr = rho_variant(model, "varrho", max_radius=max_radius or 12)
    band2 = _band(vr, tol)
    th = {"1/rho": band1[0], "1/varrho": band2[0]}
    tags = [T_TRANSIENT, T_GLUED]
    p1, p2 = _where(m, band1), _where(m, band2)
    if p1 < 0:
        return PhaseVerdict("Transient", mid, lid, m, th, [T_TRANSIENT])
    if p1 == 0:
        if band1[3]:
            return PhaseVerdict("Transient", mid, lid, m, th, [T_TRANSIENT],
                                "critical value m = 1/rho is transient", boundary=True)
        return PhaseVerdict("Boundary", mid, lid, m, th, [T_TRANSIENT], "m within the 1/rho band",
                            boundary=True)
    if p2 < 0:
        return PhaseVerdict("WeaklyRecurrent", mid, lid, m, th, tags, GLUE_REMARK)
    if p2 == 0:
        if band2[3] and vr.extra.get("attained", False):
            return PhaseVerdict("WeaklyRecurrent", mid, lid, m, th, tags,
                                "m = 1/varrho with the infimum attained gives alpha < 1; " + GLUE_REMARK,
                                boundary=True)
        if band2[3]:
            return PhaseVerdict("StronglyRecurrent", mid, lid, m, th, tags,
                                "m = 1/varrho with the infimum not attained gives alpha = 1; " + GLUE_REMARK,
                                boundary=True)
        return PhaseVerdict("Boundary", mid, lid, m, th, tags, "m within the 1/varrho band", boundary=True)
    return PhaseVerdict("StronglyRecurrent", mid, lid, m, th, tags, GLUE_REMARK)


def _cone_verdict(model: ConeTypeTree, law, m, tol, max_radius):
    mid, lid = model.model_id, law.law_id
    classes = cone_classes(model)
    est = rho(model, max_radius=max_radius)
    irreducible = len(classes) == 1 and len(classes[0]) == len(model.children)
    if irreducible:
        return _two_phase(model, law, m, est, tol, "StronglyRecurrent", [T_CONE_IRR])
    band1 = _band(est, tol)
    tr = rho_variant(model, "tilde_rho", max_radius=max_radius)
    band2 = _band(tr, tol)
    th = {"1/rho": band1[0], "1/tilde_rho": band2[0]}
    tags = [T_TRANSIENT, T_CONE]
    p1, p2 = _where(m, band1), _where(m, band2)
    if p1 < 0:
        return PhaseVerdict("Transient", mid, lid, m, th, [T_TRANSIENT, T_CONE])
    if p1 == 0:
        return PhaseVerdict("Boundary", mid, lid, m, th, tags, "m within the 1/rho band", boundary=True)
    if p2 < 0:
        return PhaseVerdict("WeaklyRecurrent", mid, lid, m, th, tags)
    if p2 == 0:
        # truncation bands are one-sided, so the critical value cannot be told apart
        return PhaseVerdict("Boundary", mid, lid, m, th, tags, "m within the 1/tilde_rho band", boundary=True)
    return PhaseVerdict("StronglyRecurrent", mid, lid, m, th, tags)


def _seed_verdict(model: SeedChain, law, m, tol, max_radius):
    mid, lid = model.model_id, law.law_id
    est = rho(model, max_radius=max_radius)
    band1 = _band(est, tol)
    p = model.p_right
    homog = 1.0 / (2.0 * math.sqrt(p * (1 - p)))
    th = {"1/rho": band1[0], "1/rho_homogeneous": homog}
    pos = _where(m, band1)
    if pos < 0:
        return PhaseVerdict("Transient", mid, lid, m, th, [T_TRANSIENT])
    if pos == 0:
        return PhaseVerdict("Boundary", mid, lid, m, th, [T_TRANSIENT], "m within the 1/rho band",
                            boundary=True)
    if m <= homog * (1 + tol):
        return PhaseVerdict("WeaklyRecurrent", mid, lid, m, th, [T_TRANSIENT, T_SEED],
                            "the homogeneous walk off the seed is transient at this m, so particles "
                            "escape the seed with positive probability")
    return PhaseVerdict("Unknown", mid, lid, m, th, [T_TRANSIENT],
                        "recurrent; strong recurrence above the homogeneous threshold is not decided")


# ---------------------------------------------------------------- empirical


@dataclass(frozen=True)
class TolProfile:
    nu_tol: float = 0.02
    alpha_tol: float = 0.05
    r2_gate: float = 0.9
    max_censored: float = 0.01
    K: int = 50


def _by_kind(evidence):
    if isinstance(evidence, dict):
        return dict(evidence)
    return {s.estimator: s for s in evidence}


def _evidence_record(s) -> dict:
    rec = {"estimator": s.estimator, "value": s.value, "ci_low": s.ci_low, "ci_high": s.ci_high,
           "R": s.R, "horizon": s.horizon, "pop_cap": s.pop_cap, "seed": s.seed}
    for k in ("K", "tail_r2", "censored_fraction"):
        if k in s.extra:
            rec[k] = s.extra[k]
    return rec


def empirical_verdict(evidence, profile: TolProfile | None = None, m: float | None = None) -> PhaseVerdict:
    """Rule-based phase evidence from simulation summaries (keyed by estimator name).

    Needs a ``nu`` summary; ``alpha_proxy`` and ``return_time`` refine the
    recurrent case.
    """
    profile = profile or TolProfile()
    ev = _by_kind(evidence)
    nu = ev.get("nu")
    if nu is None:
        raise MissingEvidence("empirical verdict needs an E nu summary")
    mid, lid = nu.model_id, nu.law_id
    recs = [_evidence_record(s) for s in ev.values()]

    def out(phase, label, note=""):
        return PhaseVerdict(phase, mid, lid, m, {}, [], note, kind="empirical", label=label, evidence=recs)

    if nu.ci_high <= 1 + profile.nu_tol:
        return out("Transient", "Transient-evidence")
    if not nu.ci_low > 1:
        return out("Unknown", "Unknown", "E nu CI straddles 1")
    alpha = ev.get("alpha_proxy")
    if alpha is None:
        return out("Unknown", "Recurrent-evidence", "no alpha proxy to separate weak from strong")
    if alpha.extra.get("K", profile.K) != profile.K:
        return out("Unknown", "Recurrent-evidence", "alpha proxy was run with a different K")
    if alpha.value < 1 - profile.alpha_tol:
        return out("WeaklyRecurrent", "WeaklyRecurrent-evidence")
    rt = ev.get("return_time")
    if (rt is not None and rt.extra.get("tail_r2", 0.0) > profile.r2_gate
            and rt.extra.get("censored_fraction", 1.0) <= profile.max_censored):
        return out("PositiveRecurrent", "Positive-evidence")
    return out("StronglyRecurrent", "Strong-evidence")


# ---------------------------------------------------------------- reconciliation

_COMPATIBLE = {
    "Transient": {"Transient-evidence"},
    "WeaklyRecurrent": {"WeaklyRecurrent-evidence", "Recurrent-evidence"},
    "StronglyRecurrent": {"Strong-evidence", "Recurrent-evidence"},
    "PositiveRecurrent": {"Positive-evidence", "Strong-evidence", "Recurrent-evidence"},
}


@dataclass
class ReconcileReport:
    model_id: str
    law_id: str
    phase: str
    empirical_label: str
    agree: bool | None
    boundary_flag: bool
    boundary_distance: float | None
    evidence_cis: list
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def reconcile(analytic: PhaseVerdict, empirical: PhaseVerdict, boundary_band: float = 0.05) -> ReconcileReport:
    """Compare the two verdicts; the analytic phase is always the one reported."""
    if (analytic.model_id, analytic.law_id) != (empirical.model_id, empirical.law_id):
        raise ValueError(f"id mismatch: {(analytic.model_id, analytic.law_id)} vs "
                         f"{(empirical.model_id, empirical.law_id)}")
    dist = analytic.boundary_distance()
    cis = [(e["estimator"], e["ci_low"], e["ci_high"]) for e in empirical.evidence]
    label = empirical.label or empirical.phase
    compat = _COMPATIBLE.get(analytic.phase)
    agree = None if compat is None else label in compat
    near = dist is not None and any(dist <= boundary_band * t for t in analytic.thresholds.values())
    boundary_flag = analytic.boundary or analytic.phase == "Boundary" or (agree is False and near)
    if analytic.boundary and label == "Unknown":
        agree = None
    notes = []
    if boundary_flag:
        notes.append(f"near-critical: |m - threshold| = {dist:.3g}; finite-size effects are expected"
                     if dist is not None else "near-critical")
    if analytic.phase == "Transient" and analytic.boundary:
        notes.append("the critical value itself is transient")
    if agree is False:
        notes.append("disagreement; the analytic verdict stands")
    return ReconcileReport(analytic.model_id, analytic.law_id, analytic.phase, label, agree, boundary_flag,
                           dist, cis, "; ".join(notes))
