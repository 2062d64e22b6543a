"""Spectral radius of Markov kernels: truncations, closed forms and variants."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .models import (
    ConeTypeTree,
    CycleGraph,
    DriftZd,
    FiniteRegion,
    Glued,
    KernelModel,
    OffspringLaw,
    RegularTree,
    ResourceLimit,
    SeedChain,
    Finite,
    build_ball,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


class IrreducibilityError(ValueError):
    def __init__(self, component):
        super().__init__(f"region is reducible; one strongly connected component: {component[:10]!r}"
                         + (" ..." if len(component) > 10 else ""))
        self.component = component


class ConvergenceError(RuntimeError):
    def __init__(self, residual, iterations):
        super().__init__(f"power iteration did not converge after {iterations} iterations "
                         f"(last residual {residual:.3e})")
        self.residual = residual


class UnsupportedVariant(ValueError):
    pass


class InvalidCertificate(ValueError):
    pass


class TruncationInterrupted(RuntimeError):
    """A truncation sequence hit a resource limit; ``partial`` holds what was computed."""

    def __init__(self, cause, partial):
        super().__init__(f"{cause} (after {len(partial)} radii)")
        self.cause = cause
        self.partial = partial


@dataclass
class SpectralEstimate:
    value: float
    variant: str = "rho"
    method: str = "power_iteration"
    radius: int | None = None
    lower_bound: bool = False
    residual: float = 0.0
    vector: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def csv_row(self, model_id: str) -> list:
        return [model_id, self.variant, "" if self.radius is None else self.radius,
                repr(float(self.value)), repr(float(self.residual)), self.method]


CSV_HEADER = ["model_id", "variant", "radius", "value", "residual", "method"]


def write_spectral_csv(path, model_id: str, estimates) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for est in estimates:
            w.writerow(est.csv_row(model_id))


# ---------------------------------------------------------------- power iteration


def perron_root(Q, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                start: np.ndarray | None = None, check_every: int = 10):
    """Perron root and vector of an irreducible nonnegative matrix.

    Iterates on (Q + I)/2, whose Perron root is (rho + 1)/2 and which is
    aperiodic, so period-2 oscillation cannot occur.  Returns
    ``(rho, v, residual, iterations)`` with ``max|Qv - rho v| <= tol`` and
    ``max v = 1``.
    """
    Q = sparse.csr_matrix(Q)
    n = Q.shape[0]
    if n <= 400:
        Q = Q.toarray()
    v = np.ones(n) if start is None else np.array(start, dtype=float)
    v /= v.max()
    lam = 0.0
    res = math.inf
    it = 0
    while it < max_iter:
        for _ in range(check_every):
            w = 0.5 * (Q @ v + v)
            v = w / w.max()
        it += check_every
        Qv = Q @ v
        lam = float(Qv.max())  # v is normalised to max 1
        res = float(np.abs(Qv - lam * v).max())
        if res <= tol:
            return lam, v, res, it
    raise ConvergenceError(res, it)


def rho_finite(region: FiniteRegion, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
               start: np.ndarray | None = None) -> SpectralEstimate:
    """Perron root of the substochastic restriction P_Y."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not region.is_irreducible():
        if region.size == 1:
            raise IrreducibilityError(region.states)
        _, labels = region.components()
        comp = [x for x, lab in zip(region.states, labels) if lab == labels[0]]
        raise IrreducibilityError(comp)
    lam, v, res, it = perron_root(region.Q, tol, max_iter, start)
    return SpectralEstimate(lam, "rho", "power_iteration", region.radius, lower_bound=True,
                            residual=res, vector=v, extra={"iterations": it, "size": region.size})


def _pad_start(prev: SpectralEstimate | None, prev_states, region: FiniteRegion):
    if prev is None or prev.vector is None:
        return None
    start = np.full(region.size, float(prev.vector.min()))
    for x, val in zip(prev_states, prev.vector):
        j = region.index.get(x)
        if j is not None:
            start[j] = val
    return start


def rho_truncation_sequence(model: KernelModel, center=None, max_radius: int = 10,
                            tol: float = DEFAULT_TOL, node_cap: int | None = None,
                            keep: Callable | None = None, min_radius: int = 1) -> list[SpectralEstimate]:
    """Perron roots of the balls of radius min_radius..max_radius around ``center``.

    Each power iteration is warm-started from the previous radius' Perron
    vector (deterministic, so results are reproducible).
    """
    if max_radius < 2:
        raise ValueError("max_radius must be >= 2")
    if center is None:
        center = model.origin
    out: list[SpectralEstimate] = []
    prev_states = None
    kw = {} if node_cap is None else {"node_cap": node_cap}
    for r in range(min_radius, max_radius + 1):
        try:
            region = build_ball(model, center, r, keep=keep, **kw)
        except ResourceLimit as exc:
            raise TruncationInterrupted(exc, out) from exc
        start = _pad_start(out[-1] if out else None, prev_states, region)
        est = rho_finite(region, tol, start=start)
        out.append(est)
        prev_states = region.states
    return out


# ---------------------------------------------------------------- closed forms


def rho_closed_form(model: KernelModel) -> SpectralEstimate | None:
    """Closed-form spectral radius when the family has one, else None."""
    if isinstance(model, DriftZd):
        val = 2.0 * math.fsum(math.sqrt(a * b) for a, b in zip(model.p_plus, model.p_minus))
        return SpectralEstimate(val, "rho", "closed_form")
    if isinstance(model, RegularTree):
        M = model.M
        return SpectralEstimate(2.0 * math.sqrt(M - 1) / M, "rho", "closed_form")
    if isinstance(model, Glued) and model.meta.get("instance") == "line_tree":
        M = model.meta["M"]
        if M >= 5:
            val = math.sqrt((M - 1) / (2 * (M - 2)))
        else:
            val = 2.0 * math.sqrt(M - 1) / M
        return SpectralEstimate(val, "rho", "closed_form", extra={"instance": "line_tree", "M": M})
    if isinstance(model, CycleGraph):
        # the chain is recurrent, so its Green function diverges at z = 1
        return SpectralEstimate(1.0, "rho", "closed_form", extra={"reason": "recurrent chain"})
    if isinstance(model, Finite):
        return SpectralEstimate(1.0, "rho", "closed_form", extra={"reason": "finite stochastic"})
    return None


def rho(model: KernelModel, tol: float = DEFAULT_TOL, max_radius: int = 60,
        node_cap: int | None = None) -> SpectralEstimate:
    """Closed form if available, else the last truncation estimate."""
    est = rho_closed_form(model)
    if est is not None:
        return est
    center = model.origin
    if isinstance(model, SeedChain):
        center = model.seed_site
    try:
        seq = rho_truncation_sequence(model, center, max_radius, tol, node_cap=node_cap)
    except TruncationInterrupted as exc:
        if not exc.partial:
            raise
        seq = exc.partial
    last = seq[-1]
    gap = last.value - seq[-2].value if len(seq) > 1 else math.inf
    last.extra["monotone_gap"] = gap
    return last


# ---------------------------------------------------------------- variants


def _component_rho(comp: KernelModel, root, tol, max_radius, node_cap):
    est = rho_closed_form(comp)
    if est is not None:
        return est
    try:
        seq = rho_truncation_sequence(comp, root, max_radius, tol, node_cap=node_cap)
    except TruncationInterrupted as exc:
        seq = exc.partial
    return seq[-1]


def cone_classes(model: ConeTypeTree) -> list[list]:
    """Irreducible classes of the cone digraph that contain a cycle."""
    types = sorted(model.children, key=str)
    idx = {t: i for i, t in enumerate(types)}
    rows, cols = zip(*[(idx[a], idx[b]) for a, b in model.digraph_edges()])
    A = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(types), len(types)))
    n, labels = csgraph.connected_components(A, directed=True, connection="strong")
    edges = model.digraph_edges()
    out = []
    for lab in range(n):
        cls = [t for t in types if labels[idx[t]] == lab]
        if len(cls) > 1 or (cls[0], cls[0]) in edges:
            out.append(cls)
    return out


def _vertex_of_type(model: ConeTypeTree, target):
    # breadth-first over the digraph from the root type
    from collections import deque

    q = deque([((), model.root_type)])
    seen = {model.root_type}
    while q:
        x, t = q.popleft()
        if t == target:
            return x
        for j, (c, _) in enumerate(model.children[t]):
            if c not in seen:
                seen.add(c)
                q.append((x + (j,), c))
    return None


def rho_variant(model: KernelModel, variant: str, tol: float = DEFAULT_TOL, max_radius: int = 12,
                node_cap: int | None = None) -> SpectralEstimate:
    """The spectral-radius variants that govern strong recurrence.

    ``varrho``: minimum of the component spectral radii of a glued chain.
    ``tilde_rho``: minimum over the irreducible classes of a cone digraph of
    the spectral radius of the walk restricted to a class sub-cone (for a
    glued chain this coincides with ``varrho``).
    ``check_rho``: minimum over local ball types of the ball Perron roots at
    the largest radius reached.
    """
    if variant == "rho":
        return rho(model, tol)
    if variant == "varrho" or (variant == "tilde_rho" and isinstance(model, Glued)):
        if not isinstance(model, Glued):
            raise UnsupportedVariant(f"varrho needs a Glued model, not {model.family}")
        ests = [_component_rho(c, r, tol, max_radius, node_cap)
                for c, r in zip(model.components, model.roots)]
        k = int(np.argmin([e.value for e in ests]))
        closed = all(e.method == "closed_form" for e in ests)
        return SpectralEstimate(ests[k].value, variant, "closed_form" if closed else "power_iteration",
                                ests[k].radius, lower_bound=not closed, residual=ests[k].residual,
                                extra={"attaining_component": k, "attained": True,
                                       "component_values": [e.value for e in ests]})
    if variant == "tilde_rho":
        if not isinstance(model, ConeTypeTree):
            raise UnsupportedVariant(f"tilde_rho needs a ConeTypeTree or Glued model, not {model.family}")
        classes = cone_classes(model)
        if not classes:
            raise UnsupportedVariant("cone digraph has no cyclic class")
        per_class = []
        for cls in classes:
            members = set(cls)
            x0 = _vertex_of_type(model, cls[0])
            if x0 is None:
                continue
            n0 = len(x0)

            def keep(y, x0=x0, n0=n0, members=members):
                return len(y) >= n0 and y[:n0] == x0 and model.cone_type(y) in members

            try:
                seq = rho_truncation_sequence(model, x0, max_radius, tol, node_cap=node_cap, keep=keep)
            except TruncationInterrupted as exc:
                seq = exc.partial
            per_class.append((cls, seq[-1]))
        k = int(np.argmin([e.value for _, e in per_class]))
        cls, est = per_class[k]
        return SpectralEstimate(est.value, "tilde_rho", "power_iteration", est.radius, lower_bound=True,
                                residual=est.residual,
                                extra={"attaining_class": cls,
                                       "class_values": {str(c): e.value for c, e in per_class}})
    if variant == "check_rho":
        if isinstance(model, CycleGraph):
            raise UnsupportedVariant("balls of the cycle graph are reducible; check_rho is undefined")
        best = None
        n_reached = 0
        per_radius = []
        for n in range(1, max_radius + 1):
            try:
                vals = [rho_finite(build_ball(model, c, n, **({} if node_cap is None else {"node_cap": node_cap})),
                                   tol).value
                        for c in model.local_centers(n)]
            except ResourceLimit:
                break
            best = min(vals)
            n_reached = n
            per_radius.append(best)
        if best is None:
            raise UnsupportedVariant("node cap reached before radius 1")
        return SpectralEstimate(best, "check_rho", "power_iteration", n_reached, lower_bound=False,
                                extra={"per_radius": per_radius})
    raise UnsupportedVariant(f"unknown variant {variant!r}")


# ---------------------------------------------------------------- certificates


@dataclass
class CertificateFunction:
    """A positive function given by explicit values plus an extension rule."""

    values: dict = field(default_factory=dict)
    extension: Callable[[Any], float] | None = None

    def __call__(self, x) -> float:
        v = self.values.get(x)
        if v is None:
            if self.extension is None:
                raise InvalidCertificate(f"certificate undefined at {x!r}")
            v = self.extension(x)
        return float(v)

    @classmethod
    def from_callable(cls, fn):
        return cls({}, fn)


@dataclass
class CertificateReport:
    holds: bool
    slacks: dict
    min_slack: float
    argmin: Any
    covers_all_states: bool = False
    note: str = ""


def _mean_fn(m):
    if isinstance(m, OffspringLaw):
        return m.mean
    if callable(m):
        return m
    return lambda x, _m=float(m): _m


def check_superharmonic(model: KernelModel, m, f: CertificateFunction, region: FiniteRegion,
                        tol: float = 1e-12) -> CertificateReport:
    """Check P f(x) <= f(x)/m(x) on the region states.

    Slacks are ``f(x)/m(x) - P f(x)``; the check passes when every slack is at
    least ``-tol * max(1, f(x))`` (scaled so that large f values are not
    penalised for rounding).
    """
    mean = _mean_fn(m)
    slacks = {}
    ok = True
    for x in region.states:
        fx = f(x)
        if fx <= 0:
            raise InvalidCertificate(f"certificate is nonpositive at {x!r}")
        pf = math.fsum(p * f(y) for y, p in model.neighbors(x))
        for y, _ in model.neighbors(x):
            if f(y) <= 0:
                raise InvalidCertificate(f"certificate is nonpositive at {y!r}")
        s = fx / mean(x) - pf
        slacks[x] = s
        if s < -tol * max(1.0, fx):
            ok = False
    arg = min(slacks, key=slacks.get)
    return CertificateReport(ok, slacks, slacks[arg], arg,
                             note="checked on the region and its one-step exterior")
