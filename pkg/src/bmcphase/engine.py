"""Monte Carlo simulation of branching Markov chains (BMC) and of the
frozen-origin process BMC*.

Particles sitting on the same state are handled in aggregate: a state with
count c draws its total offspring from one multinomial over the offspring
masses and sends the offspring to its neighbours with one multinomial over
the transition row.  On the one-dimensional lattice families whole
generations are vectorised over occupied sites.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

from .models import KernelModel, OffspringLaw

SCHEMA_VERSION = 1
WORKERS_ENV = "BMCPHASE_WORKERS"

STREAM_TAGS = {"bmc": 1, "bmc_star": 2, "nu": 3, "alpha": 4, "return_time": 5, "speed": 6}


def replica_rng(master_seed: int, stream: str, replica: int) -> np.random.Generator:
    """Counter-based stream for one replica; independent of execution order."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(STREAM_TAGS[stream], int(replica)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------- generation step


class _Population:
    """Occupied states with counts.  Lattice models use sorted numpy arrays."""

    def __init__(self, model: KernelModel, law: OffspringLaw, start, count: int = 1):
        self.model = model
        self.law = law
        self.lattice = bool(model.lattice)
        if self.lattice:
            self.pos = np.array([start], dtype=np.int64)
            self.cnt = np.array([count], dtype=np.int64)
        else:
            self.occ = {start: int(count)}
        self._const = law.is_constant() and law.labeler is None
        self._ks = None

    # -- views
    def total(self) -> int:
        return int(self.cnt.sum()) if self.lattice else sum(self.occ.values())

    def count_at(self, x) -> int:
        if self.lattice:
            i = np.searchsorted(self.pos, x)
            return int(self.cnt[i]) if i < len(self.pos) and self.pos[i] == x else 0
        return self.occ.get(x, 0)

    def remove_at(self, x) -> int:
        if self.lattice:
            i = np.searchsorted(self.pos, x)
            if i < len(self.pos) and self.pos[i] == x:
                c = int(self.cnt[i])
                self.pos = np.delete(self.pos, i)
                self.cnt = np.delete(self.cnt, i)
                return c
            return 0
        return self.occ.pop(x, 0)

    def minimum(self):
        return int(self.pos[0]) if len(self.pos) else None

    def empty(self) -> bool:
        return self.total() == 0

    # -- dynamics
    def _offspring_totals(self, states, counts, rng):
        law = self.law
        if self._const:
            ms = law.masses
            if len(ms) == 1:
                return counts * 1
            ks = np.arange(1, len(ms) + 1)
            return rng.multinomial(counts, ms) @ ks
        out = np.empty_like(counts)
        groups: dict[tuple, list[int]] = {}
        for i, x in enumerate(states):
            groups.setdefault(law.masses_at(x if not self.lattice else int(x)), []).append(i)
        for ms, idx in groups.items():
            idx = np.asarray(idx)
            if len(ms) == 1:
                out[idx] = counts[idx]
            else:
                out[idx] = rng.multinomial(counts[idx], ms) @ np.arange(1, len(ms) + 1)
        return out

    def step(self, rng: np.random.Generator):
        """Branch, then move every offspring one step."""
        if self.lattice:
            self._step_lattice(rng)
        else:
            self._step_generic(rng)

    def _step_lattice(self, rng):
        model = self.model
        kids = self._offspring_totals(self.pos, self.cnt, rng)
        keys = model.jump_keys(self.pos)
        if keys is None:
            offs, probs = model.jump_table(0)
            moved = rng.multinomial(kids, probs)
            pos = (self.pos[:, None] + np.asarray(offs)[None, :]).ravel()
            cnt = moved.ravel()
        else:
            new_pos, new_cnt = [], []
            for key in np.unique(keys):
                sel = keys == key
                offs, probs = model.jump_table(int(key))
                moved = rng.multinomial(kids[sel], probs)
                new_pos.append((self.pos[sel][:, None] + np.asarray(offs)[None, :]).ravel())
                new_cnt.append(moved.ravel())
            pos = np.concatenate(new_pos)
            cnt = np.concatenate(new_cnt)
        # merge equal sites; positions span a short window so bincount beats sorting
        lo = int(pos.min())
        tot = np.bincount(pos - lo, weights=cnt)
        nz = np.flatnonzero(tot)
        self.pos = nz.astype(np.int64) + lo
        self.cnt = tot[nz].astype(np.int64)

    def _step_generic(self, rng):
        states = list(self.occ)
        counts = np.fromiter(self.occ.values(), dtype=np.int64, count=len(states))
        kids = self._offspring_totals(states, counts, rng)
        nxt: dict[Any, int] = {}
        for x, k in zip(states, kids):
            row = self.model.neighbors(x)
            if len(row) == 1:
                y = row[0][0]
                nxt[y] = nxt.get(y, 0) + int(k)
                continue
            moved = rng.multinomial(int(k), [p for _, p in row])
            for (y, _), c in zip(row, moved):
                if c:
                    nxt[y] = nxt.get(y, 0) + int(c)
        self.occ = nxt

    # -- population control
    def prune_left(self, cap: int) -> bool:
        """Keep the ``cap`` leftmost particles (lattice only)."""
        if self.total() <= cap:
            return False
        cum = np.cumsum(self.cnt)
        j = int(np.searchsorted(cum, cap))
        kept = self.cnt[: j + 1].copy()
        kept[-1] -= cum[j] - cap
        self.pos = self.pos[: j + 1]
        self.cnt = kept
        mask = self.cnt > 0
        self.pos, self.cnt = self.pos[mask], self.cnt[mask]
        return True

    def thin(self, cap: int) -> bool:
        """Scale counts down so the total is about ``cap``, keeping every occupied state."""
        tot = self.total()
        if tot <= cap:
            return False
        f = cap / tot
        if self.lattice:
            self.cnt = np.maximum(1, np.floor(self.cnt * f)).astype(np.int64)
        else:
            self.occ = {x: max(1, int(c * f)) for x, c in self.occ.items()}
        return True


class _LatticeView:
    """Adapter that lets _Population query vectorised jump keys/tables on a lattice model."""

    lattice = True

    def __init__(self, model):
        self._m = model
        self._tables: dict[int, tuple] = {}

    def __getattr__(self, name):
        return getattr(self._m, name)

    def jump_keys(self, pos):
        m = self._m
        if getattr(m, "family", "") == "DriftZd":
            if 0 not in self._tables:
                self._tables[0] = m.jump_law(m.origin)
            return None
        if getattr(m, "family", "") == "SeedChain":
            keys = (pos == m.seed_site).astype(np.int64)
        else:
            keys = np.fromiter((m.jump_key(int(x)) for x in pos), dtype=np.int64, count=len(pos))
        for key in np.unique(keys):
            k = int(key)
            if k not in self._tables:
                x = int(pos[np.argmax(keys == key)])
                self._tables[k] = m.jump_law(x)
        return keys

    def jump_table(self, key):
        return self._tables[key]


# ---------------------------------------------------------------- replica records


@dataclass
class ReplicaResult:
    seed: tuple
    reason: str
    steps: int
    nu: int | None = None
    nu_lower_bound: bool = False
    hit_time: int | None = None
    censored_at: int | None = None
    min_trace: list | None = None
    returns: int = 0
    eta: list = field(default_factory=list)
    pruned: bool = False
    rounds: int = 0


def _pop(model, law, start, count=1):
    if model.lattice:
        model = _LatticeView(model)
    return _Population(model, law, start, count)


def run_bmc(model: KernelModel, law: OffspringLaw, start, horizon: int, pop_cap: int,
            rng: np.random.Generator, target=None, stop_on_target: bool = False,
            record_min: bool = False, prune: str | None = None, seed: tuple = ()) -> ReplicaResult:
    """Simulate branch-then-move generations of a BMC from one particle at ``start``.

    ``target`` (default ``start``) is watched for visits at times n >= 1.
    With ``prune=None`` the run stops once the population exceeds ``pop_cap``;
    ``prune='left'`` keeps the leftmost particles instead (lattice only) and
    ``prune='thin'`` scales all counts down.
    """
    if horizon < 1 or pop_cap < 1:
        raise ValueError("horizon and pop_cap must be >= 1")
    model.validate(start)
    if target is None:
        target = start
    pop = _pop(model, law, start)
    res = ReplicaResult(seed, "horizon", 0, eta=[1])
    if record_min:
        res.min_trace = [int(start)]
    for n in range(1, horizon + 1):
        pop.step(rng)
        res.steps = n
        res.eta.append(pop.total())
        if pop.count_at(target):
            res.returns += 1
            if res.hit_time is None:
                res.hit_time = n
            if stop_on_target:
                res.reason = "target-hit"
                break
        if pop.total() > pop_cap:
            if prune == "left":
                res.pruned |= pop.prune_left(pop_cap)
            elif prune == "thin":
                res.pruned |= pop.thin(pop_cap)
            else:
                if record_min:
                    res.min_trace.append(pop.minimum())
                res.reason = "pop_cap"
                break
        if record_min:
            res.min_trace.append(pop.minimum())
    if res.hit_time is None:
        res.censored_at = res.steps
    return res


def run_bmc_star(model: KernelModel, law: OffspringLaw, origin, start, horizon: int, pop_cap: int,
                 rng: np.random.Generator, count: int = 1, seed: tuple = ()) -> ReplicaResult:
    """BMC with a freezing origin: from time 1 on, particles at ``origin`` stop.

    The first generation branches and moves normally even when it starts at
    the origin.  ``nu`` is the frozen count at termination; it is flagged as a
    lower bound when live particles remain (horizon or pop_cap reached).
    """
    if horizon < 1 or pop_cap < 1:
        raise ValueError("horizon and pop_cap must be >= 1")
    model.validate(start)
    model.validate(origin)
    pop = _pop(model, law, start, count)
    frozen = 0
    res = ReplicaResult(seed, "horizon", 0, eta=[count])
    for n in range(1, horizon + 1):
        pop.step(rng)
        res.steps = n
        arrived = pop.remove_at(origin)
        if arrived:
            frozen += arrived
            if res.hit_time is None:
                res.hit_time = n
        live = pop.total()
        res.eta.append(live + frozen)
        if live == 0:
            res.reason = "extinct-at-origin-event"
            break
        if live > pop_cap:
            res.reason = "pop_cap"
            break
    res.nu = frozen
    res.nu_lower_bound = not pop.empty()
    if res.hit_time is None:
        res.censored_at = res.steps
    return res


# ---------------------------------------------------------------- summaries


@dataclass
class SimulationSummary:
    estimator: str
    model_id: str
    law_id: str
    R: int
    value: float
    ci_low: float
    ci_high: float
    seed: int
    horizon: int
    pop_cap: int
    ci_level: float = 0.95
    extra: dict = field(default_factory=dict)
    replicas: list = field(default_factory=list, repr=False)

    def csv_row(self) -> list:
        return [SCHEMA_VERSION, self.model_id, self.law_id, self.estimator, repr(float(self.value)),
                repr(float(self.ci_low)), repr(float(self.ci_high)), self.R, self.horizon,
                self.pop_cap, self.seed]


SUMMARY_HEADER = ["schema", "model_id", "law_id", "estimator", "value", "ci_low", "ci_high", "R",
                  "horizon", "pop_cap", "seed"]

REPLICA_HEADER = ["schema", "estimator", "replica", "reason", "steps", "nu", "nu_lower_bound",
                  "hit_time", "censored_at", "returns", "pruned"]


def write_summary_csv(path, summaries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in summaries:
            w.writerow(s.csv_row())


def write_replica_csv(path, summary: SimulationSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICA_HEADER)
        for r in summary.replicas:
            w.writerow([SCHEMA_VERSION, summary.estimator, r.seed[-1], r.reason, r.steps,
                        "" if r.nu is None else r.nu, int(r.nu_lower_bound),
                        "" if r.hit_time is None else r.hit_time,
                        "" if r.censored_at is None else r.censored_at, r.returns, int(r.pruned)])


def mean_ci(x, level: float = 0.95):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    if len(x) < 2:
        return m, -math.inf, math.inf
    z = stats.norm.ppf(0.5 + level / 2)
    h = z * float(x.std(ddof=1)) / math.sqrt(len(x))
    return m, m - h, m + h


def proportion_ci(k: int, n: int, level: float = 0.95):
    """Normal-approximation CI, or Clopper-Pearson when n < 100."""
    p = k / n
    a = 1 - level
    if n < 100:
        lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
        hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
        return p, lo, hi
    z = stats.norm.ppf(1 - a / 2)
    h = z * math.sqrt(p * (1 - p) / n)
    return p, max(0.0, p - h), min(1.0, p + h)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_chunk(args):
    fn, kwargs, indices = args
    return [fn(r=r, **kwargs) for r in indices]


def map_replicas(fn, R: int, workers: int | None = None, **kwargs) -> list:
    """Run ``fn(r=..., **kwargs)`` for r in 0..R-1; the result order is by r."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or R < 2 * workers:
        return [fn(r=r, **kwargs) for r in range(R)]
    chunks = [list(range(i, R, workers)) for i in range(workers)]
    with ProcessPoolExecutor(workers) as ex:
        parts = list(ex.map(_run_chunk, [(fn, kwargs, c) for c in chunks]))
    out = [None] * R
    for c, part in zip(chunks, parts):
        for r, res in zip(c, part):
            out[r] = res
    return out


# ---------------------------------------------------------------- estimators


def _nu_replica(r, model, law, origin, start, horizon, pop_cap, seed):
    return run_bmc_star(model, law, origin, start, horizon, pop_cap,
                        replica_rng(seed, "nu", r), seed=(seed, "nu", r))


def estimate_nu(model: KernelModel, law: OffspringLaw, origin=None, start=None, R: int = 1000,
                horizon: int = 150, pop_cap: int = 10**6, seed: int = 0,
                workers: int | None = None) -> SimulationSummary:
    """Sample mean of the frozen count nu(origin) of BMC* with a normal 95% CI."""
    origin = model.origin if origin is None else origin
    start = origin if start is None else start
    reps = map_replicas(_nu_replica, R, workers, model=model, law=law, origin=origin, start=start,
                        horizon=horizon, pop_cap=pop_cap, seed=seed)
    vals = [r.nu for r in reps]
    m, lo, hi = mean_ci(vals)
    lb = sum(r.nu_lower_bound for r in reps)
    return SimulationSummary("nu", model.model_id, law.law_id, R, m, lo, hi, seed, horizon, pop_cap,
                             extra={"lower_bound_fraction": lb / R,
                                    "pop_cap_fraction": sum(r.reason == "pop_cap" for r in reps) / R},
                             replicas=reps)


def _alpha_replica(r, model, law, x, K, horizon, pop_cap, seed):
    rng = replica_rng(seed, "alpha", r)
    total, cohort, rounds = 0, 1, 0
    steps = 0
    while total < K:
        rounds += 1
        res = run_bmc_star(model, law, x, x, horizon, pop_cap, rng, count=cohort)
        steps += res.steps
        if res.nu == 0:
            break
        total += res.nu
        cohort = res.nu
    rr = ReplicaResult((seed, "alpha", r), "target-hit" if total >= K else "extinct-at-origin-event",
                       steps, nu=total, rounds=rounds)
    return rr


def estimate_alpha_proxy(model: KernelModel, law: OffspringLaw, x=None, K: int = 50,
                         horizon: int = 200, pop_cap: int = 10**6, R: int = 400, seed: int = 0,
                         workers: int | None = None) -> SimulationSummary:
    """Fraction of replicas whose iterated BMC* cohorts put at least K arrivals on x.

    Each cohort of frozen particles is re-released at x as a fresh BMC*
    (horizon and pop_cap apply per cohort); a cohort with no arrivals ends the
    replica.  This is an operational proxy for the probability that x is
    visited infinitely often, reported together with K and the horizon.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    x = model.origin if x is None else x
    reps = map_replicas(_alpha_replica, R, workers, model=model, law=law, x=x, K=K, horizon=horizon,
                        pop_cap=pop_cap, seed=seed)
    k = sum(r.reason == "target-hit" for r in reps)
    p, lo, hi = proportion_ci(k, R)
    return SimulationSummary("alpha_proxy", model.model_id, law.law_id, R, p, lo, hi, seed, horizon,
                             pop_cap, extra={"K": K, "successes": k}, replicas=reps)


def _return_replica(r, model, law, x, horizon, pop_cap, seed):
    return run_bmc(model, law, x, horizon, pop_cap, replica_rng(seed, "return_time", r), target=x,
                   stop_on_target=True, prune="thin", seed=(seed, "return_time", r))


def exp_tail_fit(tail):
    """Least-squares fit of log P(T > n) against n over the positive part of the tail.

    Returns ``(slope, intercept, r_squared, points)``.
    """
    pts = [(n, math.log(p)) for n, p in enumerate(tail) if p > 0 and n >= 1]
    if len(pts) < 3:
        return math.nan, math.nan, math.nan, len(pts)
    n, y = map(np.asarray, zip(*pts))
    fit = stats.linregress(n, y)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), len(pts)


def power_tail_fit(tail, R: int, min_count: int = 10):
    """Slope of log P(T > n) against log n at dyadic n with at least ``min_count`` exceedances.

    A slope >= -1 means the tail is too heavy for a finite mean.
    """
    pts = []
    n = 1
    while n < len(tail):
        if tail[n] * R >= min_count:
            pts.append((math.log(n), math.log(tail[n])))
        n *= 2
    if len(pts) < 3:
        return math.nan, len(pts)
    x, y = map(np.asarray, zip(*pts))
    return float(stats.linregress(x, y).slope), len(pts)


def estimate_return_time(model: KernelModel, law: OffspringLaw, x=None, R: int = 1000,
                         horizon: int = 1000, seed: int = 0, pop_cap: int = 10**6,
                         workers: int | None = None) -> SimulationSummary:
    """Empirical law of T_x, the first time n >= 1 that some particle sits at x.

    Runs are censored at the horizon.  Above ``pop_cap`` counts are thinned
    proportionally (every occupied state survives), which can only delay
    returns.
    """
    if R < 100:
        raise ValueError("R must be >= 100")
    x = model.origin if x is None else x
    reps = map_replicas(_return_replica, R, workers, model=model, law=law, x=x, horizon=horizon,
                        pop_cap=pop_cap, seed=seed)
    T = np.array([r.hit_time if r.hit_time is not None else horizon + 1 for r in reps])
    censored = float(np.mean([r.hit_time is None for r in reps]))
    hits = T[T <= horizon]
    last = int(min(horizon, T.max()))
    tail = [float(np.mean(T > n)) for n in range(last + 1)]
    slope, icpt, r2, npts = exp_tail_fit(tail)
    pslope, ppts = power_tail_fit(tail, R)
    if len(hits):
        m, lo, hi = mean_ci(hits)
    else:
        m = lo = hi = math.nan
    trunc_mean = float(np.minimum(T, horizon).mean())
    return SimulationSummary("return_time", model.model_id, law.law_id, R, m, lo, hi, seed, horizon,
                             pop_cap,
                             extra={"censored_fraction": censored, "tail": tail, "tail_slope": slope,
                                    "tail_r2": r2, "tail_points": npts,
                                    "power_slope": pslope, "power_points": ppts, "truncated_mean": trunc_mean,
                                    "pruned_fraction": float(np.mean([r.pruned for r in reps]))},
                             replicas=reps)


def _speed_replica(r, model, law, n, pop_cap, seed):
    return run_bmc(model, law, model.origin, n, pop_cap, replica_rng(seed, "speed", r),
                   record_min=True, prune="left", seed=(seed, "speed", r))


def estimate_min_speed(model: KernelModel, law: OffspringLaw, n: int = 100, R: int = 500,
                       seed: int = 0, pop_cap: int = 10**6, quantile: float = 0.05,
                       workers: int | None = None) -> SimulationSummary:
    """Samples of M_n / n (leftmost particle) with the lower quantile as liminf proxy.

    Above ``pop_cap`` the rightmost particles are dropped first, so the
    leftmost particle is never pruned; the flag ``pruned_fraction`` records
    how often pruning happened.
    """
    if not model.lattice:
        raise ValueError(f"minimal-displacement speed needs a one-dimensional lattice model, "
                         f"not {model.family}")
    if n < 50:
        raise ValueError("n must be >= 50")
    reps = map_replicas(_speed_replica, R, workers, model=model, law=law, n=n, pop_cap=pop_cap,
                        seed=seed)
    traces = np.array([r.min_trace for r in reps], dtype=float)
    ratio = traces[:, -1] / n
    q = float(np.quantile(ratio, quantile))
    lo, hi = (float(v) for v in np.quantile(ratio, [max(0.0, quantile - 0.02), min(1.0, quantile + 0.02)]))
    times = np.arange(1, n + 1)
    per_t = traces[:, 1:] / times[None, :]
    trace = {"t": times.tolist(),
             "q05": np.quantile(per_t, quantile, axis=0).tolist(),
             "median": np.quantile(per_t, 0.5, axis=0).tolist(),
             "mean": per_t.mean(axis=0).tolist()}
    return SimulationSummary("min_speed", model.model_id, law.law_id, R, q, lo, hi, seed, n, pop_cap,
                             extra={"quantile": quantile, "mean": float(ratio.mean()),
                                    "median": float(np.median(ratio)), "trace": trace,
                                    "pruned_fraction": float(np.mean([r.pruned for r in reps]))},
                             replicas=reps)
