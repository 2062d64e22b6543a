"""Green and first-return generating functions, Galton-Watson extinction,
and the Foster-type positive-recurrence certificate check."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .models import FiniteRegion, KernelModel, OffspringLaw, build_ball
from .spectral import CertificateFunction, CertificateReport, InvalidCertificate, SpectralEstimate, _mean_fn


class DegenerateSeries(ValueError):
    pass


@dataclass
class SeriesTable:
    """Coefficients a_0..a_N of G(x,x|z) (kind='green') or U(x,x|z) (kind='first_return')."""

    center: Any
    kind: str
    coefficients: np.ndarray
    radius: int
    exact: bool
    model_id: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z: float) -> float:
        if z not in self._cache:
            self._cache[z] = float(np.polynomial.polynomial.polyval(z, self.coefficients))
        return self._cache[z]

    def csv_rows(self):
        for n, a in enumerate(self.coefficients):
            yield [self.model_id, repr(self.center), self.kind, n, repr(float(a))]


SERIES_HEADER = ["model_id", "center", "kind", "n", "coefficient"]


def write_series_csv(path, tables) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for t in tables:
            w.writerows(t.csv_rows())


def _default_radius(model, N):
    # a closed path of length n stays within n // 2 hops of its start
    return max(1, (N // 2) * model.max_jump())


def _region(model, x, N, radius, node_cap):
    if radius is None:
        radius = _default_radius(model, N)
    kw = {} if node_cap is None else {"node_cap": node_cap}
    region = build_ball(model, x, radius, **kw)
    return region, radius, radius >= (N // 2) * model.max_jump()


def green_coefficients(model: KernelModel, x=None, N: int = 100, radius: int | None = None,
                       node_cap: int | None = None) -> SeriesTable:
    """a_n = p^(n)(x, x) for n = 0..N by forward propagation over a ball."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if x is None:
        x = model.origin
    region, radius, exact = _region(model, x, N, radius, node_cap)
    QT = region.Q.T.tocsr()
    i = region.index[x]
    v = np.zeros(region.size)
    v[i] = 1.0
    a = np.empty(N + 1)
    a[0] = 1.0
    for n in range(1, N + 1):
        v = QT @ v
        a[n] = v[i]
    return SeriesTable(x, "green", a, radius, exact, model.model_id)


def first_return_coefficients(model: KernelModel, x=None, N: int = 100, radius: int | None = None,
                              node_cap: int | None = None) -> SeriesTable:
    """a_n = P_x(T_x = n) by taboo propagation: mass arriving at x is recorded and removed."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if x is None:
        x = model.origin
    region, radius, exact = _region(model, x, N, radius, node_cap)
    QT = region.Q.T.tocsr()
    i = region.index[x]
    v = np.zeros(region.size)
    v[i] = 1.0
    a = np.zeros(N + 1)
    for n in range(1, N + 1):
        v = QT @ v
        a[n] = v[i]
        v[i] = 0.0
    return SeriesTable(x, "first_return", a, radius, exact, model.model_id)


def renewal_residual(green: SeriesTable, first: SeriesTable) -> float:
    """max_n |g_n - sum_{k=1..n} u_k g_{n-k}| for n >= 1."""
    g, u = green.coefficients, first.coefficients
    N = min(len(g), len(u)) - 1
    worst = 0.0
    for n in range(1, N + 1):
        conv = math.fsum(u[k] * g[n - k] for k in range(1, n + 1))
        worst = max(worst, abs(g[n] - conv))
    return worst


def rho_from_U(table: SeriesTable, ztol: float = 1e-6) -> SpectralEstimate:
    """Largest z with U(x,x|z) <= 1 from a truncated first-return table.

    The root z* of U(z) = 1 is the radius of convergence of the Green
    function, i.e. 1/rho.  Truncation drops mass, so z* is biased upward
    (rho biased downward).  The returned estimate carries ``value = 1/z*``
    and ``extra['z_star']``.
    """
    if table.kind != "first_return":
        raise ValueError("rho_from_U needs a first-return table")
    if table.order < 10:
        raise ValueError("truncation order must be >= 10")
    a = table.coefficients
    if not np.any(a[1:] > 0):
        raise DegenerateSeries("all first-return coefficients vanish")

    def U(z):
        return float(np.polynomial.polynomial.polyval(z, a))

    if U(1.0) >= 1.0:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = 1.0, 2.0
        while U(hi) < 1.0:
            lo, hi = hi, 2 * hi
    while hi - lo > ztol:
        mid = 0.5 * (lo + hi)
        if U(mid) <= 1.0:
            lo = mid
        else:
            hi = mid
    z = lo
    return SpectralEstimate(1.0 / z, "rho", "first_return", table.radius, lower_bound=True,
                            residual=ztol,
                            extra={"z_star": z, "bias": "z_star overestimates 1/rho (truncated mass)",
                                   "order": table.order})


# ---------------------------------------------------------------- Galton-Watson


@dataclass(frozen=True)
class GWLaw:
    """Offspring law p_0, p_1, ... of a Galton-Watson process (p_0 may be positive)."""

    masses: tuple

    def __post_init__(self):
        ms = tuple(float(v) for v in self.masses)
        if not ms or any(v < 0 for v in ms) or abs(math.fsum(ms) - 1.0) > 1e-12:
            raise ValueError("GW masses must be nonnegative and sum to 1")
        object.__setattr__(self, "masses", ms)

    @property
    def mean(self) -> float:
        return math.fsum(k * p for k, p in enumerate(self.masses))

    def pgf(self, s: float) -> float:
        return math.fsum(p * s ** k for k, p in enumerate(self.masses))

    def pgf_prime(self, s: float) -> float:
        return math.fsum(k * p * s ** (k - 1) for k, p in enumerate(self.masses) if k)

    @classmethod
    def from_offspring(cls, law: OffspringLaw, x=None):
        ms = law.masses if x is None else law.masses_at(x)
        return cls((0.0, *ms))

    def percolated(self, keep: float) -> GWLaw:
        """Each child is kept independently with probability ``keep``."""
        K = len(self.masses) - 1
        out = np.zeros(K + 1)
        for k, p in enumerate(self.masses):
            for j in range(k + 1):
                out[j] += p * math.comb(k, j) * keep ** j * (1 - keep) ** (k - j)
        return GWLaw(tuple(out / out.sum()))


def gw_extinction(law: GWLaw, tol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """Smallest nonnegative fixed point of the offspring pgf.

    Monotone iteration s <- f(s) from 0.  In the (sub)critical case with
    p_1 < 1 the answer is 1 and is returned directly, since the iteration only
    converges like 1/k there.  In the supercritical case the iterate is
    polished with Newton steps (f'(q) < 1 keeps them stable).
    """
    p = law.masses
    if p[0] == 0.0:
        return 0.0
    if law.mean <= 1.0:
        return 1.0
    s = 0.0
    for _ in range(max_iter):
        t = law.pgf(s)
        if abs(t - s) <= tol:
            s = t
            break
        s = t
    for _ in range(5):
        d = law.pgf_prime(s) - 1.0
        if d == 0.0:
            break
        step = (law.pgf(s) - s) / d
        if not 0.0 <= s - step < 1.0:
            break
        s -= step
    return s


def gw_survival(law: GWLaw) -> float:
    return 1.0 - gw_extinction(law)


# ---------------------------------------------------------------- Foster-type check


def check_foster(model: KernelModel, law, origin, f: CertificateFunction, eps: float,
                 region: FiniteRegion, tol: float = 1e-12,
                 covers_all_states: bool = False) -> CertificateReport:
    """Check P f(x) <= (f(x) - eps)/m(x) for region states x != origin.

    A passing report is evidence that E_x T_origin < infinity for the checked
    states; it is a proof for all x only when the extension rule of ``f``
    covers the whole state space (pass ``covers_all_states=True``).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if f(origin) <= 0:
        raise InvalidCertificate("certificate must be positive at the origin")
    mean = _mean_fn(law)
    slacks = {}
    ok = True
    for x in region.states:
        if x == origin:
            continue
        fx = f(x)
        if fx < 0:
            raise InvalidCertificate(f"certificate is negative at {x!r}")
        pf = math.fsum(p * f(y) for y, p in model.neighbors(x))
        s = (fx - eps) / mean(x) - pf
        slacks[x] = s
        if s < -tol * max(1.0, fx):
            ok = False
    if not slacks:
        raise ValueError("region has no state besides the origin")
    arg = min(slacks, key=slacks.get)
    note = ("global: extension rule covers every state" if covers_all_states
            else "evidence on the checked region only")
    return CertificateReport(ok, slacks, slacks[arg], arg, covers_all_states, note)
