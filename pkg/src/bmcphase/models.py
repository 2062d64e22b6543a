"""State spaces, transition kernels and offspring laws.

Every kernel family exposes the same small surface: ``neighbors(x)`` returns
the full support of ``p(x, .)`` as a list of ``(state, probability)`` pairs
sorted by the canonical state encoding.  States are plain hashable Python
values (ints, tuples) so that hashing and sorting are exact.

Encodings
---------
DriftZd            int for d == 1, tuple of d ints otherwise; origin 0 / (0,..,0)
RegularTree        tuple of child indices (root-to-vertex path); root ()
ConeTypeTree       tuple of child indices into the per-type child lists; root ()
Glued              (component index, local state); the shared root is (-1, ())
SeedChain          int; origin 0
CycleGraph         (cycle index i >= 1, position 1 <= k < 2**i); origin (0, 0)
TwoPointEnvironmentZ  int; origin 0
Finite             int labels 0..n-1
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Hashable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

State = Hashable

PROB_TOL = 1e-12
DEFAULT_NODE_CAP = 2_000_000
DEFAULT_OFFSPRING_CAP = 16


class MalformedState(ValueError):
    """Raised when a state encoding is not valid for the model family."""


class ResourceLimit(RuntimeError):
    def __init__(self, cap: int, what: str = "ball"):
        super().__init__(f"{what} exceeds node cap of {cap} states")
        self.cap = cap


class ModelError(ValueError):
    """Invalid model parameters."""


def _check_row(row, x):
    total = math.fsum(p for _, p in row)
    if abs(total - 1.0) > PROB_TOL:
        raise ModelError(f"transition probabilities at {x!r} sum to {total!r}")
    return row


class KernelModel:
    """Base class for the kernel families.

    Subclasses implement ``_row(x)`` (unsorted support of ``p(x, .)``) and
    ``validate(x)``.  ``lattice`` is True for the one-dimensional integer
    families, which additionally provide ``jump_law(x)``.
    """

    family: str = ""
    lattice = False
    period: int | None = None

    def __init__(self, model_id: str | None = None, meta: dict | None = None):
        self.model_id = model_id or self.family
        self.meta = dict(meta or {})

    @property
    def origin(self) -> State:
        raise NotImplementedError

    def validate(self, x: State) -> None:
        raise NotImplementedError

    def _row(self, x: State) -> list[tuple[State, float]]:
        raise NotImplementedError

    def neighbors(self, x: State) -> list[tuple[State, float]]:
        self.validate(x)
        row = [(y, p) for y, p in self._row(x) if p > 0.0]
        row.sort(key=lambda t: t[0])
        return row

    def max_jump(self) -> int:
        """Largest graph distance covered by one step."""
        return 1

    def local_centers(self, n: int) -> list[State]:
        """Representative centers covering every local type of radius-n balls."""
        return [self.origin]

    def params(self) -> dict:
        raise NotImplementedError

    def to_config(self) -> dict:
        return {"family": self.family, "id": self.model_id, "params": self.params()}

    def __repr__(self):
        return f"{type(self).__name__}({self.params()!r})"


def neighbors(model: KernelModel, x: State) -> list[tuple[State, float]]:
    return model.neighbors(x)


# ---------------------------------------------------------------- Z^d


class DriftZd(KernelModel):
    """Nearest-neighbour walk on Z^d with p(x, x +/- e_i) = p_i^{+/-}."""

    family = "DriftZd"

    def __init__(self, p_plus: Sequence[float], p_minus: Sequence[float], **kw):
        super().__init__(**kw)
        if len(p_plus) != len(p_minus) or not p_plus:
            raise ModelError("p_plus and p_minus must have equal nonzero length")
        if any(p < 0 for p in [*p_plus, *p_minus]):
            raise ModelError("negative step probability")
        if abs(math.fsum([*p_plus, *p_minus]) - 1.0) > PROB_TOL:
            raise ModelError("step probabilities must sum to 1")
        self.d = len(p_plus)
        self.p_plus = tuple(float(p) for p in p_plus)
        self.p_minus = tuple(float(p) for p in p_minus)
        self.lattice = self.d == 1
        # irreducible on Z^d only if both directions are present
        if any(a == 0 or b == 0 for a, b in zip(p_plus, p_minus)):
            raise ModelError("each coordinate needs p_i^+ > 0 and p_i^- > 0")
        self.period = 2

    @property
    def origin(self):
        return 0 if self.d == 1 else (0,) * self.d

    def validate(self, x):
        if self.d == 1:
            if not isinstance(x, (int, np.integer)) or isinstance(x, bool):
                raise MalformedState(f"DriftZd(d=1) state must be an int, got {x!r}")
        elif not (isinstance(x, tuple) and len(x) == self.d
                  and all(isinstance(c, (int, np.integer)) for c in x)):
            raise MalformedState(f"DriftZd state must be a {self.d}-tuple of ints, got {x!r}")

    def _row(self, x):
        if self.d == 1:
            return [(x + 1, self.p_plus[0]), (x - 1, self.p_minus[0])]
        row = []
        for i in range(self.d):
            up = list(x)
            up[i] += 1
            dn = list(x)
            dn[i] -= 1
            row.append((tuple(up), self.p_plus[i]))
            row.append((tuple(dn), self.p_minus[i]))
        return row

    def jump_law(self, x):
        return (-1, 1), (self.p_minus[0], self.p_plus[0])

    def jump_key(self, x):
        return 0

    def drift(self):
        return tuple(a - b for a, b in zip(self.p_plus, self.p_minus))

    def params(self):
        return {"p_plus": list(self.p_plus), "p_minus": list(self.p_minus)}


# ---------------------------------------------------------------- trees


class RegularTree(KernelModel):
    """Simple random walk on the M-regular tree.

    ``root_degree`` lets the root have fewer children, e.g. ``M - 1`` gives the
    rooted tree used as the big component of the hairy-tree example.
    """

    family = "RegularTree"

    def __init__(self, M: int, root_degree: int | None = None, **kw):
        super().__init__(**kw)
        if M < 2:
            raise ModelError("RegularTree needs M >= 2")
        self.M = int(M)
        self.root_degree = int(root_degree) if root_degree is not None else self.M
        if not 1 <= self.root_degree <= self.M:
            raise ModelError("root_degree must lie in 1..M")
        self.period = 2

    @property
    def origin(self):
        return ()

    def validate(self, x):
        if not isinstance(x, tuple):
            raise MalformedState(f"tree state must be a tuple path, got {x!r}")
        for depth, c in enumerate(x):
            bound = self.root_degree if depth == 0 else self.M - 1
            if not isinstance(c, (int, np.integer)) or not 0 <= c < bound:
                raise MalformedState(f"bad child index {c!r} at depth {depth} in {x!r}")

    def _row(self, x):
        if not x:
            return [((j,), 1.0 / self.root_degree) for j in range(self.root_degree)]
        p = 1.0 / self.M
        return [(x[:-1], p)] + [(x + (j,), p) for j in range(self.M - 1)]

    def local_centers(self, n):
        if self.root_degree == self.M:
            return [()]
        return [(0,) * k for k in range(n + 2)]

    def params(self):
        out = {"M": self.M}
        if self.root_degree != self.M:
            out["root_degree"] = self.root_degree
        return out


class ConeTypeTree(KernelModel):
    """Nearest-neighbour walk on the directed cover of a finite digraph.

    ``children[i]`` is the ordered list of ``(child_type, q)`` pairs for cone
    type ``i`` (repeated child types encode multi-edges); ``backward[i]`` is
    ``p(-i)``.  The root has type ``root_type``, which must be a node of the
    digraph, and moves to its children with probabilities ``q(root_type, .)``.
    """

    family = "ConeTypeTree"

    def __init__(self, children: dict, backward: dict, root_type, **kw):
        super().__init__(**kw)
        self.children = {t: tuple((c, float(q)) for c, q in lst) for t, lst in children.items()}
        self.backward = {t: float(p) for t, p in backward.items()}
        self.root_type = root_type
        if root_type not in self.children:
            raise ModelError(f"root type {root_type!r} is not a node of the cone digraph")
        for t, lst in self.children.items():
            if not lst:
                raise ModelError(f"cone type {t!r} has no children")
            if any(q <= 0 for _, q in lst):
                raise ModelError(f"cone type {t!r} has a nonpositive weight")
            if abs(math.fsum(q for _, q in lst) - 1.0) > PROB_TOL:
                raise ModelError(f"q({t!r}, .) does not sum to 1")
            for c, _ in lst:
                if c not in self.children:
                    raise ModelError(f"unknown child type {c!r} of {t!r}")
        child_types = {c for lst in self.children.values() for c, _ in lst}
        for t in child_types:
            p = self.backward.get(t)
            if p is None or not 0.0 < p < 1.0:
                raise ModelError(f"backward probability of {t!r} must lie in (0, 1)")
        self._type = lru_cache(maxsize=1 << 16)(self._type_uncached)

    def __getstate__(self):
        st = self.__dict__.copy()
        st.pop("_type", None)
        return st

    def __setstate__(self, st):
        self.__dict__.update(st)
        self._type = lru_cache(maxsize=1 << 16)(self._type_uncached)

    @property
    def origin(self):
        return ()

    def _type_uncached(self, x):
        if not x:
            return self.root_type
        parent = self._type(x[:-1])
        return self.children[parent][x[-1]][0]

    def cone_type(self, x):
        self.validate(x)
        return self._type(x)

    def validate(self, x):
        if not isinstance(x, tuple):
            raise MalformedState(f"tree state must be a tuple path, got {x!r}")
        t = self.root_type
        for c in x:
            lst = self.children[t]
            if not isinstance(c, (int, np.integer)) or not 0 <= c < len(lst):
                raise MalformedState(f"bad child index {c!r} in {x!r}")
            t = lst[c][0]

    def _row(self, x):
        t = self._type(x)
        kids = self.children[t]
        if not x:
            return [((j,), q) for j, (_, q) in enumerate(kids)]
        back = self.backward[t]
        return [(x[:-1], back)] + [(x + (j,), (1.0 - back) * q) for j, (_, q) in enumerate(kids)]

    def digraph_edges(self):
        return {(t, c) for t, lst in self.children.items() for c, _ in lst}

    def local_centers(self, n):
        # a radius-n ball is determined by the type n levels up (or the depth if
        # closer to the root) and the last n child indices
        seen = {}
        depth_limit = n + 1 + len(self.children)
        frontier = [()]
        for depth in range(depth_limit + 1):
            nxt = []
            for x in frontier:
                if depth <= n:
                    key = ("near", x)
                else:
                    key = ("far", self._type(x[: len(x) - n]), x[len(x) - n:])
                seen.setdefault(key, x)
                if depth < depth_limit:
                    nxt.extend(x + (j,) for j in range(len(self.children[self._type(x)])))
            frontier = nxt
            if len(frontier) > DEFAULT_NODE_CAP:
                raise ResourceLimit(DEFAULT_NODE_CAP, "local-center enumeration")
        return sorted(seen.values())

    def params(self):
        return {
            "children": {str(t): [[c, q] for c, q in lst] for t, lst in self.children.items()},
            "backward": {str(t): p for t, p in self.backward.items()},
            "root_type": self.root_type,
        }


# ---------------------------------------------------------------- finite chains


class Finite(KernelModel):
    """Explicit finite stochastic matrix on states 0..n-1 (used as a glue component)."""

    family = "Finite"

    def __init__(self, rows: Sequence[Sequence[tuple[int, float]]], origin: int = 0, **kw):
        super().__init__(**kw)
        self.rows = [tuple((int(y), float(p)) for y, p in r) for r in rows]
        self.n = len(self.rows)
        for x, r in enumerate(self.rows):
            for y, p in r:
                if not 0 <= y < self.n or p < 0:
                    raise ModelError(f"bad entry ({y}, {p}) in row {x}")
            _check_row(r, x)
        self._origin = int(origin)

    @property
    def origin(self):
        return self._origin

    def validate(self, x):
        if not isinstance(x, (int, np.integer)) or not 0 <= x < self.n:
            raise MalformedState(f"state {x!r} outside 0..{self.n - 1}")

    def _row(self, x):
        return list(self.rows[x])

    def local_centers(self, n):
        return list(range(self.n))

    def params(self):
        return {"rows": [[list(e) for e in r] for r in self.rows], "origin": self._origin}


def path_graph(n: int, **kw) -> Finite:
    """Simple random walk on the path 0 - 1 - ... - n-1."""
    rows = []
    for x in range(n):
        nb = [y for y in (x - 1, x + 1) if 0 <= y < n]
        rows.append([(y, 1.0 / len(nb)) for y in nb])
    return Finite(rows, **kw)


# ---------------------------------------------------------------- glued chains

GLUE_ROOT = (-1, ())


class Glued(KernelModel):
    """Chains glued at a common root with weights alpha_i.

    Off the root the component kernels act unchanged; the root row is the
    alpha-mixture of the component root rows.
    """

    family = "Glued"

    def __init__(self, components: Sequence[KernelModel], weights: Sequence[float],
                 roots: Sequence[State] | None = None, **kw):
        super().__init__(**kw)
        if len(components) != len(weights) or not components:
            raise ModelError("need one weight per component")
        if any(a <= 0 for a in weights) or abs(math.fsum(weights) - 1.0) > PROB_TOL:
            raise ModelError("glue weights must be positive and sum to 1")
        self.components = list(components)
        self.weights = tuple(float(a) for a in weights)
        self.roots = list(roots) if roots is not None else [c.origin for c in components]
        for c, r in zip(self.components, self.roots):
            c.validate(r)

    @property
    def origin(self):
        return GLUE_ROOT

    def validate(self, x):
        if x == GLUE_ROOT:
            return
        if not (isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], (int, np.integer))
                and 0 <= x[0] < len(self.components)):
            raise MalformedState(f"glued state must be (component, local), got {x!r}")
        i, local = x
        self.components[i].validate(local)
        if local == self.roots[i]:
            raise MalformedState(f"{x!r} aliases the shared root; use {GLUE_ROOT!r}")

    def _wrap(self, i, y):
        return GLUE_ROOT if y == self.roots[i] else (i, y)

    def _row(self, x):
        if x == GLUE_ROOT:
            acc = {}
            for i, (c, a) in enumerate(zip(self.components, self.weights)):
                for y, p in c.neighbors(self.roots[i]):
                    key = self._wrap(i, y)
                    acc[key] = acc.get(key, 0.0) + a * p
            return list(acc.items())
        i, local = x
        return [(self._wrap(i, y), p) for y, p in self.components[i].neighbors(local)]

    def max_jump(self):
        return max(c.max_jump() for c in self.components)

    def local_centers(self, n):
        out = {GLUE_ROOT}
        for i, c in enumerate(self.components):
            for y in c.local_centers(n):
                if y != self.roots[i]:
                    out.add((i, y))
        # every vertex within n+1 of the root sees the glue point
        frontier, seen = [GLUE_ROOT], {GLUE_ROOT}
        for _ in range(n + 1):
            nxt = []
            for x in frontier:
                for y, _ in self.neighbors(x):
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            frontier = nxt
        out |= seen
        return sorted(out)

    def params(self):
        return {
            "components": [c.to_config() for c in self.components],
            "weights": list(self.weights),
        }


def line_tree(M: int, **kw) -> Glued:
    """Rooted M-ary tree (root degree M-1) with a hair of length 2 at the root."""
    if M < 3:
        raise ModelError("line_tree needs M >= 3")
    tree = RegularTree(M, root_degree=M - 1, model_id=f"tree{M}")
    hair = path_graph(3, model_id="path3")
    meta = {"instance": "line_tree", "M": M}
    meta.update(kw.pop("meta", {}))
    kw.setdefault("model_id", f"line_tree_M{M}")
    return Glued([tree, hair], [(M - 1) / M, 1 / M], roots=[(), 0], meta=meta, **kw)


# ---------------------------------------------------------------- Z with a seed


class SeedChain(KernelModel):
    """Drifted walk on Z with a local trap at one site.

    Defaults reproduce the classical weak-recurrence example: at the seed
    site p(1,0) = p(1,2) = 1/8, p(1,1) = 3/4, elsewhere p(x, x+1) = (2+sqrt3)/4.
    """

    family = "SeedChain"
    lattice = True

    def __init__(self, p_right: float = (2 + math.sqrt(3)) / 4, seed_site: int = 1,
                 seed_stay: float = 0.75, **kw):
        super().__init__(**kw)
        if not 0 < p_right < 1 or not 0 <= seed_stay < 1:
            raise ModelError("SeedChain probabilities out of range")
        self.p_right = float(p_right)
        self.seed_site = int(seed_site)
        self.seed_stay = float(seed_stay)

    @property
    def origin(self):
        return 0

    def validate(self, x):
        if not isinstance(x, (int, np.integer)) or isinstance(x, bool):
            raise MalformedState(f"SeedChain state must be an int, got {x!r}")

    def jump_law(self, x):
        if x == self.seed_site:
            side = (1.0 - self.seed_stay) / 2
            return (-1, 0, 1), (side, self.seed_stay, side)
        return (-1, 1), (1.0 - self.p_right, self.p_right)

    def jump_key(self, x):
        return 1 if x == self.seed_site else 0

    def _row(self, x):
        offs, probs = self.jump_law(x)
        return [(x + s, p) for s, p in zip(offs, probs)]

    def local_centers(self, n):
        s = self.seed_site
        return list(range(s - n - 1, s + n + 2)) + [s - 2 * n - 3, s + 2 * n + 3]

    def params(self):
        return {"p_right": self.p_right, "seed_site": self.seed_site, "seed_stay": self.seed_stay}


# ---------------------------------------------------------------- cycles of length 2^i

CYCLE_ORIGIN = (0, 0)


class CycleGraph(KernelModel):
    """Directed cycles of length 2^i through a common origin.

    p(o, c_1^{(i)}) = 2^{-i}; along a cycle the walk moves deterministically.
    Only cycles i <= max_cycle are materialised; the tail mass 2^{-max_cycle}
    is lumped onto the last cycle (recorded in ``meta``).
    """

    family = "CycleGraph"

    def __init__(self, max_cycle: int = 60, **kw):
        super().__init__(**kw)
        if max_cycle < 1:
            raise ModelError("max_cycle must be >= 1")
        self.max_cycle = int(max_cycle)
        self.meta.setdefault("tail_lumped_onto_cycle", self.max_cycle)
        w = [0.5 ** i for i in range(1, self.max_cycle + 1)]
        w[-1] += 0.5 ** self.max_cycle
        self._origin_row = [((i, 1), p) for i, p in zip(range(1, self.max_cycle + 1), w)]

    @property
    def origin(self):
        return CYCLE_ORIGIN

    def validate(self, x):
        if x == CYCLE_ORIGIN:
            return
        if not (isinstance(x, tuple) and len(x) == 2):
            raise MalformedState(f"cycle state must be (i, k), got {x!r}")
        i, k = x
        if not (1 <= i <= self.max_cycle and 1 <= k < 2 ** i):
            raise MalformedState(f"cycle state {x!r} out of range")

    def _row(self, x):
        if x == CYCLE_ORIGIN:
            return list(self._origin_row)
        i, k = x
        return [(CYCLE_ORIGIN if k + 1 == 2 ** i else (i, k + 1), 1.0)]

    def distance_to_origin(self, x):
        """Steps until a walker at x re-enters the origin (0 at the origin)."""
        if x == CYCLE_ORIGIN:
            return 0
        i, k = x
        return 2 ** i - k

    def local_centers(self, n):
        return [CYCLE_ORIGIN]

    def params(self):
        return {"max_cycle": self.max_cycle}


# ---------------------------------------------------------------- random environment on Z


class TwoPointEnvironmentZ(KernelModel):
    """Nearest-neighbour walk on Z in a frozen i.i.d. environment.

    Site x uses right-step probability ``p_right[k]`` where k is drawn with
    probabilities ``weights``.  The draw for a site is a pure function of
    ``(env_seed, x)``, so the lazily filled cache is idempotent and the
    environment replays exactly.
    """

    family = "TwoPointEnvironmentZ"
    lattice = True

    def __init__(self, p_right: Sequence[float], weights: Sequence[float], env_seed: int = 0,
                 **kw):
        super().__init__(**kw)
        if len(p_right) != len(weights) or not p_right:
            raise ModelError("need one weight per environment law")
        if any(not 0 < p < 1 for p in p_right):
            raise ModelError("environment right-step probabilities must lie in (0, 1)")
        if any(w <= 0 for w in weights) or abs(math.fsum(weights) - 1.0) > PROB_TOL:
            raise ModelError("environment weights must be positive and sum to 1")
        self.p_right = tuple(float(p) for p in p_right)
        self.weights = tuple(float(w) for w in weights)
        self.env_seed = int(env_seed)
        self._cum = np.cumsum(self.weights)
        self._cache: dict[int, int] = {}

    @property
    def origin(self):
        return 0

    def validate(self, x):
        if not isinstance(x, (int, np.integer)) or isinstance(x, bool):
            raise MalformedState(f"environment state must be an int, got {x!r}")

    def site_index(self, x: int) -> int:
        k = self._cache.get(x)
        if k is None:
            zig = 2 * x if x >= 0 else -2 * x - 1
            u = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.env_seed, zig]))).random()
            k = int(np.searchsorted(self._cum, u * self._cum[-1], side="right"))
            k = min(k, len(self.weights) - 1)
            self._cache[x] = k  # same value whichever thread writes first
        return k

    def jump_law(self, x):
        p = self.p_right[self.site_index(x)]
        return (-1, 1), (1.0 - p, p)

    def jump_key(self, x):
        return self.site_index(x)

    def _row(self, x):
        offs, probs = self.jump_law(x)
        return [(x + s, p) for s, p in zip(offs, probs)]

    def local_centers(self, n, window: int = 50):
        return list(range(-window, window + 1))

    def params(self):
        return {"p_right": list(self.p_right), "weights": list(self.weights), "env_seed": self.env_seed}


# ---------------------------------------------------------------- offspring laws


def _masses(spec, cap):
    """Normalise a mass specification to a tuple (mu_1, ..., mu_K)."""
    if isinstance(spec, dict):
        ks = {int(k): float(v) for k, v in spec.items()}
        if ks.get(0, 0.0) != 0.0:
            raise ModelError("mu_0 must be 0: every particle has at least one offspring")
        ks.pop(0, None)
        if any(k < 1 for k in ks):
            raise ModelError("offspring counts must be >= 1")
        K = max(ks) if ks else 0
        out = tuple(ks.get(k, 0.0) for k in range(1, K + 1))
    else:
        out = tuple(float(v) for v in spec)
    while out and out[-1] == 0.0:
        out = out[:-1]
    if not out:
        raise ModelError("empty offspring law")
    if len(out) > cap:
        raise ModelError(f"offspring support {len(out)} exceeds cap K={cap}")
    if any(v < 0 for v in out):
        raise ModelError("negative offspring mass")
    total = math.fsum(out)
    if abs(total - 1.0) > PROB_TOL:
        raise ModelError(f"offspring masses sum to {total!r}, not 1")
    return out


@dataclass(frozen=True)
class OffspringLaw:
    """Per-state offspring distribution with a constant default.

    ``masses[k-1]`` is the probability of k offspring.  ``overrides`` maps
    individual states to their own masses; ``labeler`` together with
    ``by_label`` assigns laws by a state label such as a cone type.
    """

    masses: tuple
    overrides: dict = field(default_factory=dict)
    by_label: dict = field(default_factory=dict)
    labeler: Callable[[Any], Any] | None = None
    cap: int = DEFAULT_OFFSPRING_CAP
    law_id: str = "law"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "masses", _masses(self.masses, self.cap))
        object.__setattr__(self, "overrides",
                           {x: _masses(m, self.cap) for x, m in self.overrides.items()})
        object.__setattr__(self, "by_label",
                           {k: _masses(m, self.cap) for k, m in self.by_label.items()})
        if self.by_label and self.labeler is None:
            raise ModelError("by_label needs a labeler")

    def masses_at(self, x) -> tuple:
        m = self.overrides.get(x)
        if m is not None:
            return m
        if self.labeler is not None:
            m = self.by_label.get(self.labeler(x))
            if m is not None:
                return m
        return self.masses

    def mean(self, x=None) -> float:
        ms = self.masses if x is None else self.masses_at(x)
        return math.fsum(k * p for k, p in enumerate(ms, start=1))

    def pgf(self, x, z: float) -> float:
        return math.fsum(p * z ** k for k, p in enumerate(self.masses_at(x), start=1))

    def all_masses(self):
        return [self.masses, *self.overrides.values(), *self.by_label.values()]

    def constant_mean(self) -> float | None:
        """The common mean if every state has the same mean, else None."""
        means = {round(math.fsum(k * p for k, p in enumerate(ms, 1)), 12) for ms in self.all_masses()}
        if len(means) == 1:
            return self.mean()
        return None

    def is_constant(self) -> bool:
        return all(ms == self.masses for ms in self.all_masses())

    def sample(self, x, rng: np.random.Generator) -> int:
        ms = self.masses_at(x)
        if len(ms) == 1:
            return 1
        return int(rng.choice(len(ms), p=np.asarray(ms) / math.fsum(ms))) + 1

    def to_config(self) -> dict:
        out = {"id": self.law_id, "masses": list(self.masses)}
        if self.overrides:
            out["overrides"] = [{"state": _jsonable(x), "masses": list(m)} for x, m in self.overrides.items()]
        return out


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def offspring_sample(law: OffspringLaw, x, rng: np.random.Generator) -> int:
    return law.sample(x, rng)


def law_with_mean(m: float, **kw) -> OffspringLaw:
    """Two-point law on {floor(m), floor(m)+1} with mean m (deterministic if m is an integer)."""
    if m < 1:
        raise ModelError("mean offspring must be >= 1")
    k = math.floor(m)
    frac = m - k
    masses = [0.0] * (k + 1)
    masses[k - 1] = 1.0 - frac
    masses[k] = frac
    kw.setdefault("law_id", f"mean{m:g}")
    return OffspringLaw(tuple(masses), **kw)


def truncated_geometric_law(r: float, K: int = 8, **kw) -> OffspringLaw:
    """P(k) proportional to r^(k-1) on 1..K, renormalised (truncation kept in meta)."""
    w = np.array([r ** (k - 1) for k in range(1, K + 1)])
    w = w / w.sum()
    meta = {"truncated_at": K, "base": "geometric", "ratio": r}
    return OffspringLaw(tuple(w.tolist()), meta=meta, cap=max(K, DEFAULT_OFFSPRING_CAP), **kw)


POS_REC_ORIGIN_MASSES = (0.5, 0.0, 0.5)


def pos_rec_law() -> OffspringLaw:
    """mu_1(o) = mu_3(o) = 1/2 at the cycle origin, binary branching elsewhere."""
    return OffspringLaw((0.0, 1.0), overrides={CYCLE_ORIGIN: POS_REC_ORIGIN_MASSES}, law_id="pos_rec")


# ---------------------------------------------------------------- finite truncations


@dataclass
class FiniteRegion:
    """Substochastic restriction P_Y of a kernel to a finite state set Y."""

    states: list
    index: dict
    Q: sparse.csr_matrix
    center: Any = None
    radius: int | None = None
    model_id: str = ""

    @property
    def size(self) -> int:
        return len(self.states)

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def components(self):
        n, labels = csgraph.connected_components(self.Q, directed=True, connection="strong")
        return n, labels

    def is_irreducible(self) -> bool:
        if self.size == 1:
            return self.Q[0, 0] > 0
        return self.components()[0] == 1


def region_from_states(model: KernelModel, states: Sequence, center=None, radius=None) -> FiniteRegion:
    states = list(states)
    index = {x: i for i, x in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, x in enumerate(states):
        for y, p in model.neighbors(x):
            j = index.get(y)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(p)
    n = len(states)
    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return FiniteRegion(states, index, Q, center, radius, model.model_id)


def ball_states(model: KernelModel, center, radius: int, node_cap: int = DEFAULT_NODE_CAP,
                keep: Callable[[Any], bool] | None = None) -> list:
    """States within ``radius`` forward steps of ``center`` (BFS order)."""
    model.validate(center)
    seen = {center}
    order = [center]
    frontier = deque([center])
    for _ in range(radius):
        nxt = deque()
        while frontier:
            x = frontier.popleft()
            for y, _ in model.neighbors(x):
                if y in seen or (keep is not None and not keep(y)):
                    continue
                seen.add(y)
                order.append(y)
                nxt.append(y)
                if len(order) > node_cap:
                    raise ResourceLimit(node_cap)
        frontier = nxt
    return order


def build_ball(model: KernelModel, center=None, radius: int = 1, node_cap: int = DEFAULT_NODE_CAP,
               keep: Callable[[Any], bool] | None = None) -> FiniteRegion:
    """Restriction of the kernel to the radius-``radius`` ball around ``center``.

    ``keep`` optionally restricts the ball to states satisfying a predicate
    (used for sub-cones of a cone-type tree).
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if center is None:
        center = model.origin
    states = ball_states(model, center, radius, node_cap, keep)
    return region_from_states(model, states, center, radius)
