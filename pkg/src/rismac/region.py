"""Rate pentagons, the convex-hull capacity region and the input-distribution search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mcrates import McSettings, RateBounds, RateEvaluator
from .model import (
    ChannelRealization,
    ConfigurationError,
    InputDistributions,
    SystemConfig,
    strongest_pattern,
)

log = logging.getLogger(__name__)

CROSS_TOL = 1e-12


@dataclass(frozen=True)
class RatePentagon:
    b1: float
    b2: float
    b12: float
    provenance: str = ""

    def __post_init__(self):
        b1, b2, b12 = (max(0.0, float(v)) for v in (self.b1, self.b2, self.b12))
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)
        # the sum constraint can only be active up to b1 + b2
        object.__setattr__(self, "b12", min(b12, b1 + b2))

    @classmethod
    def from_bounds(cls, rb: RateBounds, provenance: str = "") -> "RatePentagon":
        return cls(rb.B1, rb.B2, rb.B12, provenance)


def pentagon_vertices(p: RatePentagon) -> list:
    """Extreme points (R2, R1) of the pentagon other than the origin, from the R1 axis to the R2 axis."""
    b1 = min(p.b1, p.b12)
    b2 = min(p.b2, p.b12)
    pts = [
        (0.0, b1),
        (min(b2, max(0.0, p.b12 - b1)), b1),
        (b2, min(b1, max(0.0, p.b12 - b2))),
        (b2, 0.0),
    ]
    out = []
    for q in pts:
        if not out or abs(q[0] - out[-1][0]) > 1e-15 or abs(q[1] - out[-1][1]) > 1e-15:
            out.append(q)
    return out


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list:
    """Andrew's monotone chain; counterclockwise, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= CROSS_TOL:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= CROSS_TOL:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass(frozen=True)
class RegionPolygon:
    """Downward-closed convex rate region described by its outer frontier.

    ``vertices`` holds (R2, R1) points from (0, max R1) to (max R2, 0); with
    R1 on the horizontal axis this is counterclockwise about the origin.
    """

    vertices: tuple

    @property
    def max_r1(self) -> float:
        return self.vertices[0][1]

    @property
    def max_r2(self) -> float:
        return self.vertices[-1][0]

    @property
    def r1_at_max_r2(self) -> float:
        top = [v[1] for v in self.vertices if v[0] >= self.max_r2 - 1e-15]
        return max(top)

    def polygon(self) -> list:
        """Closed counterclockwise boundary in (R2, R1) coordinates, starting at the origin."""
        pts = [(0.0, 0.0)] + list(reversed(self.vertices))
        out = []
        for p in pts:
            if not out or p != out[-1]:
                out.append(p)
        return out

    def area(self) -> float:
        poly = self.polygon()
        s = 0.0
        for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
            s += x0 * y1 - x1 * y0
        return abs(s) / 2.0

    def contains(self, point, tol: float = 1e-9) -> bool:
        x, y = point
        if x < -tol or y < -tol:
            return False
        poly = self.polygon()
        if len(poly) < 3:
            # degenerate region: a segment on an axis or just the origin
            return x <= self.max_r2 + tol and y <= self.max_r1 + tol and (x <= tol or y <= tol)
        for a, b in zip(poly, poly[1:] + poly[:1]):
            edge = math.hypot(b[0] - a[0], b[1] - a[1])
            if _cross(a, b, (x, y)) < -tol * max(edge, 1.0):
                return False
        return True


def _downward_hull(points) -> RegionPolygon:
    pts = [(max(0.0, x), max(0.0, y)) for x, y in points]
    r2max = max(p[0] for p in pts)
    r1max = max(p[1] for p in pts)
    pts += [(0.0, 0.0), (r2max, 0.0), (0.0, r1max)]
    hull = convex_hull(pts)
    if len(hull) < 3:
        # a segment on one axis (or just the origin): one undominated vertex
        return RegionPolygon(((r2max, r1max),))
    # counterclockwise from the origin: bottom edge, then the frontier up to (0, r1max)
    start = hull.index((0.0, 0.0))
    hull = hull[start:] + hull[:start]
    frontier = [p for p in hull[1:]]
    frontier.reverse()
    if frontier[0][0] != 0.0:
        frontier.insert(0, (0.0, r1max))
    if frontier[-1][1] != 0.0:
        frontier.append((r2max, 0.0))
    return RegionPolygon(tuple(frontier))


def region_union_hull(pentagons: Sequence[RatePentagon]) -> RegionPolygon:
    """Convex hull of the union of the pentagons, as its nonnegative frontier."""
    if not pentagons:
        raise ConfigurationError("need at least one pentagon")
    pts = []
    for p in pentagons:
        pts.extend(pentagon_vertices(p))
    return _downward_hull(pts)


def time_sharing_region(max_r1_point, max_r2_point) -> RegionPolygon:
    """Region reached by time-sharing between two operating points (and their projections)."""
    (x1, y1), (x2, y2) = max_r1_point, max_r2_point
    return _downward_hull([(x1, y1), (x2, y2), (x1, 0.0), (0.0, y1), (x2, 0.0), (0.0, y2)])


def area_uncertainty(region: RegionPolygon, delta: float) -> float:
    """Area change if every frontier coordinate moves by up to ``delta``.

    Shifting the frontier outward by delta in both axes adds at most
    delta*(max R1 + max R2) + delta^2; used as the Monte Carlo band on areas.
    """
    return delta * (region.max_r1 + region.max_r2) + delta * delta


# -- input distribution search -------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def project_power_simplex(v: np.ndarray, energies: np.ndarray, budget: float) -> Optional[np.ndarray]:
    """Projection onto {p in simplex, p . energies <= budget}; None when the set is empty."""
    p = project_simplex(v)
    if p @ energies <= budget + 1e-12:
        return p
    if energies.min() > budget + 1e-12:
        return None
    # the multiplier on the energy constraint is found by bisection
    lo, hi = 0.0, 1.0
    while project_simplex(v - hi * energies) @ energies > budget:
        hi *= 2.0
        if hi > 1e12:
            return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if project_simplex(v - mid * energies) @ energies > budget:
            lo = mid
        else:
            hi = mid
    return project_simplex(v - hi * energies)


def weighted_rate(rb: RateBounds, w: float) -> tuple:
    """max over the pentagon of w*R1 + (1-w)*R2, with its coefficients on (B1, B2, B12)."""
    # ties resolve the way the structure does for independent inputs
    # (B1 <= B12 and B2 >= B12 - B1): the first rate keeps its own bound and
    # the second takes the remainder of the sum, which is what binds off a
    # point mass
    b = [max(0.0, rb.B1), max(0.0, rb.B2), max(0.0, rb.B12)]
    eye = np.eye(3)
    first, second = (0, 1) if w >= 0.5 else (1, 0)
    if b[first] <= b[2] + 1e-12:
        v1, c1 = b[first], eye[first]
    else:
        v1, c1 = b[2], eye[2]
    rest = b[2] - v1
    if b[second] < rest - 1e-12:
        v2, c2 = b[second], eye[second]
    else:
        v2, c2 = max(rest, 0.0), eye[2] - c1
    wf, ws = (w, 1.0 - w) if first == 0 else (1.0 - w, w)
    return wf * v1 + ws * v2, wf * c1 + ws * c2


DEFAULT_WEIGHTS = tuple(i / 16 for i in range(17))


@dataclass(frozen=True)
class SearchStrategy:
    name: str = "corner_set"
    n_draws: int = 0
    weights: tuple = DEFAULT_WEIGHTS
    iters: int = 200
    search_samples: int = 4000

    NAMES = ("uniform_only", "corner_set", "random_simplex", "weighted_sum_ascent")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ConfigurationError(f"unknown strategy {self.name!r}; choose from {self.NAMES}")
        if self.n_draws < 0 or self.iters < 0 or self.search_samples < 100:
            raise ConfigurationError("strategy counts must be nonnegative (search_samples >= 100)")
        if any(not 0.0 <= w <= 1.0 for w in self.weights):
            raise ConfigurationError("weights must lie in [0, 1]")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @classmethod
    def parse(cls, spec) -> "SearchStrategy":
        """Accepts ``"corner_set"``, ``"random_simplex:20"`` or a mapping of fields."""
        if isinstance(spec, SearchStrategy):
            return spec
        if isinstance(spec, str):
            name, _, arg = spec.partition(":")
            if name == "random_simplex":
                return cls(name, n_draws=int(arg or 0))
            if name == "weighted_sum_ascent" and arg:
                return cls(name, iters=int(arg))
            if arg:
                raise ConfigurationError(f"strategy {name!r} takes no argument")
            return cls(name)
        if isinstance(spec, dict):
            allowed = {"name", "n_draws", "weights", "iters", "search_samples"}
            unknown = set(spec) - allowed
            if unknown:
                raise ConfigurationError(f"unknown strategy keys: {sorted(unknown)}")
            kw = dict(spec)
            if isinstance(kw.get("weights"), int):
                n = kw["weights"]
                kw["weights"] = tuple(i / (n - 1) for i in range(n)) if n > 1 else (1.0,)
            elif "weights" in kw:
                kw["weights"] = tuple(kw["weights"])
            return cls(**kw)
        raise ConfigurationError(f"cannot parse strategy {spec!r}")

    def to_dict(self) -> dict:
        d = {"name": self.name}
        if self.name == "random_simplex":
            d["n_draws"] = self.n_draws
        if self.name == "weighted_sum_ascent":
            d.update(weights=list(self.weights), iters=self.iters, search_samples=self.search_samples)
        return d


@dataclass
class Candidate:
    dists: InputDistributions
    bounds: RateBounds
    pentagon: RatePentagon
    label: str


@dataclass
class SearchResult:
    candidates: list
    skipped: int = 0
    ascent_log: list = field(default_factory=list)

    @property
    def pentagons(self) -> list:
        return [c.pentagon for c in self.candidates]


def corner_distributions(cfg: SystemConfig, ch: ChannelRealization) -> list:
    """(uniform, uniform) and (uniform symbols, point mass on the strongest pattern)."""
    beam, _ = strongest_pattern(cfg, ch)
    return [
        ("uniform", InputDistributions.uniform(cfg)),
        (f"beamforming[{beam}]", InputDistributions.with_point_pattern(cfg, beam)),
    ]


def _same(a: InputDistributions, b: InputDistributions) -> bool:
    return np.allclose(a.p_s, b.p_s, atol=1e-12) and np.allclose(a.p_theta, b.p_theta, atol=1e-12)


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.where(p < 1e-14, 0.0, p)
    return p / p.sum()


def _ascend(ev: RateEvaluator, start: InputDistributions, w: float, iters: int, energies, budget, tol=1e-6):
    """Block-coordinate projected-gradient ascent of the weighted pentagon rate.

    Blocks alternate between p_theta and p_s.  Each block step backtracks
    until the objective improves; a step that projects back onto the current
    point (typical at a vertex of the simplex) is enlarged instead.  Stops
    after ``iters`` block steps or once a full sweep gains less than ``tol``.
    """
    ps, pt = start.p_s.copy(), start.p_theta.copy()
    rb, grads = ev.bounds_and_gradients(InputDistributions(ps, pt))
    value, coeffs = weighted_rate(rb, w)
    steps = [1.0, 1.0]  # p_s, p_theta
    history = [value]
    it = 0
    for it in range(iters):
        block = 1 - it % 2  # phase patterns first
        g = sum(c * gr[block] for c, gr in zip(coeffs, grads))
        cur = (ps, pt)[block]
        improved = False
        for _ in range(40):
            cand = cur + steps[block] * g
            cand = project_power_simplex(cand, energies, budget) if block == 0 else project_simplex(cand)
            if cand is None:
                steps[block] *= 0.5
                continue
            cand = _clean(cand)
            if np.allclose(cand, cur, atol=1e-13, rtol=0):
                if steps[block] > 1e8:
                    break
                steps[block] *= 4.0
                continue
            trial = InputDistributions(cand, pt) if block == 0 else InputDistributions(ps, cand)
            tval, _ = weighted_rate(ev.bounds(trial), w)
            if tval > value:
                if block == 0:
                    ps = cand
                else:
                    pt = cand
                steps[block] *= 2.0
                improved = True
                break
            steps[block] *= 0.5
            if steps[block] < 1e-10:
                break
        if improved:
            rb, grads = ev.bounds_and_gradients(InputDistributions(ps, pt))
            value, coeffs = weighted_rate(rb, w)
        else:
            steps[block] = 1.0
        history.append(value)
        if len(history) > 2 and history[-1] - history[-3] < tol:
            break
    return InputDistributions(ps, pt), value, it + 1


def search_distributions(
    cfg: SystemConfig,
    ch: ChannelRealization,
    mc: McSettings,
    strategy="corner_set",
    *,
    workers: int = 1,
    evaluator: Optional[RateEvaluator] = None,
    extra: Sequence = (),
) -> SearchResult:
    """Evaluate candidate input distributions and return their rate pentagons.

    Every candidate is evaluated on the same full-budget noise stream.  The
    ascent itself runs on a smaller pilot stream with the same seed.
    ``extra`` holds (label, InputDistributions) pairs evaluated alongside the
    built-in candidates.
    """
    strategy = SearchStrategy.parse(strategy)
    ev = evaluator or RateEvaluator(cfg, ch, mc, workers)
    energies = np.sum(np.abs(cfg.symbol_blocks()) ** 2, axis=1)
    result = SearchResult([])

    def add(label, dists):
        for c in result.candidates:
            if _same(c.dists, dists):
                return c
        rb = ev.bounds(dists)
        c = Candidate(dists, rb, RatePentagon.from_bounds(rb, label), label)
        result.candidates.append(c)
        return c

    if strategy.name == "uniform_only":
        add("uniform", InputDistributions.uniform(cfg))
        for label, d in extra:
            add(label, d)
        return result
    corners = corner_distributions(cfg, ch)
    for label, d in corners:
        add(label, d)
    for label, d in extra:
        add(label, d)

    if strategy.name == "random_simplex" and strategy.n_draws:
        rng = np.random.default_rng(np.random.SeedSequence([mc.seed, 0x73696D706C6578]))
        for k in range(strategy.n_draws):
            pt = rng.dirichlet(np.ones(cfg.n_patterns))
            ps = project_power_simplex(rng.dirichlet(np.ones(cfg.n_blocks)), energies, cfg.m)
            if ps is None:
                result.skipped += 1
                continue
            add(f"random[{k}]", InputDistributions(_clean(ps), pt))
        if result.skipped:
            log.warning("skipped %d infeasible random candidates", result.skipped)

    if strategy.name == "weighted_sum_ascent":
        pilot_mc = McSettings(mc.seed, min(strategy.search_samples, mc.noise_samples), mc.ci_level)
        pilot = RateEvaluator(cfg, ch, pilot_mc, workers)
        starts = [d for _, d in corners]
        previous = None
        for w in sorted(strategy.weights, reverse=True):
            pool = starts + ([previous] if previous is not None else [])
            scored = [(weighted_rate(pilot.bounds(d), w)[0], i) for i, d in enumerate(pool)]
            start = pool[max(scored)[1]]
            if strategy.iters:
                best, value, used = _ascend(pilot, start, w, strategy.iters, energies, cfg.m)
            else:
                best, value, used = start, max(scored)[0], 0
            result.ascent_log.append({"weight": w, "pilot_value": value, "iterations": used})
            previous = best
            add(f"ascent[w={w:.4f}]", best)
    return result
