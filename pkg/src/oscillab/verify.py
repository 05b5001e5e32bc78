"""Grid-based numerical verification: discrete subharmonicity, certified
suprema, Hausdorff-content sandwich estimates, per-cube oscillation
classification, the rogue census, and growth profiles.

Conventions.  Content covers are scored by (cell edge)^(d-1), which makes
the unit segment's limit exactly one; the oscillation threshold eps_d
defaults to 1/4 in this normalization.  Classification is conservative: a
cube counts as oscillating only when both properties are certified, so
raising the resolution can only move cubes from rogue to oscillating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import LatticeCube, enumerate_basic_cubes
from .treeset import GrowthParameters, TubeSpec

EPS_D_DEFAULT = 0.25


class EmptyDomainError(ValueError):
    """The mask excludes every interior grid point."""


class DomainError(ValueError):
    """A region falls outside the function's evaluation domain."""


# ---------------------------------------------------------------------------
# Grid fields and the discrete Laplacian
# ---------------------------------------------------------------------------


@dataclass
class GridField:
    """Dense scalar samples on a uniform grid."""

    origin: np.ndarray
    h: float
    values: np.ndarray
    log_scale: bool = False

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        if self.h <= 0:
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        if not self.log_scale and not np.all(np.isfinite(self.values)):
            raise DomainError("linear grid fields must be finite everywhere")

    @classmethod
    def sample(cls, fn, origin, h: float, shape, log_scale: bool = False) -> "GridField":
        origin = np.asarray(origin, dtype=float)
        axes = [origin[i] + h * np.arange(shape[i]) for i in range(len(shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        vals = fn(pts)
        return cls(origin, h, np.asarray(vals, dtype=float).reshape(shape), log_scale)

    def points(self) -> np.ndarray:
        axes = [self.origin[i] + self.h * np.arange(n) for i, n in enumerate(self.values.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass
class LaplacianReport:
    h: float
    min_value: float
    min_point: tuple
    violations: list
    tolerance: float
    checked: int


def discrete_laplacian_report(field: GridField, mask=None,
                              tol: float | None = None) -> LaplacianReport:
    """(2d+1)-point stencil at interior masked points; reports the minimum
    and every point where the stencil falls below -tol."""
    v = field.values
    d = v.ndim
    if any(n < 3 for n in v.shape):
        raise EmptyDomainError("field needs at least 3 samples per axis")
    interior = tuple(slice(1, -1) for _ in range(d))
    lap = -2.0 * d * v[interior]
    for ax in range(d):
        lo = tuple(slice(0, -2) if i == ax else slice(1, -1) for i in range(d))
        hi = tuple(slice(2, None) if i == ax else slice(1, -1) for i in range(d))
        lap = lap + v[lo] + v[hi]
    lap = lap / field.h**2
    if mask is not None:
        pts_shape = lap.shape
        axes = [field.origin[i] + field.h * (1 + np.arange(n)) for i, n in enumerate(pts_shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        keep = np.asarray(mask(pts), dtype=bool).reshape(pts_shape)
    else:
        keep = np.ones_like(lap, dtype=bool)
    if not keep.any():
        raise EmptyDomainError("mask excludes all interior grid points")
    tol = 0.0 if tol is None else tol
    masked = np.where(keep, lap, np.inf)
    idx = np.unravel_index(int(np.argmin(masked)), masked.shape)
    min_val = float(masked[idx])
    min_pt = tuple(float(field.origin[i] + field.h * (idx[i] + 1)) for i in range(d))
    viol_idx = np.argwhere(keep & (lap < -tol))
    violations = [
        tuple(float(field.origin[i] + field.h * (j[i] + 1)) for i in range(d))
        for j in viol_idx[:100]
    ]
    return LaplacianReport(field.h, min_val, min_pt, violations, tol, int(keep.sum()))


def laplacian_refinement_study(fn, origin, extent: float, hs, mask=None):
    """Minimum-stencil magnitudes across grid refinements; for a harmonic
    base the magnitude scales like h^2."""
    rows = []
    for h in hs:
        n = int(round(extent / h)) + 1
        field = GridField.sample(fn, origin, h, (n,) * len(origin))
        rep = discrete_laplacian_report(field, mask)
        rows.append((h, rep.min_value))
    return rows


# ---------------------------------------------------------------------------
# Certified suprema
# ---------------------------------------------------------------------------


@dataclass
class SupBracket:
    low: float     # value attained at a sample point: a true lower bound
    high: float    # cell-max upper bound
    argmax: tuple
    log_scale: bool = True


def sup_on(fn, lo, hi, h: float, lipschitz: float | None = None,
           extra_points: np.ndarray | None = None) -> SupBracket:
    """Certified bracket for the supremum over the box [lo, hi].

    ``fn`` is either a FunctionNode (its monotone cell bound supplies the
    upper half) or a plain callable, in which case a Lipschitz constant is
    required for the upper bound.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise DomainError(f"empty region {lo} .. {hi}")
    d = lo.shape[0]
    ns = [max(2, int(math.ceil((hi[i] - lo[i]) / h)) + 1) for i in range(d)]
    axes = [np.linspace(lo[i], hi[i], ns[i]) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    if extra_points is not None and len(extra_points):
        extra = np.atleast_2d(extra_points)
        inside = np.all((extra >= lo) & (extra <= hi), axis=1)
        pts = np.vstack([pts, extra[inside]])
    slack = max((hi[i] - lo[i]) / (ns[i] - 1) for i in range(d)) / 2.0
    if hasattr(fn, "eval_log"):
        vals = fn.eval_log(pts)
        ups = fn.upper_local(pts, slack)
        log_scale = True
    else:
        vals = np.asarray(fn(pts), dtype=float)
        if lipschitz is None:
            raise DomainError("plain callables need a Lipschitz constant")
        ups = vals + lipschitz * slack * math.sqrt(d)
        log_scale = False
    i = int(np.argmax(vals))
    low = float(vals[i])
    high = float(np.max(ups)) if len(ups) else low
    return SupBracket(low, max(high, low), tuple(np.round(pts[i], 9)), log_scale)


def _support_sup_points(tubes: list[TubeSpec], lo, hi) -> np.ndarray:
    """Candidate maximizers: per tube, samples along the centerline clipped
    to the box (the profile is monotone along the axis, so the within-box
    maximum sits on the centerline near the clipped far end)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = []
    ts = np.linspace(0.0, 1.0, 9)
    for t in tubes:
        seg = t.a[None, :] + ts[:, None] * (t.b - t.a)[None, :]
        inside = np.all((seg >= lo) & (seg <= hi), axis=1)
        if inside.any():
            out.append(seg[inside])
    return np.vstack(out) if out else np.zeros((0, len(lo)))


# ---------------------------------------------------------------------------
# Hausdorff content sandwich
# ---------------------------------------------------------------------------


def content_upper(shape, depth: int, box=None) -> float:
    """Greedy dyadic cover value: sum of (cell edge)^(d-1) over the cheapest
    dyadic refinement (down to ``depth``) of the cells meeting the shape.
    An upper bound for the content by definition (infimum over covers).

    ``shape`` implements intersects_box(lo, hi) -> bool and dimension.
    """
    if depth < 1:
        raise DomainError("depth must be >= 1")
    d = shape.dimension
    if box is None:
        lo, hi = shape.bounds()
        edge = float(np.max(hi - lo))
        edge = 2.0 ** math.ceil(math.log2(max(edge, 1e-12)))
    else:
        lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
        edge = float(np.max(hi - lo))
    lo = np.asarray(lo, dtype=float)

    def rec(cell_lo, cell_edge, depth_left):
        if not shape.intersects_box(cell_lo, cell_lo + cell_edge):
            return 0.0
        own = cell_edge ** (d - 1)
        if depth_left == 0:
            return own
        half = cell_edge / 2.0
        total = 0.0
        for offs in np.ndindex(*(2,) * d):
            total += rec(cell_lo + np.asarray(offs) * half, half, depth_left - 1)
            if total >= own:
                return own
        return min(own, total)

    return rec(lo, edge, depth)


def content_lower_projection(shape, axis: np.ndarray, samples: int = 256) -> float:
    """Certified lower bound for the edge-normalized (d-1)-content: the
    measure of the shape's orthogonal shadow on the hyperplane normal to
    ``axis``, divided by the L1 norm of the unit axis.

    A dyadic cell of edge s shadows a set of (d-1)-measure s^(d-1) |v|_1
    (the cube-shadow identity), so any cover's edge sum dominates the
    shadow measure divided by |v|_1; the divisor is one for coordinate
    axes.  ``shape`` implements line_hits(origins, direction) plus a
    bounding box.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    shadow_factor = float(np.sum(np.abs(axis)))
    lo, hi = shape.bounds()
    d = lo.shape[0]
    from .treeset import complete_frame

    frame = complete_frame(axis)
    corners = np.array([
        [lo[i] if not (j >> i) & 1 else hi[i] for i in range(d)]
        for j in range(2**d)
    ])
    tcoords = corners @ frame[1:].T
    tlo, thi = tcoords.min(axis=0), tcoords.max(axis=0)
    n = max(2, int(round(samples ** (1.0 / (d - 1)))))
    axes = [np.linspace(tlo[i], thi[i], n) for i in range(d - 1)]
    mesh = np.meshgrid(*axes, indexing="ij") if d > 2 else [axes[0]]
    tpts = np.column_stack([m.ravel() for m in mesh])
    origins = tpts @ frame[1:]
    hits = shape.line_hits(origins, axis)
    cell = float(np.prod((thi - tlo) / (n - 1)))
    # n samples certify at most n-1 cells of the shadow (conservative)
    count = max(0.0, float(np.sum(hits)) - 1.0)
    return count * cell / shadow_factor


class ZeroSetInCube:
    """The zero set of a tube-supported function within one basic cube.

    With the evaluator available, a point is certified zero exactly when
    the log-value is -inf (the profiles vanish identically outside the
    half-tube level sets, so this is the true zero set, including the wall
    layers inside tubes where max(T-1, 0) dies).  Without it, the support
    tubes serve as a conservative overestimate of the support."""

    def __init__(self, cube: LatticeCube, tubes: list[TubeSpec], fn=None):
        self.cube = cube
        self.fn = fn if (fn is not None and hasattr(fn, "eval_log")) else None
        self.dimension = cube.dimension
        lo, hi = cube.bounds()
        self._lo, self._hi = lo, hi
        center = (lo + hi) / 2.0
        r = math.sqrt(self.dimension) / 2.0
        self.tubes = [t for t in tubes if float(t.distance(center[None, :])[0]) <= r]

    def bounds(self):
        return self._lo, self._hi

    def _free(self, pts: np.ndarray) -> np.ndarray:
        if self.fn is not None:
            return ~np.isfinite(self.fn.eval_log(pts))
        free = np.ones(pts.shape[0], dtype=bool)
        for t in self.tubes:
            if not free.any():
                break
            free &= ~t.contains(pts)
        return free

    def line_hits(self, origins: np.ndarray, direction: np.ndarray,
                  steps: int = 96) -> np.ndarray:
        """A line counts when it certifiably contains a zero point inside
        the cube (sampling misses only undercount)."""
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        span_lo = float(np.min((self._lo) @ direction))
        span_hi = float(np.max((self._hi) @ direction))
        ts = np.linspace(span_lo, span_hi, steps)
        n = origins.shape[0]
        offs = ts[None, :] - (origins @ direction)[:, None]
        pts = origins[:, None, :] + offs[:, :, None] * direction[None, None, :]
        pts = pts.reshape(-1, self.dimension)
        inside = np.all((pts >= self._lo) & (pts <= self._hi), axis=1)
        free = np.zeros(pts.shape[0], dtype=bool)
        if inside.any():
            free[inside] = self._free(pts[inside])
        return free.reshape(n, len(ts)).any(axis=1)

    def intersects_box(self, lo, hi) -> bool:
        lo = np.maximum(np.asarray(lo, dtype=float), self._lo)
        hi = np.minimum(np.asarray(hi, dtype=float), self._hi)
        if np.any(hi <= lo):
            return False
        corners = np.array([
            [lo[i] if not (j >> i) & 1 else hi[i] for i in range(len(lo))]
            for j in range(2 ** len(lo))
        ])
        center = (lo + hi) / 2.0
        pts = np.vstack([corners, center[None, :]])
        free = np.ones(pts.shape[0], dtype=bool)
        for t in self.tubes:
            free &= ~t.contains(pts)
        return bool(free.any())


# ---------------------------------------------------------------------------
# Oscillation classification and census
# ---------------------------------------------------------------------------


@dataclass
class OscillationReport:
    cube: tuple
    p1_satisfied: bool
    p2_satisfied: bool
    classification: str  # oscillating | rogue
    sup_low: float = float("nan")
    projection: float = float("nan")
    uncertain: bool = False

    @property
    def rogue(self) -> bool:
        return self.classification == "rogue"


def classify_cube(u, cube: LatticeCube, eps_d: float = EPS_D_DEFAULT,
                  h: float = 0.125, tubes: list[TubeSpec] | None = None,
                  projection_samples: int = 64) -> OscillationReport:
    """P1 by a certified supremum lower bound (grid plus tube centerlines),
    P2 by the projection lower bound on the zero set's content.  A cube is
    rogue when either certification fails; near-threshold uncertainty counts
    as rogue (conservative)."""
    lo, hi = cube.bounds()
    tubes = tubes if tubes is not None else u.support_tubes()
    zset = ZeroSetInCube(cube, tubes, fn=u)
    extra = _support_sup_points(zset.tubes, lo, hi)
    bracket = sup_on(u, lo, hi, h, extra_points=extra)
    p1 = bracket.low >= 0.0  # log scale: sup >= 1
    best_proj = 0.0
    d = cube.dimension
    axes = [np.eye(d)[i] for i in range(d)]
    axes += [t.frame[0] for t in zset.tubes[:4]]
    for ax in axes:
        best_proj = max(best_proj,
                        content_lower_projection(zset, ax, projection_samples))
        if best_proj >= eps_d:
            break
    p2 = best_proj >= eps_d
    cls = "oscillating" if (p1 and p2) else "rogue"
    return OscillationReport(cube.corner, p1, p2, cls, bracket.low, best_proj)


@dataclass
class CensusResult:
    count: int
    gamma: float
    total: int
    f_value: float
    reports: list = field(default_factory=list)


def rogue_census(u, lo, hi, f: GrowthParameters, eps_d: float = EPS_D_DEFAULT,
                 h: float = 0.125, keep_reports: bool = False,
                 threads: int | None = None) -> CensusResult:
    """Exact rogue count over the basic cubes of the box, divided by
    f(edge length)."""
    cubes = enumerate_basic_cubes(lo, hi)
    tubes = u.support_tubes()
    from .treeset import _TubeIndex

    index = _TubeIndex(tubes, cell=2.0)

    def one(cube):
        clo, chi = cube.bounds()
        local = index.candidates(clo, chi)
        return classify_cube(u, cube, eps_d, h, tubes=local)

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, cubes))
    else:
        reports = [one(c) for c in cubes]
    count = sum(1 for r in reports if r.rogue)
    edge = float(max(b - a for a, b in zip(lo, hi)))
    fval = float(f(edge))
    return CensusResult(count, count / fval, len(cubes), fval,
                        reports if keep_reports else [])


# ---------------------------------------------------------------------------
# Growth profile
# ---------------------------------------------------------------------------


@dataclass
class GrowthProfile:
    radii: list
    log_m: list
    denominators: list
    ratios: list

    def max_ratio(self) -> float:
        return max(self.ratios)

    def min_ratio(self) -> float:
        return min(self.ratios)


def lower_bound_denominator(R: float, f: GrowthParameters) -> float:
    """R log^(d/(d-1))(2 + f(R)/R) / (1 + (f(R)/R)^(1/(d-1)))."""
    d = f.d
    ratio = float(f(R)) / R
    return R * math.log(2.0 + ratio) ** (d / (d - 1)) / (1.0 + ratio ** (1.0 / (d - 1)))


def growth_profile(u, k_max: int, f: GrowthParameters, h: float = 0.25,
                   nodes_per_level=None) -> GrowthProfile:
    """Measured log M_u(2^k) against the lower-bound denominator, per dyadic
    radius.  When per-level nodes are supplied each radius is measured on
    its own level function."""
    radii, logs, dens, ratios = [], [], [], []
    d = f.d
    for k in range(1, k_max + 1):
        R = 2.0**k
        fn = u if nodes_per_level is None else nodes_per_level[min(k, len(nodes_per_level)) - 1]
        tubes = fn.support_tubes()
        lo = np.zeros(d)
        hi = np.full(d, R)
        extra = _support_sup_points(tubes, lo, hi)
        bracket = sup_on(fn, lo, hi, max(h, R / 64.0), extra_points=extra)
        radii.append(R)
        logs.append(bracket.low)
        dens.append(lower_bound_denominator(R, f))
        ratios.append(bracket.low / dens[-1])
    return GrowthProfile(radii, logs, dens, ratios)
