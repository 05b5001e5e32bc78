"""Combinatorial lower-bound engine on rogue-cube configurations.

Given a set E of rogue basic cubes in Q = [-N/2, N/2]^d, the engine builds
the density radius rho, the maximal dyadic cover, the step function M, the
admissible-layer sets K_I with their kappa sequences, and checks every
intermediate counting claim exhaustively.

Density convention: the complement K of the rogue set is taken to be
everything outside the rogue cubes, including the region beyond Q.  The
literal complement-within-Q would give every boundary cube a density
deficit of one half no matter how small E is, poisoning the layer counts
at desk scale; with the extended complement an empty E gives rho identical
to its floor everywhere, which is also what the maximal-function step of
the large-cube count actually uses (only rogue cubes create deficit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import LatticeCube, containing_dyadic
from .treeset import GrowthParameters

TWO_SQRT = {2: 2.0 * math.sqrt(2.0), 3: 2.0 * math.sqrt(3.0)}

#: The interior ball density m(B(x, t/2)) / (m(B(0,1)) t^d) equals 2^-d
#: exactly, so delta_0 must sit strictly below 2^-d for points inside or
#: near rogue cubes to recover an admissible scale at all; a quarter of the
#: interior density keeps half-space configurations admissible too while
#: satisfying the 1 - delta_0 >= 1/2 requirement of the large-cube count.
DELTA0_DEFAULT = {2: 1.0 / 16.0, 3: 1.0 / 32.0}


class ConfigurationError(ValueError):
    pass


class CoverInvariantError(RuntimeError):
    pass


@dataclass
class RogueConfiguration:
    """Rogue cube set E inside Q = [-N/2, N/2]^d, N a power of two."""

    N: int
    d: int
    E: set
    c0: float = 0.1
    delta0: float = float("nan")
    alpha: float = 1.0 / 12.0

    def __post_init__(self):
        if self.N < 4 or (self.N & (self.N - 1)) != 0:
            raise ConfigurationError(f"N must be a power of two >= 4, got {self.N}")
        if math.isnan(self.delta0):
            self.delta0 = DELTA0_DEFAULT[self.d]
        half = self.N // 2
        self.E = {tuple(int(c) for c in e) for e in self.E}
        for e in self.E:
            if len(e) != self.d or any(c < -half or c >= half for c in e):
                raise ConfigurationError(f"rogue cube {e} outside Q")
        if len(self.E) > self.c0 * self.N**self.d:
            raise ConfigurationError(
                f"#E = {len(self.E)} exceeds the gate c0 N^d = {self.c0 * self.N ** self.d:.1f}")

    @classmethod
    def random(cls, N: int, d: int, count: int, seed: int, **kw) -> "RogueConfiguration":
        rng = np.random.default_rng(seed)
        half = N // 2
        total = N**d
        count = min(count, total)
        flat = rng.choice(total, size=count, replace=False)
        corners = set()
        for f in flat:
            c = []
            v = int(f)
            for _ in range(d):
                c.append(v % N - half)
                v //= N
            corners.add(tuple(c))
        return cls(N, d, corners, **kw)

    @classmethod
    def from_function(cls, u, N: int, d: int, eps_d: float = 0.25, **kw) -> "RogueConfiguration":
        """E = the basic cubes of Q failing the zero-set content property."""
        from .verify import classify_cube
        from .treeset import _TubeIndex

        half = N // 2
        tubes = u.support_tubes()
        index = _TubeIndex(tubes, cell=2.0)
        bad = set()
        for corner in np.ndindex(*(N,) * d):
            cube = LatticeCube(tuple(int(c) - half for c in corner))
            lo, hi = cube.bounds()
            rep = classify_cube(u, cube, eps_d, tubes=index.candidates(lo, hi))
            if not rep.p2_satisfied:
                bad.add(cube.corner)
        return cls(N, d, bad, **kw)

    @property
    def k_max(self) -> int:
        return self.N // (6 * self.d)

    @property
    def rho_floor(self) -> float:
        return TWO_SQRT[self.d]

    def e_array(self) -> np.ndarray:
        return np.asarray(sorted(self.E), dtype=float) if self.E else np.zeros((0, self.d))


# ---------------------------------------------------------------------------
# Ball measures and the density radius
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _disk_rect_area(cx, cy, r, x1, x2, y1, y2) -> np.ndarray:
    """Areas of disk((cx,cy), r) ∩ [x1,x2]x[y1,y2], vectorized over
    rectangles, by Gauss-Legendre quadrature of the chord length."""
    x1 = np.asarray(x1, dtype=float) - cx
    x2 = np.asarray(x2, dtype=float) - cx
    y1 = np.asarray(y1, dtype=float) - cy
    y2 = np.asarray(y2, dtype=float) - cy
    a = np.maximum(x1, -r)
    b = np.minimum(x2, r)
    width = np.maximum(b - a, 0.0)
    mid = (a + b) / 2.0
    xs = mid[:, None] + (width / 2.0)[:, None] * _GL_NODES[None, :]
    g = np.sqrt(np.maximum(r**2 - xs**2, 0.0))
    chord = np.maximum(np.minimum(y2[:, None], g) - np.maximum(y1[:, None], -g), 0.0)
    return (width / 2.0) * np.sum(chord * _GL_WEIGHTS[None, :], axis=1)


def _ball_box_volume_3d(c, r, lo, hi) -> np.ndarray:
    """Volumes of ball(c, r) ∩ boxes, by a 2d Gauss grid of cap chords."""
    lo = np.atleast_2d(lo) - c
    hi = np.atleast_2d(hi) - c
    a = np.maximum(lo[:, 0], -r)
    b = np.minimum(hi[:, 0], r)
    wx = np.maximum(b - a, 0.0)
    xs = ((a + b) / 2.0)[:, None] + (wx / 2.0)[:, None] * _GL_NODES[None, :]
    out = np.zeros(lo.shape[0])
    for i in range(lo.shape[0]):
        if wx[i] <= 0:
            continue
        rx2 = np.maximum(r**2 - xs[i] ** 2, 0.0)
        ry = np.sqrt(rx2)
        ay = np.maximum(lo[i, 1], -ry)
        by = np.minimum(hi[i, 1], ry)
        wy = np.maximum(by - ay, 0.0)
        ys = ((ay + by) / 2.0)[:, None] + (wy / 2.0)[:, None] * _GL_NODES[None, :]
        g = np.sqrt(np.maximum(rx2[:, None] - ys**2, 0.0))
        chord = np.maximum(np.minimum(hi[i, 2], g) - np.maximum(lo[i, 2], -g), 0.0)
        inner = np.sum(chord * _GL_WEIGHTS[None, :], axis=1) * (wy / 2.0)
        out[i] = float(np.sum(inner * _GL_WEIGHTS) * wx[i] / 2.0)
    return out


def unit_ball_volume(d: int) -> float:
    return math.pi if d == 2 else 4.0 * math.pi / 3.0


def measure_K_in_ball(x: np.ndarray, radius: float, config: RogueConfiguration,
                      e_pts: np.ndarray | None = None) -> float:
    """Lebesgue measure of (complement of the rogue cubes) ∩ B(x, radius)."""
    d = config.d
    vol = unit_ball_volume(d) * radius**d
    e = config.e_array() if e_pts is None else e_pts
    if len(e) == 0:
        return vol
    centers = e + 0.5
    near = np.linalg.norm(centers - x, axis=1) <= radius + math.sqrt(d) / 2.0
    if not near.any():
        return vol
    lo = e[near]
    if d == 2:
        areas = _disk_rect_area(x[0], x[1], radius, lo[:, 0], lo[:, 0] + 1,
                                lo[:, 1], lo[:, 1] + 1)
    else:
        areas = _ball_box_volume_3d(x, radius, lo, lo + 1.0)
    return vol - float(np.sum(areas))


def compute_r(x, config: RogueConfiguration, rel_tol: float = 1e-3,
              t_cap: float | None = None) -> tuple[float, bool]:
    """inf over t of the density condition
    m(K ∩ B(x, t/2)) >= delta0 * m(B(0,1)) * t^d, located by a geometric
    scan refined by bisection; returns (r, flagged) where the flag marks a
    scan that ran past the cap without an admissible t."""
    x = np.asarray(x, dtype=float)
    d = config.d
    v1 = unit_ball_volume(d)
    e_pts = config.e_array()

    def cond(t):
        need = config.delta0 * v1 * t**d
        return measure_K_in_ball(x, t / 2.0, config, e_pts) >= need * (1 - 1e-12)

    # cheap admissible scales below the floor: any pass pins rho at the floor
    for t in (0.25, config.rho_floor / 2.0, config.rho_floor):
        if cond(t):
            return t, False
    t_cap = t_cap if t_cap is not None else 3.0 * config.N
    t = config.rho_floor
    prev = t
    while t <= t_cap:
        t *= 1.07
        if cond(t):
            lo_b, hi_b = prev, t
            while hi_b - lo_b > rel_tol * hi_b:
                mid = 0.5 * (lo_b + hi_b)
                if cond(mid):
                    hi_b = mid
                else:
                    lo_b = mid
            return hi_b, False
        prev = t
    return t_cap, True


def rho_cube(cube_corner, config: RogueConfiguration,
             e_pts: np.ndarray | None = None) -> float:
    """sup of rho over the cube from a 3^d sample lattice with a movement
    inflation of twice the lattice cover radius, floored at 2 sqrt(d)."""
    corner = np.asarray(cube_corner, dtype=float)
    d = config.d
    offsets = np.array(np.meshgrid(*[[1 / 6, 1 / 2, 5 / 6]] * d,
                                   indexing="ij")).reshape(d, -1).T
    worst = 0.0
    for off in offsets:
        r, _flag = compute_r(corner + off, config)
        worst = max(worst, r)
    inflation = 2.0 * math.sqrt(d) / 6.0
    return max(config.rho_floor, worst + inflation if worst > config.rho_floor else worst)


@dataclass
class RhoField:
    """Per-cube density radii, indexed by corner + N/2."""

    config: RogueConfiguration
    values: np.ndarray

    @classmethod
    def compute(cls, config: RogueConfiguration) -> "RhoField":
        N, d = config.N, config.d
        half = N // 2
        vals = np.full((N,) * d, config.rho_floor)
        if config.E:
            e_pts = config.e_array()
            centers = e_pts + 0.5
            for idx in np.ndindex(*(N,) * d):
                corner = np.asarray(idx, dtype=float) - half
                # cubes far from every rogue cube keep the floor: the density
                # condition passes at t = 1/4 for all samples
                gap = float(np.min(np.linalg.norm(centers - (corner + 0.5), axis=1))) if len(e_pts) else np.inf
                if gap > 0.125 + math.sqrt(d):
                    continue
                vals[idx] = rho_cube(corner, config, e_pts)
        return cls(config, vals)

    def of_corner(self, corner) -> float:
        half = self.config.N // 2
        idx = tuple(int(c) + half for c in corner)
        return float(self.values[idx])


# ---------------------------------------------------------------------------
# Maximal dyadic cover and the step function
# ---------------------------------------------------------------------------


@dataclass
class DyadicCover:
    config: RogueConfiguration
    cubes: list          # maximal cover elements (DyadicCube)
    n_by_order: dict     # order -> count
    m0: int
    s_values: dict       # m -> s_m (real-valued, capped at N/(6d))
    m_bar: int

    def counts_sum(self, m: int, weight: int = 1) -> float:
        return sum((2.0**ell) ** weight * n for ell, n in self.n_by_order.items() if ell >= m)


def build_cover(config: RogueConfiguration, rho: RhoField) -> DyadicCover:
    """Maximal dyadic cover: cubes processed in descending rho (lexicographic
    tie-break); each contributes its containing dyadic cube with edge in
    [2 rho, 4 rho) unless already covered."""
    N, d = config.N, config.d
    half = N // 2
    corners = [tuple(int(c) - half for c in idx) for idx in np.ndindex(*(N,) * d)]
    order = sorted(corners, key=lambda c: (-rho.of_corner(c), c))
    kept: list = []
    kept_by_order: dict[int, set] = {}
    for corner in order:
        covered = False
        for ell, cset in kept_by_order.items():
            edge = 1 << ell
            anchor = tuple((c // edge) * edge for c in corner)
            if anchor in cset:
                covered = True
                break
        if covered:
            continue
        j = containing_dyadic(LatticeCube(corner), rho.of_corner(corner))
        kept.append(j)
        kept_by_order.setdefault(j.order, set()).add(j.corner)
    # invariants: pairwise non-nested, and the union covers Q
    for j in kept:
        for ell, cset in kept_by_order.items():
            if ell <= j.order:
                continue
            edge = 1 << ell
            anchor = tuple((c // edge) * edge for c in j.corner)
            if anchor in cset:
                raise CoverInvariantError(f"cover element {j} nested in an order-{ell} element")
    for corner in corners:
        if not any(
            tuple((c // (1 << ell)) * (1 << ell) for c in corner) in cset
            for ell, cset in kept_by_order.items()
        ):
            raise CoverInvariantError(f"basic cube {corner} not covered")
    n_by_order = {ell: len(cset) for ell, cset in kept_by_order.items()}
    m0 = 1
    while 2**m0 <= 8 * math.sqrt(d):
        m0 += 1
    cap = config.N / (6.0 * d)
    s_values: dict[int, float] = {}
    m = m0
    m_bar = m0 - 1
    while True:
        tail = sum(2.0**ell * n for ell, n in n_by_order.items() if ell >= m)
        if tail <= 0:
            s_values[m] = cap
            m_bar = m - 1
            break
        s = (config.alpha * config.N**d / tail) ** (1.0 / (d - 1))
        s_values[m] = min(s, cap)
        if s_values[m] >= cap:
            m_bar = m - 1
            break
        m += 1
        if m > 64:
            raise CoverInvariantError("step sequence did not reach the cap")
    return DyadicCover(config, kept, n_by_order, m0, s_values, m_bar)


@dataclass
class StepFunction:
    """The monotone step function M(k) built from the cover's step sequence."""

    cover: DyadicCover

    def __call__(self, k: int) -> float:
        m0 = self.cover.m0
        s = self.cover.s_values
        if k <= s[m0]:
            return 2.0**m0
        for m in sorted(s):
            if m == m0:
                continue
            if s[m - 1] < k <= s[m]:
                return 2.0**m
        return 2.0 ** max(s)

    def values(self, k_max: int) -> np.ndarray:
        return np.array([self(k) for k in range(1, k_max + 1)])


def fitted_c2(config: RogueConfiguration, cover: DyadicCover,
              ks=(1, 2, 3)) -> float | None:
    """Measured constant of the neighborhood count: for cover elements J
    above the base order, #{I : A(I,k) ∩ J != 0} against
    ell(J)^d + k^(d-1) ell(J).  None when no large elements exist."""
    big = [j for j in cover.cubes if j.order >= cover.m0]
    if not big:
        return None
    N, d = config.N, config.d
    half = N // 2
    grid = np.stack(np.meshgrid(*[np.arange(-half, half)] * d, indexing="ij"), axis=-1)
    flat = grid.reshape(-1, d)
    worst = 0.0
    for j in big:
        jlo = np.asarray(j.corner)
        jhi = jlo + j.edge - 1  # inclusive cube-index bounds of J
        # the Chebyshev distances from a cube index c to J's cube indices
        # form the contiguous range [d_min(c), d_max(c)]
        d_min = np.max(np.maximum(np.maximum(jlo - flat, flat - jhi), 0), axis=1)
        d_max = np.max(np.maximum(flat - jlo, jhi - flat), axis=1)
        for k in ks:
            if config.k_max >= 1 and k > config.k_max:
                continue
            count = int(np.sum((d_min <= k) & (k <= d_max)))
            denom = j.edge**d + k ** (d - 1) * j.edge
            worst = max(worst, count / denom)
    return worst


def claim1_ratio(cover: DyadicCover) -> float | None:
    """sum over m >= m0 of 2^(m d) n_m against #E: the fitted constant of
    the large-cube bound (None when E is empty and the sum vanishes)."""
    config = cover.config
    total = sum((2.0**ell) ** config.d * n
                for ell, n in cover.n_by_order.items() if ell >= cover.m0)
    if not config.E:
        return None if total == 0 else math.inf
    return total / len(config.E)


# ---------------------------------------------------------------------------
# Layer sets, kappa chains, and the Step-1 checks
# ---------------------------------------------------------------------------


def _ring_max(vals: np.ndarray, k: int) -> np.ndarray:
    """Max of vals over the k-th cube ring around every cell (Chebyshev
    distance exactly k), with cells outside the array treated as absent.

    The ring decomposes into 2d faces; each face maximum is a sliding
    window along the remaining axes of a shifted slab.
    """
    d = vals.ndim
    N = vals.shape[0]
    if d == 2:
        pad = np.full((N + 2 * k, N + 2 * k), -np.inf)
        pad[k:k + N, k:k + N] = vals
        rows = sliding_window_view(pad, 2 * k + 1, axis=1).max(axis=-1)
        top = rows[0:N, :]
        bot = rows[2 * k:2 * k + N, :]
        if 2 * k - 1 >= 1:
            cols = sliding_window_view(pad, 2 * k - 1, axis=0).max(axis=-1)
            left = cols[1:N + 1, 0:N]
            right = cols[1:N + 1, 2 * k:2 * k + N]
        else:
            left = pad[k:k + N, 0:N]
            right = pad[k:k + N, 2 * k:2 * k + N]
        return np.maximum.reduce([top, bot, left, right])
    out = np.full(vals.shape, -np.inf)
    for idx in np.ndindex(*vals.shape):
        best = -np.inf
        for off in _ring_offsets(d, k):
            j = tuple(i + o for i, o in zip(idx, off))
            if all(0 <= jj < N for jj in j):
                v = vals[j]
                if v > best:
                    best = v
        out[idx] = best
    return out


_RING_CACHE: dict = {}


def _ring_offsets(d: int, k: int):
    key = (d, k)
    if key not in _RING_CACHE:
        offs = []
        for off in np.ndindex(*(2 * k + 1,) * d):
            o = tuple(int(v) - k for v in off)
            if max(abs(v) for v in o) == k:
                offs.append(o)
        _RING_CACHE[key] = offs
    return _RING_CACHE[key]


@dataclass
class KappaChain:
    corner: tuple
    layers: list        # K_I
    kappas: list
    b_value: float


@dataclass
class LemmaChecks:
    property_m: bool
    property_m_detail: dict
    x_fraction: float
    x_ok: bool
    kappa_ok: bool
    kappa_detail: dict
    claim1_c1: float | None
    central_fraction: float


@dataclass
class KappaResult:
    chains: dict
    x_set: set
    checks: LemmaChecks
    sum_inv_m: float
    step: StepFunction


def kappa_chains(config: RogueConfiguration, rho: RhoField,
                 cover: DyadicCover) -> KappaResult:
    """K_I by exhaustive layer scan, kappa sequences, B(I), the set X, and
    the three Step-1 counting checks.  Failures are reported, not raised:
    they are the falsification surface for the configured constants."""
    N, d = config.N, config.d
    half = N // 2
    k_max = config.k_max
    step = StepFunction(cover)
    m_of_k = step.values(k_max) if k_max >= 1 else np.zeros(0)
    sum_inv = float(np.sum(1.0 / m_of_k)) if k_max >= 1 else 0.0

    vals = rho.values
    in_layer = {}
    for k in range(1, k_max + 1):
        in_layer[k] = _ring_max(vals, k) <= m_of_k[k - 1]

    chains: dict[tuple, KappaChain] = {}
    x_set: set = set()
    prop_m_counts = {}
    for k in range(1, k_max + 1):
        prop_m_counts[k] = int(in_layer[k].sum())
    total = N**d
    need_m = 11.0 / 12.0 * total
    prop_m_ok = all(c >= need_m for c in prop_m_counts.values()) if k_max >= 1 else True

    central_ok = 0
    central_total = 0
    kappa_ok = True
    kappa_detail = {"worst_corner": None, "worst_count": None, "bound": sum_inv / 24.0}
    for idx in np.ndindex(*(N,) * d):
        corner = tuple(int(c) - half for c in idx)
        layers = [k for k in range(1, k_max + 1) if in_layer[k][idx]]
        b_val = float(sum(1.0 / step(k) for k in layers))
        kappas = []
        for k in layers:
            if not kappas or k > kappas[-1] + step(kappas[-1]):
                kappas.append(k)
        chains[corner] = KappaChain(corner, layers, kappas, b_val)
        if b_val >= sum_inv / 12.0:
            x_set.add(corner)
            if len(kappas) < sum_inv / 24.0 - 1e-12:
                kappa_ok = False
                kappa_detail["worst_corner"] = corner
                kappa_detail["worst_count"] = len(kappas)
        central = all(-half + k_max <= c and c + 1 + k_max <= half for c in corner)
        if central:
            central_total += 1
            if len(layers) == k_max:
                central_ok += 1
    x_frac = len(x_set) / total
    checks = LemmaChecks(
        property_m=prop_m_ok,
        property_m_detail={k: prop_m_counts[k] / total for k in prop_m_counts},
        x_fraction=x_frac,
        x_ok=x_frac >= 10.0 / 11.0,
        kappa_ok=kappa_ok,
        kappa_detail=kappa_detail,
        claim1_c1=claim1_ratio(cover),
        central_fraction=central_ok / central_total if central_total else float("nan"),
    )
    return KappaResult(chains, x_set, checks, sum_inv, step)


# ---------------------------------------------------------------------------
# The bound formula
# ---------------------------------------------------------------------------


def psi(x: float, d: int) -> float:
    """log^(d/(d-1))(2 + x) / (1 + x^(1/(d-1)))."""
    return math.log(2.0 + x) ** (d / (d - 1)) / (1.0 + x ** (1.0 / (d - 1)))


def psi_decreasing_onset(d: int, x_hi: float = 1e6, samples: int = 4000) -> float:
    """Smallest sampled x from which psi is monotone decreasing."""
    xs = np.geomspace(1e-3, x_hi, samples)
    vals = np.array([psi(float(x), d) for x in xs])
    increasing = np.diff(vals) > 0
    if not increasing.any():
        return float(xs[0])
    last = int(np.max(np.nonzero(increasing)))
    return float(xs[last + 1])


def phi(x: float, N: float, e_count: float, d: int) -> float:
    """2^-x + x^(1 + 1/(d-1)) (N / #E)^(1/(d-1)); the convex objective whose
    minimum produces the lemma's exponent."""
    if e_count <= 0:
        return 2.0**-x
    return 2.0**-x + x ** (1.0 + 1.0 / (d - 1)) * (N / e_count) ** (1.0 / (d - 1))


def phi_argmin(N: float, e_count: float, d: int, lo: float = 1.0,
               hi: float | None = None, iters: int = 200) -> float:
    """Ternary search for the minimizer of the convex phi on [lo, N/(6d)]."""
    hi = hi if hi is not None else N / (6.0 * d)
    a, b = lo, hi
    for _ in range(iters):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if phi(m1, N, e_count, d) <= phi(m2, N, e_count, d):
            b = m2
        else:
            a = m1
    return 0.5 * (a + b)


@dataclass
class BoundValue:
    N: int
    e_count: int
    d: int
    psi_value: float
    log_bound: float   # N * psi(#E / N): the exponent without c_d
    phi_min_x: float
    phi_min_value: float


def bound_value(N: int, e_count: int, d: int) -> BoundValue:
    p = psi(e_count / N, d)
    x_star = phi_argmin(N, e_count, d)
    return BoundValue(N, e_count, d, p, N * p, x_star, phi(x_star, N, e_count, d))


# ---------------------------------------------------------------------------
# Chain contraction measurements (report only)
# ---------------------------------------------------------------------------


@dataclass
class ContractionRow:
    corner: tuple
    kappa_count: int
    log_ratio: float       # log(M_u(I) / M_u(Q))
    per_step: list


def chain_contraction(u, config: RogueConfiguration, result: KappaResult,
                      max_cubes: int = 64, h: float = 0.25,
                      seed: int = 3) -> list[ContractionRow]:
    """Measured sup contraction along the kappa chains against the nested
    maximum principle; report-only."""
    from .verify import sup_on, _support_sup_points

    rng = np.random.default_rng(seed)
    N, d = config.N, config.d
    half = N // 2
    k_max = config.k_max
    central = [c for c in result.chains
               if all(-half + k_max <= v and v + 1 + k_max <= half for v in c)]
    if not central:
        return []
    pick = [central[i] for i in rng.choice(len(central),
                                           size=min(max_cubes, len(central)),
                                           replace=False)]
    tubes = u.support_tubes() if hasattr(u, "support_tubes") else []
    rows = []
    q_lo = np.full(d, -half, dtype=float)
    q_hi = np.full(d, half, dtype=float)
    extra = _support_sup_points(tubes, q_lo, q_hi) if tubes else None
    m_q = sup_on(u, q_lo, q_hi, h, extra_points=extra, lipschitz=0.0 if not hasattr(u, "eval_log") else None).low
    for corner in pick:
        chain = result.chains[corner]
        lo = np.asarray(corner, dtype=float)
        hi = lo + 1.0
        sups = []
        boxes = [(lo, hi)]
        for kap in chain.kappas:
            boxes.append((lo - kap, hi + kap))
        for blo, bhi in boxes:
            ex = _support_sup_points(tubes, blo, bhi) if tubes else None
            sups.append(sup_on(u, blo, bhi, h, extra_points=ex,
                               lipschitz=0.0 if not hasattr(u, "eval_log") else None).low)
        per_step = [sups[i + 1] - sups[i] for i in range(len(sups) - 1)]
        rows.append(ContractionRow(corner, len(chain.kappas), sups[0] - m_q, per_step))
    return rows
