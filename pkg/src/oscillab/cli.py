"""Command-line front end: build tube trees and glued functions, run the
verification passes, the lemma engine, and the potential-theory checks.

All structured outputs are JSON (verdicts) and CSV (tabular series); plots
are static SVG.  Exit codes: 0 all checks passed, 2 at least one check
failed, 3 invalid configuration.  Identical configuration and seed produce
byte-identical reports.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mainlemma, potential, subfun, treeset, verify
from .geometry import LatticeCube
from .treeset import GrowthParameters, GrowthValidationError, parse_growth

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_BAD_CONFIG = 3


@dataclass
class RunConfig:
    d: int = 2
    f_spec: str = "t^1.5"
    k: int = 4
    N: int = 64
    seed: int = 7
    eps_d: float = verify.EPS_D_DEFAULT
    delta0: float | None = None
    alpha: float = 1.0 / 12.0
    c0: float = 0.1
    threads: int = 1
    out: Path = field(default_factory=lambda: Path("."))

    def growth(self) -> GrowthParameters:
        return parse_growth(self.f_spec, self.d)


def _num(v):
    if isinstance(v, float):
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.10g}")
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _num(obj.item())
    return _num(obj)


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            f"{v:.10g}" if isinstance(v, (float, np.floating)) else str(v)
            for v in row
        ))
    path.write_text("\n".join(lines) + "\n")


def _svg_open(width, height, box):
    x0, y0, x1, y1 = box
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="{x0} {y0} {x1 - x0} {y1 - y0}">',
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="white"/>',
    ]


def svg_tree(tree: treeset.TreeSpec, path: Path) -> None:
    """Tube diagram: lines with stroke width equal to the tube diameter."""
    if tree.dimension != 2:
        return
    lo, hi = tree.box()
    pad = 1.0
    parts = _svg_open(640, 640, (lo[0] - pad, lo[1] - pad,
                                 hi[0] + pad, hi[1] + pad))
    for t in sorted(tree.tubes, key=lambda t: -t.diameter):
        color = {"handle": "#c44", "wide": "#48c", "thin": "#6a6", "leaf": "#999"}.get(t.kind, "#777")
        parts.append(
            f'<line x1="{t.a[0]:.4f}" y1="{t.a[1]:.4f}" x2="{t.b[0]:.4f}" y2="{t.b[1]:.4f}" '
            f'stroke="{color}" stroke-width="{t.diameter:.4f}" stroke-linecap="round" opacity="0.8"/>'
        )
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")


def svg_rogue_heatmap(reports, path: Path) -> None:
    """Unit squares colored by classification (d = 2 only)."""
    if not reports or len(reports[0].cube) != 2:
        return
    xs = [r.cube[0] for r in reports]
    ys = [r.cube[1] for r in reports]
    box = (min(xs), min(ys), max(xs) + 1, max(ys) + 1)
    parts = _svg_open(640, 640, box)
    for r in reports:
        color = "#d66" if r.rogue else "#ded"
        parts.append(
            f'<rect x="{r.cube[0]}" y="{r.cube[1]}" width="1" height="1" '
            f'fill="{color}" stroke="#bbb" stroke-width="0.02"/>'
        )
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")


def _verdict(name: str, passed: bool | None, **measured):
    status = "pass" if passed else ("flagged" if passed is None else "fail")
    return {"check": name, "status": status, **_clean(measured)}


def _emit(out: Path, name: str, checks: list[dict]) -> int:
    ok = all(c["status"] != "fail" for c in checks)
    write_json(out / f"{name}.json", {"tool": name, "checks": checks, "passed": ok})
    for c in checks:
        print(f"[{c['status']:>7}] {c['check']}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_build(cfg: RunConfig) -> int:
    g = cfg.growth()
    tree = treeset.build_tree(g, cfg.k)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "tree.json").write_text(tree.to_json() + "\n")
    # one level above the census scale, so [0, 2^k)^d sits inside the
    # enclosing rank as the nesting requires
    ub = subfun.build_u(g, cfg.k + 1, guard_samples=4096)
    doc = ub.to_dict()
    doc["orthant_components"] = 2**cfg.d
    doc["eps_d"] = cfg.eps_d
    write_json(cfg.out / "function.json", doc)
    if cfg.d == 2:
        svg_tree(tree, cfg.out / "tree.svg")
    print(f"wrote {cfg.out / 'tree.json'}, {cfg.out / 'function.json'}"
          + (f", {cfg.out / 'tree.svg'}" if cfg.d == 2 else ""))
    return EXIT_OK


def _load_function(path: Path):
    doc = json.loads(path.read_text())
    g = parse_growth(doc["f"], doc["d"])
    ub = subfun.build_u(g, doc["k"], guard_samples=4096)
    return g, ub, doc


def cmd_verify(cfg: RunConfig, function_path: Path, grid_h: float) -> int:
    g, ub, _doc = _load_function(function_path)
    checks = []
    # harmonic-base refinement on the tube profile; the mask pins the
    # stencil minimum to the centerline, which every refinement level
    # samples at the same physical points, so the h^2 scaling is clean
    eps = 0.5
    fn = lambda pts: subfun.eval_T(eps, pts, cfg.d)
    hs = [grid_h * 4, grid_h * 2, grid_h]
    mask = lambda pts: np.all(np.abs(pts[:, 1:]) < grid_h / 2, axis=1)
    rows = verify.laplacian_refinement_study(
        fn, np.array([-0.5] + [-eps / 2] * (cfg.d - 1)), 1.0, hs, mask)
    factors = [abs(rows[i][1]) / max(abs(rows[i + 1][1]), 1e-300)
               for i in range(len(rows) - 1)]
    checks.append(_verdict("laplacian_refinement",
                           all(3.5 <= f <= 4.5 for f in factors),
                           factors=factors, minima=[r[1] for r in rows]))
    # rogue census at the built scale
    k = ub.k - 1
    node = ub.level_nodes[k]
    census = verify.rogue_census(node, (0,) * cfg.d, (2**k,) * cfg.d, g,
                                 cfg.eps_d, keep_reports=True,
                                 threads=cfg.threads)
    nonbranch_ok = True
    branch_tubes = [t for t in node.support_tubes()
                    if t.diameter > 2 * treeset.EPS1]
    for r in census.reports:
        if not r.rogue:
            continue
        cube = LatticeCube(r.cube)
        lo, hi = cube.bounds()
        center = (lo + hi) / 2
        touches = any(float(t.distance(center[None, :])[0]) <= math.sqrt(cfg.d) / 2
                      for t in branch_tubes)
        if not touches:
            nonbranch_ok = False
            break
    checks.append(_verdict("rogue_census", census.gamma <= 10.0,
                           count=census.count, gamma=census.gamma,
                           f_value=census.f_value))
    checks.append(_verdict("nonbranch_cubes_oscillate", nonbranch_ok))
    write_csv(cfg.out / "census.csv",
              ["corner", "p1", "p2", "class"],
              [("|".join(str(c) for c in r.cube), int(r.p1_satisfied),
                int(r.p2_satisfied), r.classification) for r in census.reports])
    svg_rogue_heatmap(census.reports, cfg.out / "census.svg")
    return _emit(cfg.out, "verify", checks)


def cmd_growth(cfg: RunConfig, function_path: Path) -> int:
    g, ub, _doc = _load_function(function_path)
    prof = verify.growth_profile(ub.node, ub.k, g, nodes_per_level=ub.level_nodes)
    checks = []
    sup_ok = True
    rows = []
    for k in range(3, ub.k + 1):
        lm = subfun.log_MM(g, k)
        measured = prof.log_m[k - 1]
        rows.append((2**k, measured, lm, prof.denominators[k - 1],
                     prof.ratios[k - 1]))
        if measured > lm + 1e-9:
            sup_ok = False
    checks.append(_verdict("level_sup_below_threshold", sup_ok,
                           levels=[(r[0], r[1], r[2]) for r in rows]))
    checks.append(_verdict("growth_ratio_bounded",
                           prof.max_ratio() < 100.0,
                           max_ratio=prof.max_ratio(),
                           min_ratio=prof.min_ratio()))
    write_csv(cfg.out / "growth.csv",
              ["R", "log_M", "log_threshold", "denominator", "ratio"], rows)
    return _emit(cfg.out, "growth", checks)


def _parse_e_spec(spec: str, cfg: RunConfig) -> mainlemma.RogueConfiguration:
    kwargs = dict(c0=cfg.c0, alpha=cfg.alpha)
    if cfg.delta0 is not None:
        kwargs["delta0"] = cfg.delta0
    if spec in ("none", "empty", "0"):
        return mainlemma.RogueConfiguration(cfg.N, cfg.d, set(), **kwargs)
    if spec.startswith("random:"):
        arg = spec.split(":", 1)[1]
        if arg.startswith("density="):
            val = arg.split("=", 1)[1]
            power = {"sqrt": 0.5, "half": 0.5, "volume": float(cfg.d)}.get(val)
            power = float(val.rstrip()) if power is None and val not in ("sqrt", "half") else power
            count = int(round(cfg.N**power))
        elif arg.startswith("count="):
            count = int(arg.split("=", 1)[1])
        else:
            raise GrowthValidationError(f"bad E spec {spec!r}")
        return mainlemma.RogueConfiguration.random(cfg.N, cfg.d, count, cfg.seed, **kwargs)
    if spec.startswith("file:"):
        cubes = json.loads(Path(spec.split(":", 1)[1]).read_text())
        return mainlemma.RogueConfiguration(cfg.N, cfg.d,
                                            {tuple(c) for c in cubes}, **kwargs)
    if spec.startswith("function:"):
        _g, ub, _doc = _load_function(Path(spec.split(":", 1)[1]))
        return mainlemma.RogueConfiguration.from_function(
            ub.node, cfg.N, cfg.d, cfg.eps_d, **kwargs)
    raise GrowthValidationError(f"bad E spec {spec!r}")


def cmd_lemma(cfg: RunConfig, e_spec: str, with_contraction: bool = False,
              function_path: Path | None = None) -> int:
    config = _parse_e_spec(e_spec, cfg)
    rho = mainlemma.RhoField.compute(config)
    cover = mainlemma.build_cover(config, rho)
    result = mainlemma.kappa_chains(config, rho, cover)
    ch = result.checks
    checks = [
        _verdict("property_M", ch.property_m,
                 min_fraction=min(ch.property_m_detail.values(), default=1.0)),
        _verdict("x_fraction", ch.x_ok, fraction=ch.x_fraction),
        _verdict("kappa_count", ch.kappa_ok, bound=result.sum_inv_m / 24.0,
                 detail=ch.kappa_detail),
        _verdict("claim1", True, fitted_c1=ch.claim1_c1,
                 fitted_c2=mainlemma.fitted_c2(config, cover),
                 e_count=len(config.E)),
    ]
    bv = mainlemma.bound_value(cfg.N, len(config.E), cfg.d)
    checks.append(_verdict("bound_value", True, psi=bv.psi_value,
                           log_bound=bv.log_bound, phi_argmin=bv.phi_min_x))
    write_csv(cfg.out / "chains.csv",
              ["corner", "n_layers", "n_kappa", "b_value"],
              [("|".join(str(v) for v in c.corner), len(c.layers),
                len(c.kappas), c.b_value) for c in result.chains.values()])
    if with_contraction and function_path is not None:
        _g, ub, _doc = _load_function(function_path)
        rows = mainlemma.chain_contraction(ub.node, config, result)
        write_csv(cfg.out / "contraction.csv",
                  ["corner", "n_kappa", "log_ratio"],
                  [("|".join(str(v) for v in r.corner), r.kappa_count,
                    r.log_ratio) for r in rows])
    return _emit(cfg.out, "lemma", checks)


def cmd_potential(cfg: RunConfig, oracle: str | None, walks: int,
                  run_claims: bool) -> int:
    checks = []
    if oracle == "annulus" or oracle is None:
        target = potential.annulus_exact(cfg.d, 0.25, 0.5)
        x = np.zeros(cfg.d)
        x[0] = 0.5
        est = potential.wos_harmonic_measure(
            x, potential.SphereShape(0.25, d=cfg.d), walks=walks, seed=cfg.seed)
        checks.append(_verdict(f"wos_annulus_d{cfg.d}",
                               None if est.flagged else est.within(target),
                               estimate=est.hit_probability,
                               standard_error=est.standard_error, target=target))
    if oracle in (None, "equilibrium"):
        eq = potential.equilibrium(potential.SphereShape(0.25, d=2).sample(512), 2)
        checks.append(_verdict("equilibrium_circle",
                               abs(eq.energy - math.log(0.25)) < 0.05 * abs(math.log(0.25)),
                               energy=eq.energy, target=math.log(0.25)))
        eq2 = potential.equilibrium(
            potential.SegmentShape([-1.0, 0.0], [1.0, 0.0]).sample(512), 2)
        checks.append(_verdict("equilibrium_segment",
                               abs(eq2.energy - math.log(0.5)) < 0.05 * abs(math.log(0.5)),
                               energy=eq2.energy, target=math.log(0.5)))
    if run_claims:
        rows = potential.check_claim1(walks=max(walks // 4, 10_000), seed=cfg.seed)
        ratios = [r.ratio for r in rows]
        caps = [r.capacity_proxy / max(r.content_lower, 1e-12) for r in rows]
        checks.append(_verdict("claim_chain_positive",
                               min(ratios) > 0 and max(ratios) / min(ratios) < 50,
                               min_ratio=min(ratios), max_ratio=max(ratios)))
        checks.append(_verdict("claim4_direction", max(caps) < float("inf"),
                               family_constant=max(r.content_lower * -r.energy
                                                   for r in rows)))
        write_csv(cfg.out / "claims.csv",
                  ["label", "content_lower", "content_upper", "omega",
                   "omega_se", "energy", "ratio"],
                  [(r.label, r.content_lower, r.content_upper, r.omega,
                    r.omega_se, r.energy, r.ratio) for r in rows])
    return _emit(cfg.out, "potential", checks)


def cmd_report(cfg: RunConfig) -> int:
    merged = {}
    ok = True
    for name in ("verify", "growth", "lemma", "potential"):
        p = cfg.out / f"{name}.json"
        if p.exists():
            doc = json.loads(p.read_text())
            merged[name] = doc
            ok = ok and doc.get("passed", False)
    write_json(cfg.out / "report.json", {"tools": merged, "passed": ok})
    print(f"aggregated {len(merged)} tool reports -> {cfg.out / 'report.json'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oscillab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--d", type=int, default=2, choices=(2, 3))
        sp.add_argument("--f", default="t^1.5", help="comparison function, e.g. t^1.5")
        sp.add_argument("--seed", type=int, default=7)
        sp.add_argument("--eps-d", type=float, default=verify.EPS_D_DEFAULT)
        sp.add_argument("--threads", type=int,
                        default=int(os.environ.get("OSCILLAB_THREADS", "1")))
        sp.add_argument("--out", type=Path, default=Path("oscillab_out"))

    b = sub.add_parser("build", help="construct the tree set and glued function")
    common(b)
    b.add_argument("--k", type=int, default=4)
    b.add_argument("--function", default="u", choices=("u",))

    v = sub.add_parser("verify", help="laplacian and census verification")
    common(v)
    v.add_argument("--function", type=Path, required=True)
    v.add_argument("--grid-h", type=float, default=0.03125)

    gr = sub.add_parser("growth", help="growth profile against the bounds")
    common(gr)
    gr.add_argument("--function", type=Path, required=True)

    le = sub.add_parser("lemma", help="combinatorial lemma engine")
    common(le)
    le.add_argument("--N", type=int, default=64)
    le.add_argument("--E", default="none",
                    help="none | random:density=P | random:count=C | file:PATH | function:PATH")
    le.add_argument("--alpha", type=float, default=1.0 / 12.0)
    le.add_argument("--c0", type=float, default=0.1)
    le.add_argument("--delta0", type=float, default=None)
    le.add_argument("--with-contraction", action="store_true")
    le.add_argument("--function", type=Path, default=None)

    po = sub.add_parser("potential", help="potential-theory oracles and claims")
    common(po)
    po.add_argument("--oracle", default=None, choices=(None, "annulus", "equilibrium"))
    po.add_argument("--walks", type=int, default=100_000)
    po.add_argument("--claims", action="store_true")

    re = sub.add_parser("report", help="aggregate tool reports")
    common(re)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        d=getattr(args, "d", 2),
        f_spec=getattr(args, "f", "t^1.5"),
        k=getattr(args, "k", 4),
        N=getattr(args, "N", 64),
        seed=args.seed,
        eps_d=args.eps_d,
        delta0=getattr(args, "delta0", None),
        alpha=getattr(args, "alpha", 1.0 / 12.0),
        c0=getattr(args, "c0", 0.1),
        threads=args.threads,
        out=args.out,
    )
    try:
        if args.command == "build":
            cfg.growth()  # validate early
            return cmd_build(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.function, args.grid_h)
        if args.command == "growth":
            return cmd_growth(cfg, args.function)
        if args.command == "lemma":
            return cmd_lemma(cfg, args.E, args.with_contraction, args.function)
        if args.command == "potential":
            return cmd_potential(cfg, args.oracle, args.walks, args.claims)
        if args.command == "report":
            return cmd_report(cfg)
    except (GrowthValidationError, mainlemma.ConfigurationError,
            treeset.ParameterRangeError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
