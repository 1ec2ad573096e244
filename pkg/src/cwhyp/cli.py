"""Command line front end and run artifacts.

Every command writes one JSON artifact

    {config_echo, results, provenance: {version, timestamp, seed}, checks}

with ``checks`` a list of {name, pass, value, margin}.  The exit status is 0
iff every check passes.  ``report`` rebuilds the checks table from a saved
artifact without recomputing anything.

Set CWHYP_LOG=DEBUG (or INFO, WARNING) for log output on stderr, and
SOURCE_DATE_EPOCH to pin the provenance timestamp.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from . import __version__, spaces
from ._io import atomic_write
from .systems import MapSpec, STANDARD, UnsupportedSpec

log = logging.getLogger("cwhyp")

COMMANDS = ("simulate", "shadow", "cwmetric", "conjugacy", "analyze", "report")
RANDOMIZED = ("simulate", "shadow", "cwmetric", "conjugacy")
FIGURE_KINDS = {"simulate": "foliation", "shadow": "shadow_trace", "analyze": "leaf_intersections"}


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config and artifact


@dataclass
class RunConfig:
    command: str
    spec: Optional[MapSpec]
    params: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    out_dir: Path = Path(".")

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise SchemaError(f"unknown command {self.command!r}")
        if self.command in RANDOMIZED and self.seed is None:
            raise SchemaError(f"{self.command} is randomized and needs --seed")
        if self.seed is not None and (not isinstance(self.seed, int) or self.seed < 0):
            raise SchemaError("seed must be a non-negative integer")
        needs_spec = self.command in ("simulate", "shadow", "cwmetric")
        if needs_spec and self.spec is None:
            raise SchemaError(f"{self.command} needs --spec")
        if self.command == "shadow":
            d = self.params.get("delta")
            if d != "auto" and not (isinstance(d, (int, float)) and d >= 0):
                raise SchemaError("--delta must be 'auto' or a non-negative number")
            if not self.params.get("beta", 0) > 0:
                raise SchemaError("--beta must be positive")
            if int(self.params.get("len", 0)) < 1:
                raise SchemaError("--len must be >= 1")
        if self.command == "analyze" and self.params.get("mode") not in ("cwn", "product", "census"):
            raise SchemaError("analyze needs one of cwn, product, census")

    def echo(self) -> dict:
        return {"command": self.command, "spec": None if self.spec is None else self.spec.to_dict(),
                "params": _jsonable(self.params), "seed": self.seed}


@dataclass
class RunArtifact:
    config_echo: dict
    results: dict
    provenance: dict
    checks: List[dict]

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict:
        return {"config_echo": self.config_echo, "results": self.results,
                "provenance": self.provenance, "checks": self.checks}

    def dumps(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=1) + "\n"

    @classmethod
    def load(cls, path) -> "RunArtifact":
        d = json.loads(Path(path).read_text())
        for k in ("config_echo", "results", "provenance", "checks"):
            if k not in d:
                raise SchemaError(f"artifact lacks {k!r}")
        return cls(d["config_echo"], d["results"], d["provenance"], d["checks"])


def _jsonable(x):
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(x, Path):
        return str(x)
    if isinstance(x, MapSpec):
        return x.to_dict()
    return x


def check(name: str, value: float, bound: float, kind: str = "le") -> dict:
    """One row of the checks table; margin > 0 means room to spare."""
    value = float(value)
    bound = float(bound)
    if kind == "le":
        ok, margin = value <= bound, bound - value
    elif kind == "ge":
        ok, margin = value >= bound, value - bound
    elif kind == "eq":
        ok, margin = value == bound, -abs(value - bound)
    else:
        raise ValueError(kind)
    return {"name": name, "pass": bool(ok), "value": value, "bound": bound, "kind": kind,
            "margin": margin}


def _csv(header: List[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _timestamp() -> str:
    sde = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(sde) if sde else time.time()
    return datetime.fromtimestamp(t, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# pipelines; each returns (results, checks, side tables)


def _conj_for(spec: MapSpec):
    if spec.space == spaces.PRODUCT or spec.t == 0.0:
        return None
    from .conjugacy import default_field
    return default_field(spec.t)


def _run_simulate(cfg: RunConfig):
    from . import foliation
    from .continua import continuum_diam
    from .systems import orbit_arr
    spec = cfg.spec
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    x0 = np.array(p["x0"], dtype=float) if p.get("x0") is not None else rng.random(2)
    n = int(p.get("len", 100))
    O = spaces.project_arr(orbit_arr(spec, x0, n), spec.chart)
    res = {"chart": spec.chart, "x0": x0, "orbit": O}
    checks = [check("orbit_finite", float(np.isfinite(O).all()), 1.0, "eq")]
    g = int(p.get("leaves", 0))
    if g:
        conj = _conj_for(spec)
        eps = float(p.get("leaf_eps", 0.1))
        c = (np.arange(g) + 0.5) / g
        # a few grid rows near a singular class make the branching visible
        base = [np.array([u, v]) for u in c for v in c] + [np.array([0.01, 0.02]), np.array([0.49, 0.52])]
        leaves = []
        worst = 0.0
        for b in base:
            for kind in (foliation.STABLE, foliation.UNSTABLE):
                L = foliation.leaf(spec, b, kind, eps, conj=conj)
                V = L.continuum.vertices
                leaves.append({"kind": kind, "base": b, "vertices": V})
                worst = max(worst, continuum_diam(L.continuum))
        res["leaves"] = leaves
        res["leaf_eps"] = eps
        checks.append(check("leaf_diam_le_eps", worst, eps * (1 + 1e-12)))
    tables = {"orbit.csv": _csv(["k", "x", "y"], ((k, *map(float, q)) for k, q in enumerate(O)))}
    return res, checks, tables


def _resolve_delta(p, ladder):
    from .shadowing import UNDERFLOW
    d = p["delta"]
    if d != "auto":
        return float(d)
    # the certified alpha if it is usable, else the documented operating point
    return float(ladder.alpha) if ladder.alpha >= UNDERFLOW else 1e-4


def _run_shadow(cfg: RunConfig):
    from . import cwmetric, shadowing as sh
    spec = cfg.spec
    p = cfg.params
    conj = _conj_for(spec)
    ctx = cwmetric.make_context(spec, float(p.get("c", 0.1)), rng_seed=cfg.seed)
    ladder = sh.derive_ladder(float(p["beta"]), ctx, spec, conj=conj, rng_seed=cfg.seed)
    delta = _resolve_delta(p, ladder)
    runs = int(p.get("runs", 1))
    n = int(p["len"])
    decaying = bool(p.get("decaying", False))
    rng = np.random.default_rng(cfg.seed)
    starts = rng.random((runs, 2))
    pos = [sh.gen_pseudo_orbit(spec, starts[i], n, delta, decaying, cfg.seed * 100003 + i)
           for i in range(runs)]
    t0 = time.perf_counter()
    out = sh.shadow_constructive_batch(pos, ladder, conj, on_failure="mark")
    log.info("shadowed %d runs of length %d in %.2fs", runs, n, time.perf_counter() - t0)
    beta = float(p["beta"])
    run_rows = []
    hist: Dict[int, int] = {}
    failures = sum(1 for r in out if not math.isfinite(r.max_dev))
    vmax = 0.0
    verified = 0
    lim = 0
    for i, (po, r) in enumerate(zip(pos, out)):
        ok, md, info = sh.verify_shadowing(po, r.z, beta) if math.isfinite(r.max_dev) else (False, math.inf, None)
        verified += bool(ok)
        vmax = max(vmax, md)
        if decaying and info is not None:
            lim += bool(sh.limit_criterion(info["deviations"], po.step_errors))
        for k, v in r.branch_hist.items():
            hist[k] = hist.get(k, 0) + v
        row = {"seed": po.seed, "x0": po.points[0], "z": r.z, "max_dev": r.max_dev,
               "verified_max_dev": md, "verified": bool(ok), "limit_ok": r.limit_ok,
               "branch_hist": {str(k): v for k, v in sorted(r.branch_hist.items())},
               "delta_observed": po.delta}
        if i == 0:
            row["pseudo_orbit"] = po.points
            row["shadow_orbit"] = info["orbit"] if info is not None else po.points
        run_rows.append(row)
    max_dev = max(r.max_dev for r in out)
    res = {"chart": spec.chart, "ladder": ladder.to_dict(), "context": ctx.to_dict(),
           "delta": delta, "len": n, "decaying": decaying,
           "operational": dict(zip(("leaf_eps", "block", "certified"), ladder.operational(max(po.delta for po in pos)))),
           "branch_hist": {str(k): v for k, v in sorted(hist.items())},
           "bracket_failures": failures, "max_dev": max_dev, "runs": run_rows}
    checks = [check("max_dev_le_beta", max_dev, beta),
              check("bracket_failures", failures, 0, "eq"),
              check("verified_runs", verified, runs, "eq"),
              check("verified_max_dev_le_beta", vmax, beta)]
    if delta == 0.0:
        checks.append(check("max_dev_zero_noise", max_dev, 1e-9))
    if decaying:
        checks.append(check("limit_ok_runs", sum(r.limit_ok for r in out), runs, "eq"))
        checks.append(check("limit_ok_verified_runs", lim, runs, "eq"))
    rows = []
    for i, r in enumerate(out):
        rows += [(i, k, float(d)) for k, d in enumerate(r.deviations)]
    tables = {"deviations.csv": _csv(["run", "k", "deviation"], rows)}
    return res, checks, tables


def _run_cwmetric(cfg: RunConfig):
    from . import cwmetric
    spec = cfg.spec
    p = cfg.params
    ctx = cwmetric.make_context(spec, float(p.get("eps", 0.1)), rng_seed=cfg.seed)
    rep = cwmetric.check_cw_metric_theorem(spec, ctx, int(p.get("samples", 1000)), rng_seed=cfg.seed)
    checks = [check(f"violations_{k}", v, 0, "eq") for k, v in sorted(rep["violations"].items())]
    return rep, checks, {}


def _run_conjugacy(cfg: RunConfig):
    from . import conjugacy as cj
    from .systems import torus
    p = cfg.params
    spec = cfg.spec if cfg.spec is not None else torus(float(p.get("t", 1.0)))
    if spec.space != spaces.TORUS:
        spec = torus(spec.t)
    q = cj.franks_solve(spec, K=int(p.get("terms", 40)), grid_n=int(p.get("grid", 512)))
    probe_n = int(p.get("probe_grid", 512))
    resid = cj.verify_semiconjugacy(spec, q, probe_n)
    odd = q.oddness_residual()
    rng = np.random.default_rng(cfg.seed)
    Y = rng.random((int(p.get("probes", 10000)), 2))
    X = cj.invert_h(q, Y, check=False)
    rt = float(spaces.torus_dist_arr(cj.h_full(q, X), Y).max())
    con = cj.measure_contraction(spec, 10, probe_n)
    res = {"t": spec.t, "grid_n": q.grid_n, "K": q.K, "residual": resid, "grid_residual": q.residual,
           "oddness": odd, "round_trip": rt, "contraction": con,
           "truncation_bound": cj.truncation_bound(spec, q.K), "sup_norm": q.sup_norm()}
    checks = [check("semiconjugacy_residual", resid, 1e-6), check("oddness", odd, 1e-10),
              check("inversion_round_trip", rt, 1e-9),
              check("contraction_factor", con["max_factor"], 1.1)]
    field_path = p.get("field_out")
    if field_path:
        q.save(field_path)
        res["field_file"] = os.path.basename(str(field_path))
    return res, checks, {}


def _run_analyze(cfg: RunConfig):
    from . import analyzer
    p = cfg.params
    mode = p["mode"]
    if mode == "cwn":
        spec = cfg.spec
        conj = _conj_for(spec)
        eps = float(p.get("eps", 0.1))
        rep = analyzer.cwN_certificate(spec, eps, int(p.get("grid", 200)), conj,
                                       threads=int(p.get("threads", 1)))
        res = rep.to_json()
        res["chart"] = spec.chart
        checks = [check("witnesses_reverify", float(rep.reverify(conj)), 1.0, "eq")]
        if p.get("expect") is not None:
            checks.append(check("max_count", rep.max_count, int(p["expect"]), "eq"))
        if spec.chart == spaces.SPHERE and rep.max_count >= 2:
            d = rep.singular_distances()
            res["singular_distance_max"] = float(d.max())
            checks.append(check("witnesses_near_singular", float(d.max()), eps))
            checks.append(check("witness_count", len(rep.witness_points), 10, "ge"))
        return res, checks, {}
    if mode == "product":
        specs = p["factors"]
        conj = [_conj_for(s) for s in specs]
        eps = float(p.get("eps", 0.1))
        grid = int(p.get("grid", 50))
        rep = analyzer.product_cw_analysis(specs, eps, grid, conj, threads=int(p.get("threads", 1)))
        factor_counts = [analyzer.cwN_certificate(s, eps, grid, c).max_count for s, c in zip(specs, conj)]
        res = rep.to_json()
        res["factor_max_counts"] = factor_counts
        checks = [check("product_count_multiplies", rep.max_count, int(np.prod(factor_counts)), "eq"),
                  check("witnesses_reverify", float(rep.reverify(conj)), 1.0, "eq")]
        if p.get("expect") is not None:
            checks.append(check("max_count", rep.max_count, int(p["expect"]), "eq"))
        return res, checks, {}
    from .shadowing import periodic_census
    spec = cfg.spec
    ks = p.get("k") or [1]
    res = {"chart": spec.chart, "censuses": []}
    checks = []
    for k in ks:
        c = periodic_census(spec, int(k))
        entry = c.to_json()
        entry["separation"] = analyzer.fixed_point_separation(spec, int(k), census=c)
        if spec.chart == spaces.TORUS and spec.t == 0.0:
            A = spec.A
            expect = round(abs(np.linalg.det(np.linalg.matrix_power(A, int(k)) - np.eye(2))))
            checks.append(check(f"census_k{k}_determinant", c.count, expect, "eq"))
        elif p.get("refine", True):
            c2 = periodic_census(spec, int(k), newton_grid=2 * c.grid)
            entry["refined_count"] = c2.count
            checks.append(check(f"census_k{k}_grid_stable", c2.count, c.count, "eq"))
        res["censuses"].append(entry)
    return res, checks, {}


PIPELINES: Dict[str, Callable] = {"simulate": _run_simulate, "shadow": _run_shadow,
                                  "cwmetric": _run_cwmetric, "conjugacy": _run_conjugacy,
                                  "analyze": _run_analyze}


def _figure_kind(config: RunConfig) -> str:
    kind = FIGURE_KINDS.get(config.command)
    if kind is None or (config.command == "analyze" and config.params.get("mode") != "cwn"):
        raise SchemaError(f"--svg is not available for {config.command}")
    return kind


def run(config: RunConfig, out: Optional[Path] = None, svg: Optional[Path] = None) -> RunArtifact:
    config.validate()
    kind = _figure_kind(config) if svg is not None else None
    if config.command == "report":
        raise SchemaError("report works on an existing artifact; use report_artifact")
    try:
        results, checks, tables = PIPELINES[config.command](config)
    except SchemaError:
        raise
    except Exception as exc:
        raise RuntimeError(f"{config.command} failed: {exc}") from exc
    art = RunArtifact(config.echo(), _jsonable(results),
                      {"version": __version__, "timestamp": _timestamp(), "seed": config.seed},
                      _jsonable(checks))
    svg_doc = None
    if svg is not None:
        from .figures import emit_figure
        try:
            svg_doc = emit_figure(art.to_dict(), kind)
        except KeyError as exc:
            raise SchemaError(f"cannot draw {kind}: {exc}") from exc
    # render everything first so a failure leaves no partial outputs
    if out is not None:
        out = Path(out)
        for name, text in tables.items():
            atomic_write(out.with_name(out.stem + "." + name), text)
        if svg_doc is not None:
            atomic_write(svg, svg_doc)
        atomic_write(out, art.dumps())
    elif svg_doc is not None:
        atomic_write(svg, svg_doc)
    return art


def checks_table(checks: List[dict]) -> str:
    lines = [f"{'check':32s} {'result':6s} {'value':>14s} {'margin':>14s}"]
    for c in checks:
        lines.append(f"{c['name']:32s} {'PASS' if c['pass'] else 'FAIL':6s} "
                     f"{_fmt(c['value']):>14s} {_fmt(c['margin']):>14s}")
    return "\n".join(lines)


def _fmt(v) -> str:
    return v if isinstance(v, str) else f"{float(v):.6g}"


def report_artifact(path) -> RunArtifact:
    art = RunArtifact.load(path)
    rebuilt = []
    for c in art.checks:
        value, bound = c["value"], c["bound"]
        if isinstance(value, str) or isinstance(bound, str):
            rebuilt.append(c)
            continue
        rebuilt.append(check(c["name"], value, bound, c.get("kind", "le")))
    art.checks = rebuilt
    return art


# ---------------------------------------------------------------------------
# argument parsing


def load_spec(arg: Optional[str]) -> Optional[MapSpec]:
    """A MapSpec from a JSON file, inline JSON, or a name 'torus'/'sphere'[:t]."""
    if arg is None:
        return None
    if arg.lstrip().startswith("{"):
        return MapSpec.from_json(arg)
    name, _, t = arg.partition(":")
    if name in (spaces.TORUS, spaces.SPHERE) and not Path(arg).exists():
        return MapSpec(name, STANDARD, float(t or 0.0))
    try:
        return MapSpec.from_json(Path(arg).read_text())
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise SchemaError(f"cannot read spec {arg!r}: {exc}") from exc


def _point(s: str):
    try:
        a, b = (float(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'x,y'")
    return [a, b]


def _delta(s: str):
    if s == "auto":
        return s
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'auto'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwhyp", description="cw-hyperbolic dynamics laboratory")
    ap.add_argument("--version", action="version", version=f"cwhyp {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="MapSpec JSON file, inline JSON, or torus[:t] / sphere[:t]")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="artifact path (JSON)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--svg", type=Path, help="also write a figure")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="orbit and leaves")
    s.add_argument("--x0", type=_point)
    s.add_argument("--len", type=int, default=100)
    s.add_argument("--leaves", type=int, default=0, help="leaf base grid per side")
    s.add_argument("--leaf-eps", type=float, default=0.1)

    s = sub.add_parser("shadow", parents=[common], help="constructive shadowing")
    s.add_argument("--beta", type=float, default=0.05)
    s.add_argument("--delta", type=_delta, default="auto")
    s.add_argument("--len", type=int, default=1000)
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--c", type=float, default=0.1, help="cw constant")
    s.add_argument("--decaying", action="store_true")

    s = sub.add_parser("cwmetric", parents=[common], help="cw-metric inequality suite")
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--samples", type=int, default=1000)

    s = sub.add_parser("conjugacy", parents=[common], help="Franks semiconjugacy")
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--grid", type=int, default=512)
    s.add_argument("--terms", type=int, default=40)
    s.add_argument("--probes", type=int, default=10000)
    s.add_argument("--probe-grid", type=int, default=512)

    s = sub.add_parser("analyze", parents=[common], help="cwN certificates, products, census")
    s.add_argument("mode", choices=("cwn", "product", "census"))
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--grid", type=int, default=None)
    s.add_argument("--factor", action="append", default=[], help="product factor spec (repeat)")
    s.add_argument("--k", type=int, action="append", help="census period (repeat)")
    s.add_argument("--expect", type=int)

    s = sub.add_parser("report", help="checks table of an artifact")
    s.add_argument("artifact", type=Path)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    skip = {"command", "spec", "seed", "out", "svg"}
    params = {k: v for k, v in vars(ns).items() if k not in skip and v is not None}
    spec = load_spec(getattr(ns, "spec", None))
    if ns.command == "conjugacy":
        spec = spec or MapSpec(spaces.TORUS, STANDARD, ns.t)
        if ns.out is not None and ns.out.suffix == ".field":
            params["field_out"] = str(ns.out)
    if ns.command == "analyze":
        if ns.mode == "product":
            if len(ns.factor) < 2:
                raise SchemaError("product needs at least two --factor specs")
            params["factors"] = [load_spec(f) for f in ns.factor]
            params.pop("factor", None)
        else:
            params.pop("factor", None)
            if spec is None:
                raise SchemaError(f"analyze {ns.mode} needs --spec")
        params.setdefault("grid", 200 if ns.mode == "cwn" else 50)
    return RunConfig(ns.command, spec, params, getattr(ns, "seed", None), Path("."))


def _artifact_path(ns) -> Optional[Path]:
    out = getattr(ns, "out", None)
    if out is not None and out.suffix == ".field":
        return out.with_name(out.name + ".json")
    return out


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("CWHYP_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        if ns.command == "report":
            art = report_artifact(ns.artifact)
        else:
            cfg = config_from_args(ns)
            art = run(cfg, _artifact_path(ns), getattr(ns, "svg", None))
    except (SchemaError, UnsupportedSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(checks_table(art.checks))
    return 0 if art.ok else 1
