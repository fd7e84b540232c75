"""Reproducible experiment runner.

An :class:`ExperimentConfig` is a flat ``key = value`` text file; command
line flags override it. :func:`run_experiment` returns a :class:`Report`
whose CSV tables and JSON summary depend only on the config, so reruns with
the same seed are byte-identical whatever the worker count. Wall-clock time
is kept on the report object but never written.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import core, frames
from .core import Ball
from .lines import HorizontalLine, line_point
from .monotonicity import nm_ball, width_ball
from .multiscale import (
    build_cubes,
    carleson_sum,
    cube_is_bad,
    extract_graph_piece,
    fit_beta,
    verify_forest,
    width_carleson,
)
from .regions import Cloud, favard_average, make_region, make_surface, surface_sample
from .stats import Estimate, substream

MODES = ("verify", "nm", "width-carleson", "bwgl", "favard", "extract", "flatness")
SURFACES = ("vertical-hyperplane", "horizontal-plane", "hyperplane", "koranyi-sphere", "intrinsic-graph")

# execution settings that must not change written outputs
RUNTIME_KEYS = ("workers", "out")

# cheaper beta fits for sweeps over many cubes
SWEEP_FIT = {"n_normals": 128, "spacing": 1 / 32, "coarse_spacing": 1 / 8, "maxfev": 100, "n_data": 512}


@dataclass
class ExperimentConfig:
    k: int = 1
    seed: int = 0
    surface: str = "koranyi-sphere"
    region: str = "ball"
    eps: float = 0.1
    delta: float = 1 / 64
    radii: tuple = (0.25, 0.5)
    scales: tuple = (0.5, 0.25, 0.125, 0.0625, 0.03125)
    levels: tuple = (-1, -2, -3)
    n_lines: int = 10_000
    n_dirs: int = 64
    n_centers: int = 300
    cloud_size: int = 600
    n_cases: int = 10_000
    gamma: float = 0.5
    n_design: int = 20
    suite: str = "all"
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_lines", "n_dirs", "n_centers", "cloud_size", "n_cases", "n_design", "workers", "k"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("eps", "delta", "gamma"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("radii", "scales"):
            if not getattr(self, name) or any(not float(x) > 0 for x in getattr(self, name)):
                raise ValueError(f"{name} must be a nonempty list of positive numbers")
        if self.surface not in SURFACES:
            raise ValueError(f"unknown surface kind {self.surface!r}")

    # -- serialization -----------------------------------------------------

    def as_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v) for f in dataclasses.fields(self) for v in [getattr(self, f.name)]}

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        values = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: _coerce(k, v) for k, v in values.items()})

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _coerce(key: str, value):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if key not in fields:
        raise ValueError(f"unknown config key {key!r}")
    default = fields[key].default
    if isinstance(default, tuple):
        if isinstance(value, str):
            value = [x for x in value.split(",") if x.strip()]
        cast = int if all(isinstance(x, int) for x in default) else float
        return tuple(cast(x) for x in value)
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class Report:
    experiment: str
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": {k: v for k, v in self.config.as_dict().items() if k not in RUNTIME_KEYS},
            "results": self.results,
            "verdicts": [v.as_dict() for v in self.verdicts],
        }

    def to_json(self) -> str:
        return json.dumps(_plain(self.summary()), indent=2, sort_keys=True) + "\n"

    def write(self, out=None) -> list[Path]:
        """Write one CSV per table and ``summary.json``; returns the paths."""
        root = Path(out or self.config.out)
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValueError(f"cannot create output directory {root}: {exc}") from exc
        paths = []
        for name, (header, rows) in sorted(self.tables.items()):
            path = root / f"{self.experiment}_{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([_cell(x) for x in row])
            paths.append(path)
        path = root / f"{self.experiment}_summary.json"
        path.write_text(self.to_json())
        paths.append(path)
        return paths


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, Estimate):
        return x.as_dict()
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


# ---------------------------------------------------------------------------
# surfaces named in configs


def config_surface(cfg: ExperimentConfig):
    """Canonical instance of the configured surface kind, with a point on it."""
    k = cfg.k
    n = 2 * k + 1
    e1 = np.eye(2 * k)[0]
    zero = np.zeros(n)
    kind = cfg.surface
    if kind == "vertical-hyperplane":
        return make_surface(kind, nu=e1, b=0.0), zero
    if kind == "horizontal-plane":
        return make_surface(kind, center=zero), zero
    if kind == "hyperplane":
        m = np.ones(n) / math.sqrt(n)
        return make_surface(kind, m=m, b=0.0), zero
    if kind == "koranyi-sphere":
        return make_surface(kind, center=zero, radius=1.0), np.concatenate([e1, [0.0]])
    if kind == "intrinsic-graph":
        return make_surface(kind, nu=e1, phi="quadratic", coeffs=[0.5]), zero
    raise ValueError(f"unknown surface kind {kind!r}")


# ---------------------------------------------------------------------------
# invariant suites


def algebra_checks(k: int, n: int, seed: int = 0, rtol: float = 1e-9) -> list[Verdict]:
    """Group axioms, left invariance, triangle inequality, dilations."""
    rng = substream(seed, "verify-algebra")
    d = 2 * k + 1
    p, q, r = (rng.normal(size=(n, d)) for _ in range(3))
    lam = np.exp(rng.uniform(-2, 2, n))
    e = np.zeros(d)

    def close(a, b):
        return np.abs(a - b) <= rtol * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))

    out = []
    assoc = close(core.mul(core.mul(p, q), r), core.mul(p, core.mul(q, r))).all()
    out.append(Verdict("associativity", bool(assoc)))
    ident = close(core.mul(p, e), p).all() and close(core.mul(e, p), p).all()
    out.append(Verdict("identity", bool(ident)))
    inv_ok = np.all(np.abs(core.mul(p, core.inv(p))) <= rtol * (1 + np.abs(p).max()))
    out.append(Verdict("inverse", bool(inv_ok)))
    dpq = core.kdist(p, q)
    left = close(core.kdist(core.mul(r, p), core.mul(r, q)), dpq).all()
    out.append(Verdict("left-invariance", bool(left)))
    tri = np.all(dpq <= (core.kdist(p, r) + core.kdist(r, q)) * (1 + rtol))
    out.append(Verdict("triangle-inequality", bool(tri)))
    dil = hom = True
    for lam_i in lam[:64]:
        dp, dq = core.dilate(lam_i, p), core.dilate(lam_i, q)
        dil &= bool(close(core.kdist(dp, dq), lam_i * dpq).all())
        hom &= bool(close(core.dilate(lam_i, core.mul(p, q)), core.mul(dp, dq)).all())
    out.append(Verdict("dilation-homogeneity", dil))
    out.append(Verdict("dilation-automorphism", hom))
    return out


def projection_checks(k: int, n: int, seed: int = 0, tol: float = 1e-12) -> list[Verdict]:
    """Splitting ``p = pi_W(p) . pi_L(p)``, idempotence and the worked value."""
    rng = substream(seed, "verify-projection")
    d = 2 * k + 1
    out = []
    rec_err = idem_err = 0.0
    for start in range(0, n, 4096):
        m = min(4096, n - start)
        nus = rng.normal(size=(m, 2 * k))
        nus /= np.linalg.norm(nus, axis=1, keepdims=True)
        p = rng.normal(size=(m, d))
        a = np.sum(p[:, :-1] * nus, axis=1)
        hv = a[:, None] * nus
        w = np.concatenate([p[:, :-1] - hv, (p[:, -1] - 0.5 * core.omega(p[:, :-1], hv))[:, None]], axis=1)
        lpart = np.concatenate([hv, np.zeros((m, 1))], axis=1)
        rec_err = max(rec_err, float(np.max(np.abs(core.mul(w, lpart) - p) / np.maximum(1.0, np.abs(p)))))
        # projecting the projection again
        a2 = np.sum(w[:, :-1] * nus, axis=1)
        hv2 = a2[:, None] * nus
        w2 = np.concatenate([w[:, :-1] - hv2, (w[:, -1] - 0.5 * core.omega(w[:, :-1], hv2))[:, None]], axis=1)
        idem_err = max(idem_err, float(np.max(np.abs(w2 - w))))
    # the library routines themselves on a subsample of fixed directions
    nu = np.eye(2 * k)[0]
    q = rng.normal(size=(min(n, 10_000), d))
    pw, pl = frames.split(nu, q)
    rec_err = max(rec_err, float(np.max(np.abs(core.mul(pw, pl) - q) / np.maximum(1.0, np.abs(q)))))
    idem_err = max(idem_err, float(np.max(np.abs(frames.vertical_project(nu, pw) - pw))))
    out.append(Verdict("recomposition", rec_err <= tol, f"max error {rec_err:.3e}"))
    out.append(Verdict("idempotence", idem_err <= tol, f"max error {idem_err:.3e}"))
    if k == 1:
        val = frames.vertical_project([1.0, 0.0], [1.0, 1.0, 0.0])
        err = float(np.max(np.abs(val - np.array([0.0, 1.0, 0.5]))))
        out.append(Verdict("worked-projection", err <= tol, f"{val.tolist()}"))
    return out


def line_checks(k: int, n: int, seed: int = 0) -> list[Verdict]:
    rng = substream(seed, "verify-lines")
    worst = 0.0
    for _ in range(min(n, 1000)):
        nu = rng.normal(size=2 * k)
        line = HorizontalLine.through(rng.normal(size=2 * k + 1), nu / np.linalg.norm(nu))
        s = rng.normal(size=(10, 2)) * 3
        d = core.kdist(line_point(line, s[:, 0]), line_point(line, s[:, 1]))
        worst = max(worst, float(np.max(np.abs(d - np.abs(s[:, 0] - s[:, 1])))))
    return [Verdict("line-isometry", worst <= 1e-10, f"max error {worst:.3e}")]


# ---------------------------------------------------------------------------
# experiments


def flatness_probe(S, p, r: float, gamma: float = 0.5, n_lines: int = 2000, seed: int = 0):
    """Width of S in B(p, r) paired with its bilateral beta in B(p, gamma r)."""
    p = np.asarray(p, dtype=float)
    w = width_ball(S, Ball(p, r), n_lines, seed)
    # vertical planes are admissible, so the vertical optimum seeds the search
    v = fit_beta(S, p, gamma * r, "bilateral-vertical", seed=seed, **SWEEP_FIT)
    b = fit_beta(S, p, gamma * r, "bilateral-arbitrary", seed=seed, start=[v.plane], **SWEEP_FIT)
    return w, b


def _sphere_design(k: int, n: int):
    """Points spread in latitude on the unit sphere paired with radii."""
    out = []
    rs = np.geomspace(0.05, 0.8, n)
    for i in range(n):
        phi = (i % 5) * 0.3
        v = np.zeros(2 * k)
        v[0] = math.sqrt(math.cos(phi))
        out.append((np.concatenate([v, [math.sin(phi) / 4]]), float(rs[i])))
    return out


def run_experiment(config: ExperimentConfig, mode: str) -> Report:
    """Run one experiment and return its report (nothing is written)."""
    if mode not in MODES:
        raise ValueError(f"unknown experiment {mode!r}")
    cfg = config
    cfg.validate()
    t0 = time.perf_counter()
    rep = Report(mode, cfg)
    getattr(_Runner(cfg, rep), mode.replace("-", "_"))()
    rep.wall_clock = time.perf_counter() - t0
    return rep


class _Runner:
    def __init__(self, cfg: ExperimentConfig, rep: Report):
        self.cfg = cfg
        self.rep = rep

    def verify(self):
        cfg = self.cfg
        suites = {"algebra": algebra_checks, "projection": projection_checks, "lines": line_checks}
        chosen = list(suites) if cfg.suite == "all" else [cfg.suite]
        rows = []
        for name in chosen:
            if name not in suites:
                raise ValueError(f"unknown suite {name!r}")
            for v in suites[name](cfg.k, cfg.n_cases, cfg.seed):
                self.rep.verdicts.append(v)
                rows.append((name, v.name, int(v.passed), v.detail))
        self.rep.tables["checks"] = (("suite", "check", "passed", "detail"), rows)
        self.rep.results["n_cases"] = cfg.n_cases

    def nm(self):
        cfg = self.cfg
        k = cfg.k
        zero = np.zeros(2 * k + 1)
        B = Ball(zero, 1.0)
        if cfg.region == "ball":
            A = make_region("ball", center=zero, radius=0.5)
        elif cfg.region == "half-space":
            m = np.ones(2 * k + 1) / math.sqrt(2 * k + 1)
            A = make_region("half-space", m=m, b=0.1)
        else:
            raise ValueError(f"unknown region kind {cfg.region!r}")
        rows = []
        for name, reg in (("region", A), ("complement", A.complement())):
            est = nm_ball(reg, B, cfg.n_lines, cfg.seed, cfg.workers)
            rows.append((f"nm_{name}", est.value, est.std_error, est.n_samples, est.seed))
            self.rep.results[f"nm_{name}"] = est
        wid = width_ball(A.boundary, B, cfg.n_lines, cfg.seed, cfg.workers)
        rows.append(("width_boundary", wid.value, wid.std_error, wid.n_samples, wid.seed))
        self.rep.results["width_boundary"] = wid
        self.rep.tables["nm"] = (("quantity", "value", "std_error", "n_samples", "seed"), rows)
        for name in ("region", "complement"):
            est = self.rep.results[f"nm_{name}"]
            slack = 3 * math.hypot(est.std_error, wid.std_error)
            self.rep.verdicts.append(Verdict(f"nm-{name}-below-width", est.value <= wid.value + slack,
                                             f"{est.value:.4g} <= {wid.value:.4g} + {slack:.3g}"))

    def width_carleson(self):
        cfg = self.cfg
        S, p = config_surface(cfg)
        rows = []
        vals = {}
        for R in sorted(cfg.radii):
            res = width_carleson(S, p, R, cfg.eps, cfg.scales, cfg.seed, n_lines=cfg.n_lines,
                                 n_centers=cfg.n_centers, workers=cfg.workers)
            vals[R] = res["value"]
            rows.append((R, res["value"], res["reference"]))
            self.rep.results[f"R={R!r}"] = res
        self.rep.tables["width_carleson"] = (("R", "lhs", "R^(2k+1)/eps"), rows)
        target = 2 ** (2 * cfg.k + 1)
        for R in sorted(vals):
            if 2 * R in vals and vals[R] > 0:
                ratio = vals[2 * R] / vals[R]
                ok = target / 2 <= ratio <= 2 * target
                self.rep.verdicts.append(Verdict(f"scaling-ratio-R={2 * R!r}", ok, f"ratio {ratio:.4g} vs {target}"))

    def bwgl(self):
        cfg = self.cfg
        S, _ = config_surface(cfg)
        k = cfg.k
        cloud = surface_sample(S, Ball(np.zeros(2 * k + 1), 1.0 + 1e-9), cfg.cloud_size, cfg.seed)
        forest = build_cubes(cloud, cfg.levels)
        inv = verify_forest(forest)
        self.rep.verdicts.append(Verdict("cube-invariants", inv["ok"], json.dumps({a: b for a, b in inv.items() if a != "ok"})))
        mode = "bilateral-vertical"
        betas, cube_rows = {}, []
        for q in forest.cubes:
            bad, b, screened = cube_is_bad(forest, q, S, cfg.eps, mode, seed=cfg.seed, **SWEEP_FIT)
            betas[q.id] = {mode: b}
            cube_rows.append((q.id, q.level, -1 if q.parent is None else q.parent, len(q.members), b, int(screened), int(bad)))
        self.rep.tables["cubes"] = (("cube", "level", "parent", "members", "beta", "screened", "bad"), cube_rows)
        rows, consts = [], {}
        # roots at every level except the finest, all sums down to the finest
        for j in sorted(forest.levels, reverse=True)[:-1]:
            per = []
            for root in forest.at_level(j):
                total = carleson_sum(forest, root, cfg.eps, betas=betas, mode=mode)
                per.append(total / root.side ** (2 * k + 1))
                rows.append((root.id, j, root.side, total, per[-1]))
            consts[j] = float(np.max(per))
        self.rep.tables["carleson"] = (("root", "level", "side", "sum", "ratio"), rows)
        self.rep.results["carleson_constant_by_level"] = consts
        self.rep.results["n_cubes"] = len(forest.cubes)
        vals = list(consts.values())
        if max(vals) == 0:
            self.rep.verdicts.append(Verdict("carleson-constant-stable", True, "all sums vanish"))
        elif min(vals) > 0:
            spread = max(vals) / min(vals)
            self.rep.verdicts.append(Verdict("carleson-constant-stable", spread <= 2.0, f"max/min {spread:.3g}"))
        else:
            self.rep.verdicts.append(Verdict("carleson-constant-stable", False, "sums vanish at some root scales only"))

    def favard(self):
        cfg = self.cfg
        S, p = config_surface(cfg)
        B = Ball(p, 1.0)
        est = favard_average(S, B, cfg.n_dirs, cfg.delta, cfg.seed)
        self.rep.results["favard"] = est
        self.rep.tables["favard"] = (("surface", "value", "std_error", "n_dirs", "delta", "seed"),
                                     [(cfg.surface, est.value, est.std_error, cfg.n_dirs, cfg.delta, cfg.seed)])
        self.rep.verdicts.append(Verdict("favard-positive", est.value > 3 * est.std_error,
                                         f"{est.value:.4g} +- {est.std_error:.3g}"))

    def extract(self):
        cfg = self.cfg
        S, p = config_surface(cfg)
        cloud = surface_sample(S, Ball(p, 1.0), cfg.cloud_size, cfg.seed)
        nu = np.eye(2 * cfg.k)[0]
        keep = extract_graph_piece(cloud.points, cfg.gamma, nu)
        bad = frames.check_intrinsic_graph(cloud.points[keep], 1.0 / cfg.gamma, nu)
        self.rep.results.update({"n_points": len(cloud), "n_kept": len(keep), "violations": len(bad)})
        self.rep.tables["extract"] = (("surface", "gamma", "n_points", "n_kept"), [(cfg.surface, cfg.gamma, len(cloud), len(keep))])
        self.rep.verdicts.append(Verdict("graph-condition", not bad, f"{len(bad)} violating pairs"))

    def flatness(self):
        cfg = self.cfg
        S = make_surface("koranyi-sphere", center=np.zeros(2 * cfg.k + 1), radius=1.0)
        rows, ws, bs = [], [], []
        for i, (p, r) in enumerate(_sphere_design(cfg.k, cfg.n_design)):
            w, b = flatness_probe(S, p, r, cfg.gamma, min(cfg.n_lines, 2000), cfg.seed + i)
            rows.append((i, r, w.value, w.std_error, b.value))
            ws.append(w.value)
            bs.append(b.value)
        rho = float(spearmanr(ws, bs)[0]) if len(ws) > 2 else float("nan")
        self.rep.tables["flatness"] = (("design", "r", "width", "width_se", "beta"), rows)
        self.rep.results["spearman"] = rho
        self.rep.verdicts.append(Verdict("width-beta-association", rho > 0.5, f"spearman {rho:.3f}"))


# ---------------------------------------------------------------------------
# command line

_FLAGS = {
    "k": int, "seed": int, "surface": str, "region": str, "eps": float, "delta": float,
    "radii": str, "scales": str, "levels": str, "n_lines": int, "n_dirs": int, "n_centers": int,
    "cloud_size": int, "n_cases": int, "gamma": float, "n_design": int, "suite": str,
    "workers": int, "out": str,
}


def build_parser():
    import argparse

    parser = argparse.ArgumentParser(prog="heisrect", description="Rectifiability experiments in the Heisenberg group.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="key = value file; flags override it")
        for name, typ in _FLAGS.items():
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
        p.add_argument("--quiet", action="store_true", help="only the exit status reports success")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {name: getattr(args, name) for name in _FLAGS}
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = ExperimentConfig.from_text(text, **overrides)
        report = run_experiment(cfg, args.mode)
        paths = report.write()
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        for v in report.verdicts:
            print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}  {v.detail}")
        print(f"wrote {len(paths)} files to {cfg.out} in {report.wall_clock:.1f}s")
    return 0 if report.passed else 1
