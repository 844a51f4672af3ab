"""Parameter sweeps over a base scenario and monotone-trend claims on the results.

A grid file uses the same INI dialect as scenario configs::

    [grid]
    mode = product            # or zip
    hae.lambda = 50; 500; 5000
    metrics = fitted_decay, steady_e_norm   # optional output filter

    [claims]
    faster_with_lambda = fitted_decay nondecreasing
    xi_insensitive = fitted_decay flat 0.05

Each grid key is ``<section>.<key>`` of the scenario config; its value is a
``;``-separated list of config value texts (so ``40, 40`` sets a vector).
"""
from __future__ import annotations

import csv
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .analysis import PositivityError, StabilityReport, analyze_config
from .scenario import ConfigError, ScenarioConfig, from_sections, parse_sections, to_sections, validate
from .simulation import InadmissibleStart, run

DIRECTIONS = ("increasing", "decreasing", "nondecreasing", "nonincreasing", "flat")
METRICS = [f for f in StabilityReport.__dataclass_fields__ if f not in ("violations", "verdict")]


@dataclass(frozen=True)
class Claim:
    name: str
    metric: str
    direction: str
    slack: float = 0.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"claim {self.name}: direction must be one of {', '.join(DIRECTIONS)}")
        if self.metric not in METRICS:
            raise ValueError(f"claim {self.name}: unknown metric {self.metric!r}")
        if self.slack < 0:
            raise ValueError(f"claim {self.name}: slack must be non-negative")


@dataclass
class SweepGrid:
    base: ScenarioConfig
    axes: list[tuple[str, list[str]]]
    mode: str = "product"
    metrics: list[str] | None = None
    claims: list[Claim] = field(default_factory=list)

    def __post_init__(self):
        if not self.axes or any(not vals for _, vals in self.axes):
            raise ValueError("sweep grid needs at least one path with at least one value")
        if self.mode not in ("product", "zip"):
            raise ValueError(f"mode must be product or zip, got {self.mode!r}")
        if self.mode == "zip" and len({len(v) for _, v in self.axes}) > 1:
            raise ValueError("zip mode needs equally long value lists")
        sections = to_sections(self.base)
        for path, _ in self.axes:
            sec, key = split_path(path)
            if sec not in sections:
                raise ValueError(f"grid path {path!r}: no section [{sec}] in the base scenario")
        if self.metrics is not None:
            bad = [m for m in self.metrics if m not in METRICS]
            if bad:
                raise ValueError(f"unknown metrics: {', '.join(bad)}")

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.axes]

    def points(self) -> list[dict[str, str]]:
        """Grid points in declared order (last axis varies fastest in product mode)."""
        values = [v for _, v in self.axes]
        combos = zip(*values) if self.mode == "zip" else itertools.product(*values)
        return [dict(zip(self.paths, c)) for c in combos]


def split_path(path: str) -> tuple[str, str]:
    sec, _, key = path.rpartition(".")
    if not sec or not key:
        raise ValueError(f"grid path must look like section.key, got {path!r}")
    return sec, key


def apply_point(base: ScenarioConfig, point: dict[str, str]) -> ScenarioConfig:
    """Base scenario with the point's overrides; raises :class:`ConfigError` if invalid.

    The initial state is not checked against the envelopes here.
    """
    sections = to_sections(base)
    for path, text in point.items():
        sec, key = split_path(path)
        sections.setdefault(sec, {})[key] = text
    cfg = from_sections(sections)
    # admissibility is left to run() so it gets its own status
    errors = validate(cfg, admissibility=False)
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_grid(text: str, base: ScenarioConfig) -> SweepGrid:
    sec = parse_sections(text)
    if "grid" not in sec:
        raise ConfigError("grid file needs a [grid] section")
    unknown = [s for s in sec if s not in ("grid", "claims")]
    if unknown:
        raise ConfigError([f"unknown section [{s}]" for s in unknown])
    g = dict(sec["grid"])
    mode = g.pop("mode", "product").strip()
    metrics = g.pop("metrics", None)
    metrics = [m.strip() for m in metrics.split(",") if m.strip()] if metrics else None
    axes = [(path, [v.strip() for v in vals.split(";") if v.strip()]) for path, vals in g.items()]
    claims = []
    for name, spec in sec.get("claims", {}).items():
        parts = spec.split()
        if len(parts) not in (2, 3):
            raise ConfigError(f"claim {name}: expected '<metric> <direction> [slack]'")
        try:
            claims.append(Claim(name, parts[0], parts[1], float(parts[2]) if len(parts) == 3 else 0.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return SweepGrid(base=base, axes=axes, mode=mode, metrics=metrics, claims=claims)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_grid(path: str | os.PathLike, base: ScenarioConfig) -> SweepGrid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh.read(), base)


def _nan_metrics() -> dict[str, float]:
    return {m: math.nan for m in METRICS}


def run_point(base: ScenarioConfig, point: dict[str, str]) -> dict:
    """One ``run`` + ``analyze``; failures become a row, never an exception."""
    row: dict = dict(point)
    try:
        cfg = apply_point(base, point)
    except ConfigError as exc:
        return {**row, "status": "invalid_config", "message": "; ".join(exc.errors), **_nan_metrics()}
    try:
        trace, verdict = run(cfg)
    except InadmissibleStart as exc:
        return {**row, "status": "inadmissible_start", "message": str(exc), **_nan_metrics()}
    try:
        rep = analyze_config(trace, cfg)
    except PositivityError as exc:
        return {**row, "status": verdict.status, "message": str(exc), **_nan_metrics()}
    metrics = {m: getattr(rep, m) for m in METRICS}
    return {**row, "status": verdict.status, "message": verdict.message, **metrics}


def _run_point_args(args):
    return run_point(*args)


def sweep(grid: SweepGrid, workers: int = 1) -> list[dict]:
    """Evaluate every grid point; rows come back in declared order.

    ``workers > 1`` spreads points over processes; each point is independent
    and fully determined by its config, so the table does not depend on it.
    """
    jobs = [(grid.base, p) for p in grid.points()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_point_args, jobs))
    else:
        rows = [run_point(*j) for j in jobs]
    if grid.metrics is not None:
        keep = set(grid.paths) | {"status", "message"} | set(grid.metrics)
        rows = [{k: v for k, v in r.items() if k in keep} for r in rows]
    return rows


def write_table(rows: Sequence[dict], path: str | os.PathLike) -> None:
    if not rows:
        raise ValueError("empty sweep table")
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])


@dataclass
class ClaimResult:
    claim: Claim
    passed: bool
    values: list[float]
    detail: str = ""

    def line(self) -> str:
        c = self.claim
        tag = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{v:.6g}" for v in self.values)
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {c.name}: {c.metric} {c.direction} [{vals}]{extra}"


def check_trend(values: Sequence[float], direction: str, slack: float = 0.0) -> tuple[bool, str]:
    """Test a monotone (or flat) trend along ``values``.

    ``slack`` is relative: a step may move against the claimed direction by up
    to ``slack * |previous|``; for ``flat`` it bounds ``(max - min) / mean(|v|)``.
    Strict directions also require each step to move by more than that band.
    """
    v = [float(a) for a in values]
    if any(not math.isfinite(a) for a in v):
        return False, "non-finite value"
    if len(v) < 2:
        return True, "single point"
    if direction == "flat":
        scale = sum(abs(a) for a in v) / len(v)
        spread = (max(v) - min(v)) / scale if scale > 0 else 0.0
        return spread <= slack, f"relative spread {spread:.3g}"
    for a, b in zip(v, v[1:]):
        band = slack * abs(a)
        if direction == "nondecreasing" and b < a - band:
            return False, f"{b:.6g} < {a:.6g}"
        if direction == "nonincreasing" and b > a + band:
            return False, f"{b:.6g} > {a:.6g}"
        if direction == "increasing" and not b > a + band:
            return False, f"{b:.6g} not above {a:.6g}"
        if direction == "decreasing" and not b < a - band:
            return False, f"{b:.6g} not below {a:.6g}"
    return True, ""


def trend_report(table: Sequence[dict], claims: Sequence[Claim]) -> list[ClaimResult]:
    """Verdict per claim, read along the table's row order.

    A claim fails outright if any row did not complete.
    """
    out = []
    for c in claims:
        values = [r.get(c.metric, math.nan) for r in table]
        bad = [i for i, r in enumerate(table) if r.get("status") != "completed"]
        if bad:
            out.append(ClaimResult(c, False, values, f"rows {bad} did not complete"))
            continue
        ok, detail = check_trend(values, c.direction, c.slack)
        out.append(ClaimResult(c, ok, values, detail))
    return out
