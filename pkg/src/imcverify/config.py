"""Run configuration: a single YAML file describing the system, the grid,
the specification and all phase settings. Every invariant violation is
reported with the offending field path."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .dynamics import GENERAL, STRUCTURES, DynamicsModel, parse_dynamics
from .errors import InputError, ParseError, StructureError
from .geometry import Box
from .noise import Mixture, NoiseComponent, NoiseModel, TruncatedGaussian, Uniform


@dataclass
class MonteCarloConfig:
    trajectories: int = 1000
    seed: int = 0
    confidence: float = 0.99
    horizon: int = 200
    cells: Union[str, int, list[int]] = "stride"
    cell_stride: int = 0  # 0 = auto (about 20 cells)
    export_trajectories: int = 20
    enabled: bool = True


@dataclass
class RunConfig:
    domain: Box
    grid: tuple[int, ...]
    expressions: tuple[str, ...]
    structure: str
    noise: NoiseModel
    labels: dict[str, tuple[Box, ...]]
    threshold: float = 0.9
    horizon: Optional[int] = None
    convergence_tol: float = 1e-6
    max_iterations: int = 10**5
    noise_grid: Optional[tuple[int, ...]] = None
    monotone: Optional[tuple[tuple[bool, ...], ...]] = None
    cluster_passes: int = 0
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    posterior_table: Optional[Path] = None
    output_dir: Path = Path("out")

    def dynamics_model(self) -> DynamicsModel:
        return parse_dynamics(
            list(self.expressions), len(self.grid), self.structure, self.monotone
        )


def _fail(path: str, reason: str) -> None:
    raise InputError(f"{path}: {reason}")


def _need(mapping: dict, key: str, path: str) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        _fail(f"{path}.{key}" if path else key, "missing required field")
    return mapping[key]


def _as_box(value: Any, path: str) -> Box:
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, "expected a list of [lo, hi] pairs")
    for i, pair in enumerate(value):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            _fail(f"{path}[{i}]", "expected a [lo, hi] pair")
        lo, hi = pair
        if not all(isinstance(v, (int, float)) for v in (lo, hi)):
            _fail(f"{path}[{i}]", "bounds must be numbers")
        if not lo < hi:
            _fail(f"{path}[{i}]", f"requires lo < hi, got [{lo}, {hi}]")
    return Box.from_bounds(value)


def _parse_noise_component(entry: Any, path: str) -> NoiseComponent:
    if not isinstance(entry, dict) or "type" not in entry:
        _fail(path, "expected a mapping with a 'type' field")
    kind = entry["type"]
    try:
        if kind == "uniform":
            return Uniform(float(entry["lo"]), float(entry["hi"]))
        if kind == "truncated_gaussian":
            return TruncatedGaussian(
                float(entry["mean"]),
                float(entry["std"]),
                float(entry["lo"]),
                float(entry["hi"]),
            )
        if kind == "mixture":
            weights = tuple(float(w) for w in entry["weights"])
            parts = tuple(
                _parse_noise_component(p, f"{path}.components[{i}]")
                for i, p in enumerate(entry["components"])
            )
            return Mixture(weights, parts)
    except KeyError as exc:
        _fail(path, f"missing distribution parameter {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        _fail(path, str(exc))
    _fail(f"{path}.type", f"unknown distribution type {kind!r}")
    raise AssertionError  # unreachable


def load_config(path) -> RunConfig:
    """Load and fully validate a YAML run configuration."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file does not exist: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise InputError(f"config parse error in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top level must be a mapping")

    domain = _as_box(_need(raw, "domain", ""), "domain")
    n = domain.dim

    grid_raw = _need(raw, "grid", "")
    if not isinstance(grid_raw, (list, tuple)) or len(grid_raw) != n:
        _fail("grid", f"expected {n} per-dimension cell counts")
    for i, r in enumerate(grid_raw):
        if not isinstance(r, int) or r < 1:
            _fail(f"grid[{i}]", f"must be a positive integer, got {r!r}")
    grid = tuple(int(r) for r in grid_raw)

    dyn = _need(raw, "dynamics", "")
    exprs_raw = _need(dyn, "expressions", "dynamics")
    if not isinstance(exprs_raw, (list, tuple)) or len(exprs_raw) != n:
        _fail("dynamics.expressions", f"expected {n} component expressions")
    structure = dyn.get("structure", GENERAL)
    if structure not in STRUCTURES:
        _fail("dynamics.structure", f"must be one of {STRUCTURES}, got {structure!r}")
    monotone = dyn.get("monotone")
    if monotone is not None:
        if (
            not isinstance(monotone, list)
            or len(monotone) != n
            or any(not isinstance(row, list) or len(row) != n for row in monotone)
        ):
            _fail("dynamics.monotone", f"expected an {n}x{n} table of booleans")
        monotone = tuple(tuple(bool(b) for b in row) for row in monotone)
    try:
        parse_dynamics([str(e) for e in exprs_raw], n, structure, monotone)
    except (ParseError, StructureError, ValueError) as exc:
        _fail("dynamics.expressions", str(exc))

    noise_raw = _need(raw, "noise", "")
    comps_raw = _need(noise_raw, "components", "noise")
    if not isinstance(comps_raw, (list, tuple)) or len(comps_raw) != n:
        _fail("noise.components", f"expected {n} noise components")
    noise = NoiseModel(
        tuple(
            _parse_noise_component(c, f"noise.components[{i}]")
            for i, c in enumerate(comps_raw)
        )
    )
    if structure == "multiplicative":
        # Corollary-style multiplicative cut points assume positivity
        for d in range(n):
            if domain.component(d).lo <= 0.0:
                _fail("domain", "multiplicative structure requires a strictly positive domain")
            if noise.components[d].support.lo < 0.0:
                _fail(
                    f"noise.components[{d}]",
                    "multiplicative structure requires non-negative noise support",
                )
    noise_grid = None
    if "grid" in noise_raw and noise_raw["grid"] is not None:
        ng = noise_raw["grid"]
        if not isinstance(ng, (list, tuple)) or len(ng) != n:
            _fail("noise.grid", f"expected {n} per-component cell counts")
        for i, r in enumerate(ng):
            if not isinstance(r, int) or r < 1:
                _fail(f"noise.grid[{i}]", f"must be a positive integer, got {r!r}")
        noise_grid = tuple(int(r) for r in ng)
    if structure == GENERAL and noise_grid is None:
        _fail("noise.grid", "required when dynamics.structure is 'general'")

    labels: dict[str, tuple[Box, ...]] = {}
    labels_raw = raw.get("labels", {})
    if not isinstance(labels_raw, dict):
        _fail("labels", "expected a mapping from label name to a list of boxes")
    for name, boxes_raw in labels_raw.items():
        if not isinstance(boxes_raw, (list, tuple)):
            _fail(f"labels.{name}", "expected a list of boxes")
        boxes = tuple(
            _as_box(b, f"labels.{name}[{i}]") for i, b in enumerate(boxes_raw)
        )
        for i, b in enumerate(boxes):
            if b.dim != n:
                _fail(f"labels.{name}[{i}]", "box dimension differs from domain")
            if not domain.contains(b):
                _fail(f"labels.{name}[{i}]", "box is not inside the domain")
        labels[str(name)] = boxes
    if "goal" not in labels:
        _fail("labels.goal", "a goal label with at least one box is required")

    spec_raw = raw.get("spec", {})
    threshold = spec_raw.get("threshold", 0.9)
    if not isinstance(threshold, (int, float)) or not 0.0 < threshold < 1.0:
        _fail("spec.threshold", f"must be in (0, 1), got {threshold!r}")
    horizon = spec_raw.get("horizon", "unbounded")
    if horizon in ("unbounded", None):
        horizon = None
    elif not isinstance(horizon, int) or horizon < 0:
        _fail("spec.horizon", f"must be 'unbounded' or an integer >= 0, got {horizon!r}")
    convergence_tol = float(spec_raw.get("convergence_tolerance", 1e-6))
    if convergence_tol <= 0.0:
        _fail("spec.convergence_tolerance", "must be positive")
    max_iterations = spec_raw.get("max_iterations", 10**5)
    if not isinstance(max_iterations, int) or max_iterations < 1:
        _fail("spec.max_iterations", "must be a positive integer")

    cluster_raw = raw.get("cluster", {})
    passes = cluster_raw.get("passes", 0) if isinstance(cluster_raw, dict) else None
    if not isinstance(passes, int) or passes < 0:
        _fail("cluster.passes", f"must be an integer >= 0, got {passes!r}")

    mc_raw = raw.get("monte_carlo", {})
    if not isinstance(mc_raw, dict):
        _fail("monte_carlo", "expected a mapping")
    mc = MonteCarloConfig(
        trajectories=mc_raw.get("trajectories", 1000),
        seed=mc_raw.get("seed", 0),
        confidence=mc_raw.get("confidence", 0.99),
        horizon=mc_raw.get("horizon", 200),
        cells=mc_raw.get("cells", "stride"),
        cell_stride=mc_raw.get("cell_stride", 0),
        export_trajectories=mc_raw.get("export_trajectories", 20),
        enabled=mc_raw.get("enabled", True),
    )
    if not isinstance(mc.trajectories, int) or mc.trajectories < 1:
        _fail("monte_carlo.trajectories", "must be a positive integer")
    if not isinstance(mc.seed, int):
        _fail("monte_carlo.seed", "must be an integer")
    if not isinstance(mc.confidence, float) or not 0.0 < mc.confidence < 1.0:
        _fail("monte_carlo.confidence", "must be in (0, 1)")
    if not isinstance(mc.horizon, int) or mc.horizon < 1:
        _fail("monte_carlo.horizon", "must be a positive integer")
    if isinstance(mc.cells, list):
        total = 1
        for r in grid:
            total *= r
        for i, c in enumerate(mc.cells):
            if not isinstance(c, int) or not 0 <= c < total:
                _fail(f"monte_carlo.cells[{i}]", "cell index out of range")
    elif mc.cells not in ("stride", "all"):
        _fail("monte_carlo.cells", "expected 'stride', 'all' or a list of indices")
    if not isinstance(mc.cell_stride, int) or mc.cell_stride < 0:
        _fail("monte_carlo.cell_stride", "must be an integer >= 0")
    if not isinstance(mc.export_trajectories, int) or mc.export_trajectories < 0:
        _fail("monte_carlo.export_trajectories", "must be an integer >= 0")

    table_raw = raw.get("posterior_table")
    posterior_table = Path(table_raw) if table_raw else None
    if posterior_table is not None and not posterior_table.is_absolute():
        posterior_table = path.parent / posterior_table

    output_dir = Path(raw.get("output_dir", "out"))
    if not output_dir.is_absolute():
        output_dir = path.parent / output_dir

    return RunConfig(
        domain=domain,
        grid=grid,
        expressions=tuple(str(e) for e in exprs_raw),
        structure=structure,
        noise=noise,
        labels=labels,
        threshold=float(threshold),
        horizon=horizon,
        convergence_tol=convergence_tol,
        max_iterations=max_iterations,
        noise_grid=noise_grid,
        monotone=monotone,
        cluster_passes=passes,
        monte_carlo=mc,
        posterior_table=posterior_table,
        output_dir=output_dir,
    )
