"""
Parameter-sweep engine.
1D/2D grids of EP strength and spectral observables over a model template,
EP-seam extraction from the resulting fields and power-law scaling fits.
Grid points are independent; with jobs > 1 they are farmed out to a
multiprocessing pool and written back into pre-allocated slots in grid order.
Scan CSVs open with "#" comment lines (version, axis names, config echo)
ahead of the column header row.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import find_peaks, peak_prominences
from scipy.stats import linregress

from dimer import DimerParams, dimer_model
from lindblad import (
    JumpFamily,
    JumpKind,
    LindbladModel,
    assemble_liouvillian,
    detuning_hamiltonian,
    hopping_hamiltonian,
)
from noisegraph import CorrelationModel, PositivityViolated, build_custom, build_cycle
from opspace import QOperator
from settings import __version__, default_cluster_radius, default_marginal_tol, default_rank_tol
from spectral import decompose

logger = logging.getLogger(__name__)

AXIS_PARAMS = ("c", "gamma0", "j", "delta")
OBSERVABLES = ("ep_strength", "spectral_gap", "n_marginal", "defective_any")
CSV_COLUMNS = ["axis1", "axis2", "ep_strength", "spectral_gap", "n_marginal",
               "defective_any", "excluded", "overflow"]
EP_CAP = 1e15
SEAM_FACTOR = 10.0
ROW_SEAM_FACTOR = 2.0
ROW_PROMINENCE_FRACTION = 0.2
PROMINENCE_CAP = 1e6
MIN_FIT_POINTS = 8


class ScanConfigError(ValueError):
    """Scan axes or observables are malformed."""


class AllPointsExcluded(RuntimeError):
    """Every grid point violated positivity."""


class InsufficientPoints(ValueError):
    """Too few admissible points inside the fit window."""


@dataclass(frozen=True)
class ModelSpec:
    """
    Picklable recipe for a LindbladModel.

    For kind="dimer" the fields carry DimerParams meaning (gamma0 is the
    gamma of the reduced generators) and the calibrated dimer lift is used.
    Cycle and custom graphs get H = hopping(J) + staggered detuning(delta).
    """
    kind: str = "dimer"
    channel: str = "dephasing"
    gamma0: float = 1.0
    c: float = 0.0
    j: float = 0.0
    delta: float = 0.0
    n: int = 2
    adjacency: Optional[Tuple[Tuple[float, ...], ...]] = None

    def with_param(self, name: str, value: float) -> "ModelSpec":
        return replace(self, **{name: float(value)})

    def n_sites(self) -> int:
        if self.kind == "dimer":
            return 2
        if self.kind == "custom" and self.adjacency is not None:
            return len(self.adjacency)
        return self.n

    def build(self) -> LindbladModel:
        """
        Raises:
            PositivityViolated: if c lies outside the admissible range
        """
        channel = JumpKind(self.channel)
        if self.kind == "dimer":
            if abs(self.c) > 1.0 + 1e-12:
                raise PositivityViolated(f"c={self.c} outside [-1, 1] for the dimer")
            return dimer_model(DimerParams(gamma=self.gamma0, c=self.c, j=self.j,
                                           delta=self.delta, channel=channel))

        if self.kind == "cycle":
            graph = build_cycle(self.n)
        elif self.kind == "custom":
            if self.adjacency is None:
                raise ScanConfigError("custom model needs an adjacency matrix")
            graph = build_custom(np.array(self.adjacency, dtype=float))
        else:
            raise ScanConfigError(f"unknown model kind {self.kind!r}")

        corr = CorrelationModel(gamma0=self.gamma0, c=self.c, graph=graph)
        if channel == JumpKind.DEPHASING:
            jumps = JumpFamily.dephasing(graph.n)
        elif channel == JumpKind.RELAXATION:
            jumps = JumpFamily.relaxation(graph.n)
        else:
            raise ScanConfigError("graph models support dephasing or relaxation channels")
        h = hopping_hamiltonian(graph, self.j) + detuning_hamiltonian(graph.n, self.delta)
        return LindbladModel(QOperator(h, hermitian=True), jumps, corr)


@dataclass(frozen=True)
class ScanAxis:
    name: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.name not in AXIS_PARAMS:
            raise ScanConfigError(f"axis parameter must be one of {AXIS_PARAMS}, got {self.name!r}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ScanConfigError(f"axis {self.name} needs at least 2 steps, got {self.steps}")
        if not self.lo < self.hi:
            raise ScanConfigError(f"axis {self.name} needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.name == "gamma0" and self.lo <= 0:
            raise ScanConfigError("gamma0 axis must stay positive")

    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, int(self.steps))

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.steps - 1)


@dataclass(frozen=True)
class ScanConfig:
    model: ModelSpec
    axis1: ScanAxis
    axis2: Optional[ScanAxis] = None
    observables: Tuple[str, ...] = OBSERVABLES
    rank_tol: float = field(default_factory=default_rank_tol)
    cluster_radius: float = field(default_factory=default_cluster_radius)
    marginal_tol: float = field(default_factory=default_marginal_tol)
    jobs: int = 1

    def __post_init__(self):
        unknown = [o for o in self.observables if o not in OBSERVABLES]
        if unknown or not self.observables:
            raise ScanConfigError(f"observables must be a non-empty subset of {OBSERVABLES}, got {unknown}")
        if self.axis2 is not None and self.axis2.name == self.axis1.name:
            raise ScanConfigError("the two scan axes must vary different parameters")
        if self.jobs < 1:
            raise ScanConfigError(f"jobs must be >= 1, got {self.jobs}")

    def to_dict(self) -> Dict[str, Any]:
        echo = asdict(self)
        echo["observables"] = list(self.observables)
        echo.pop("jobs")
        return echo


class PointResult(NamedTuple):
    excluded: bool
    ep_strength: float
    spectral_gap: float
    n_marginal: float
    defective_any: float


def _evaluate_point(task: Tuple[ScanConfig, float, Optional[float]]) -> PointResult:
    cfg, v1, v2 = task
    spec = cfg.model.with_param(cfg.axis1.name, v1)
    if cfg.axis2 is not None:
        spec = spec.with_param(cfg.axis2.name, v2)
    try:
        model = spec.build()
    except PositivityViolated as exc:
        logger.debug(f"excluded point ({v1}, {v2}): {exc}")
        return PointResult(True, math.nan, math.nan, math.nan, math.nan)

    liouvillian = assemble_liouvillian(model)
    norm = np.linalg.norm(liouvillian)
    report = decompose(liouvillian, rank_tol=cfg.rank_tol,
                       cluster_radius=max(cfg.cluster_radius * norm, np.finfo(float).tiny),
                       test_clusters="defective_any" in cfg.observables)
    wanted = cfg.observables
    return PointResult(
        excluded=False,
        ep_strength=report.ep_strength if "ep_strength" in wanted else math.nan,
        spectral_gap=report.spectral_gap() if "spectral_gap" in wanted else math.nan,
        n_marginal=float(report.n_marginal(cfg.marginal_tol * spec.gamma0)) if "n_marginal" in wanted else math.nan,
        defective_any=float(report.defective_any) if "defective_any" in wanted else math.nan,
    )


@dataclass
class ScanResult:
    """
    Observable fields on a 1D grid (shape (n1,)) or 2D grid (shape (n1, n2)).

    Excluded points hold NaN and are flagged in `excluded`; ep_strength may
    hold +inf where the eigenvector matrix is numerically singular.
    """
    grid1: np.ndarray
    grid2: Optional[np.ndarray]
    values: Dict[str, np.ndarray]
    excluded: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_2d(self) -> bool:
        return self.grid2 is not None

    @property
    def axis_names(self) -> Tuple[str, Optional[str]]:
        return self.meta.get("axis1", "axis1"), self.meta.get("axis2")


def run_scan(cfg: ScanConfig) -> ScanResult:
    """
    Evaluate every grid point of cfg.

    Raises:
        AllPointsExcluded: if no grid point satisfies positivity
    """
    grid1 = cfg.axis1.grid()
    grid2 = cfg.axis2.grid() if cfg.axis2 is not None else None
    inner = grid2 if grid2 is not None else [None]
    tasks = [(cfg, float(v1), None if v2 is None else float(v2)) for v1 in grid1 for v2 in inner]
    logger.info(f"Scanning {len(tasks)} points with {cfg.jobs} worker(s)")

    if cfg.jobs > 1:
        chunk = max(1, len(tasks) // (4 * cfg.jobs))
        with Pool(processes=cfg.jobs) as pool:
            results = pool.map(_evaluate_point, tasks, chunksize=chunk)
    else:
        results = [_evaluate_point(task) for task in tasks]

    shape = (len(grid1), len(grid2)) if grid2 is not None else (len(grid1),)
    excluded = np.array([r.excluded for r in results]).reshape(shape)
    if excluded.all():
        raise AllPointsExcluded("every grid point violates complete positivity")
    if excluded.any():
        logger.warning(f"{int(excluded.sum())} grid point(s) excluded by positivity")

    values = {name: np.array([getattr(r, name) for r in results], dtype=float).reshape(shape)
              for name in cfg.observables}
    meta = {
        "axis1": cfg.axis1.name,
        "axis2": cfg.axis2.name if cfg.axis2 is not None else None,
        "config": cfg.to_dict(),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    return ScanResult(grid1=grid1, grid2=grid2, values=values, excluded=excluded, meta=meta)


class SeamPoint(NamedTuple):
    axis1: float
    axis2: Optional[float]
    value: float
    branch: int


def _row_peaks(row: np.ndarray, excluded: np.ndarray, threshold: float,
               relative: Optional[float] = None) -> np.ndarray:
    """
    Indices of local maxima at or above threshold.

    With `relative` set, the two endpoints are candidates as well and a peak
    must stand ROW_SEAM_FACTOR times above its key col and reach `relative`
    of the row's largest log-prominence (values capped at PROMINENCE_CAP).
    """
    valid = ~excluded & ~np.isnan(row)
    if not valid.any():
        return np.array([], dtype=int)
    clean = np.where(valid, np.minimum(row, 1e300), np.inf)
    floor = float(clean.min())
    clean = np.where(valid, clean, floor)
    if relative is None:
        peaks, _ = find_peaks(clean, height=threshold)
        return peaks[valid[peaks]]

    padded = np.concatenate(([floor], clean, [floor]))
    peaks, _ = find_peaks(padded, height=threshold)
    if peaks.size == 0:
        return peaks
    level = np.log(np.clip(padded, np.finfo(float).tiny, PROMINENCE_CAP))
    prominence = peak_prominences(level, peaks)[0]
    cut = max(math.log(ROW_SEAM_FACTOR), relative * float(prominence.max()))
    peaks = peaks[prominence >= cut] - 1
    return peaks[valid[peaks]]


def _median(values: np.ndarray, excluded: np.ndarray) -> float:
    usable = values[~excluded & np.isfinite(values)]
    return float(np.median(usable)) if usable.size else 0.0


def extract_seam(r: ScanResult, observable: str = "ep_strength",
                 prominence: Optional[float] = None, max_jump: int = 3) -> List[SeamPoint]:
    """
    Ridge points of an observable field.

    1D: interior local maxima above `prominence` (default 10x the field median).
    2D: per row of fixed axis2, maxima above the threshold (default 2x the row
    median), endpoints included, that rise at least 2x above their key col and
    keep a fifth of the row's largest log-prominence. Maxima of consecutive
    rows are chained into branches when their axis1 indices differ by at most
    max_jump.
    """
    if observable not in r.values:
        raise KeyError(f"observable {observable!r} not in scan result")
    field_values = r.values[observable]

    if not r.is_2d:
        threshold = prominence if prominence is not None else SEAM_FACTOR * _median(field_values, r.excluded)
        peaks = _row_peaks(field_values, r.excluded, threshold)
        return [SeamPoint(float(r.grid1[i]), None, float(field_values[i]), 0) for i in peaks]

    seam: List[SeamPoint] = []
    # branch id -> (row index, axis1 index) of its latest point
    tails: Dict[int, Tuple[int, int]] = {}
    for k, v2 in enumerate(r.grid2):
        column = field_values[:, k]
        mask = r.excluded[:, k]
        threshold = prominence if prominence is not None else ROW_SEAM_FACTOR * _median(column, mask)
        taken = set()
        for i in _row_peaks(column, mask, threshold, relative=ROW_PROMINENCE_FRACTION):
            candidates = [(abs(idx - i), b) for b, (row, idx) in tails.items()
                          if row == k - 1 and abs(idx - i) <= max_jump and b not in taken]
            branch = min(candidates)[1] if candidates else len(tails)
            taken.add(branch)
            tails[branch] = (k, int(i))
            seam.append(SeamPoint(float(r.grid1[i]), float(v2), float(column[i]), branch))
    return seam


class ScalingFit(NamedTuple):
    exponent: float
    r_squared: float
    n_points: int


def fit_scaling(r: ScanResult, mu_ep: float, window: Tuple[float, float],
                observable: str = "ep_strength") -> ScalingFit:
    """
    Log-log least squares of the observable against |mu - mu_ep|.

    Points on both sides of mu_ep with lo <= |mu - mu_ep| <= hi are merged;
    points within one grid step of mu_ep, excluded or overflowing points are
    dropped.

    Raises:
        InsufficientPoints: if fewer than 8 points remain
    """
    if r.is_2d:
        raise ValueError("fit_scaling works on 1D scans")
    lo, hi = window
    grid = np.asarray(r.grid1, dtype=float)
    values = r.values[observable]
    step = float(np.min(np.diff(grid)))
    distance = np.abs(grid - mu_ep)

    keep = ((distance >= lo) & (distance <= hi) & (distance > step * (1.0 + 1e-9))
            & ~r.excluded & np.isfinite(values) & (values > 0) & (values < EP_CAP))
    if np.count_nonzero(keep) < MIN_FIT_POINTS:
        raise InsufficientPoints(
            f"{int(np.count_nonzero(keep))} usable points in window {window}; need {MIN_FIT_POINTS}"
        )
    fit = linregress(np.log(distance[keep]), np.log(values[keep]))
    return ScalingFit(float(fit.slope), float(fit.rvalue ** 2), int(np.count_nonzero(keep)))


def scan_frame(r: ScanResult) -> pd.DataFrame:
    """One row per grid point in the CSV column layout (ep_strength capped at 1e15)."""
    n1 = len(r.grid1)
    n2 = len(r.grid2) if r.is_2d else 1
    axis1 = np.repeat(r.grid1, n2)
    axis2 = np.tile(r.grid2, n1) if r.is_2d else np.full(n1, np.nan)

    def flat(name: str) -> np.ndarray:
        if name in r.values:
            return np.asarray(r.values[name], dtype=float).reshape(-1)
        return np.full(n1 * n2, np.nan)

    ep = flat("ep_strength")
    overflow = np.nan_to_num(ep, nan=0.0) >= EP_CAP
    excluded = np.asarray(r.excluded).reshape(-1)
    frame = pd.DataFrame({
        "axis1": axis1,
        "axis2": axis2,
        "ep_strength": np.where(overflow, EP_CAP, ep),
        "spectral_gap": flat("spectral_gap"),
        "n_marginal": pd.array(_as_int(flat("n_marginal")), dtype="Int64"),
        "defective_any": pd.array(_as_int(flat("defective_any")), dtype="Int64"),
        "excluded": excluded.astype(int),
        "overflow": overflow.astype(int),
    })
    return frame[CSV_COLUMNS]


def _as_int(values: np.ndarray) -> List[Optional[int]]:
    return [None if math.isnan(v) else int(v) for v in values]


def write_scan_csv(r: ScanResult, path: Union[str, Path],
                   config_echo: Optional[Dict[str, Any]] = None,
                   comment_header: bool = True) -> Path:
    """
    Write the scan CSV: '#' header lines with the resolved config, then the
    data table (17 significant digits, LF line endings). No timestamp is
    written, so identical configs give byte-identical files.

    The '#' lines precede the column header row; readers other than
    read_scan_csv need `comment="#"` (pandas) or comment_header=False, which
    writes the plain table only and leaves the config to the caller's sidecar.
    """
    path = Path(path)
    echo = config_echo if config_echo is not None else r.meta.get("config", {})
    axis1, axis2 = r.axis_names
    frame = scan_frame(r)
    with open(path, "w", newline="\n", encoding="utf-8") as handle:
        if comment_header:
            handle.write(f"# epscope scan v{r.meta.get('version', __version__)}\n")
            handle.write(f"# axis1: {axis1}\n")
            handle.write(f"# axis2: {axis2 or ''}\n")
            handle.write(f"# config: {json.dumps(echo, sort_keys=True)}\n")
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n", na_rep="")
    overflowed = int(frame["overflow"].sum())
    if overflowed:
        logger.warning(f"{overflowed} ep_strength value(s) capped at {EP_CAP:g}")
    logger.info(f"Wrote scan CSV to {path}")
    return path


def read_scan_csv(path: Union[str, Path]) -> ScanResult:
    """Rebuild a ScanResult from a CSV written by write_scan_csv."""
    meta: Dict[str, Any] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            value = value.strip()
            if key == "config":
                meta["config"] = json.loads(value) if value else {}
            elif key in ("axis1", "axis2"):
                meta[key] = value or None

    frame = pd.read_csv(path, comment="#")
    grid1 = pd.unique(frame["axis1"].to_numpy())
    has_axis2 = frame["axis2"].notna().any()
    grid2 = pd.unique(frame["axis2"].to_numpy()) if has_axis2 else None
    shape = (len(grid1), len(grid2)) if has_axis2 else (len(grid1),)

    values = {}
    for name in OBSERVABLES:
        column = frame[name].to_numpy(dtype=float, na_value=np.nan)
        if not np.all(np.isnan(column)):
            values[name] = column.reshape(shape)
    excluded = frame["excluded"].to_numpy().astype(bool).reshape(shape)
    return ScanResult(grid1=np.asarray(grid1, dtype=float),
                      grid2=None if grid2 is None else np.asarray(grid2, dtype=float),
                      values=values, excluded=excluded, meta=meta)
