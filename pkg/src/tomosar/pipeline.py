"""Network inference over stacks, map refinement, detection extraction and metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Image, TomographicStack
from .dataset import TileConfig, tile_patches
from .neuralnet import Network
from .scene import NestRecord


@dataclass
class Detection:
    xy: tuple[float, float]
    size: float
    score: float
    members: int


@dataclass
class NestMap:
    detection: Image
    size: Image
    refined: Image
    detections: list[Detection] = field(default_factory=list)


@dataclass
class MetricsReport:
    detection_rate: float
    false_alarm_rate: float
    n_truths: int
    n_detections: int
    matched_truths: list[int]
    planimetric_errors: list[float]
    planimetric_std: float
    false_alarms: int = 0
    size_mean_pct_error: float = float("nan")
    size_rmse: float = float("nan")
    size_r2: float = float("nan")
    size_adjusted_r2: float = float("nan")

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                       for k, v in asdict(self).items()}, fh, indent=1, sort_keys=True)


def _tile_map(network: Network, stack, tiles: TileConfig, expect: str) -> Image:
    if network.task != expect:
        raise ValueError(f"expected a {expect} network, got {network.task}")
    ps = tile_patches(stack, None, tiles)
    grid = stack.grid if isinstance(stack, TomographicStack) else stack[1]
    if tuple(ps.images.shape[1:]) != network.input_shape:
        raise ValueError(f"tiles of {ps.images.shape[1:]} do not fit a network "
                         f"expecting {network.input_shape}")
    values = network.predict(ps.images)
    tile, stride, _ = tiles.pixels(grid.spacing)
    out = np.zeros(grid.shape)
    valid = np.zeros(grid.shape, dtype=bool)
    half = tile // 2
    for (i, j), v in zip(ps.index, values):
        out[i * stride + half, j * stride + half] = v
        valid[i * stride + half, j * stride + half] = True
    return Image(grid.with_depths([0.0]), out, valid)


def detect_map(network: Network, stack, tiles: TileConfig = TileConfig()) -> Image:
    """Detection probability written at every tile-centre cell, zero elsewhere.

    ``valid`` marks the populated centres.
    """
    return _tile_map(network, stack, tiles, "detection")


def size_map(network: Network, stack, tiles: TileConfig = TileConfig()) -> Image:
    """Estimated nest size (m^2) at every tile-centre cell."""
    return _tile_map(network, stack, tiles, "size")


def render_size_discs(size_image: Image) -> Image:
    """Draw each non-zero centre as a disc of area equal to its estimate."""
    grid = size_image.grid
    x, y = grid.mesh()
    out = np.zeros(grid.shape)
    for r, c in np.argwhere(size_image.samples > 0):
        a = size_image.samples[r, c]
        inside = (x - x[r, c]) ** 2 + (y - y[r, c]) ** 2 <= a / np.pi
        out[inside] = np.maximum(out[inside], a)
    return Image(grid, out)


def refine(size_image: Image, detection_image: Image, p_threshold: float = 0.5) -> Image:
    """Size map masked by the binarised detection map."""
    if size_image.samples.shape != detection_image.samples.shape:
        raise ValueError("size and detection images are on different grids")
    mask = detection_image.samples >= p_threshold
    return Image(size_image.grid, np.where(mask, size_image.samples, 0.0), size_image.valid)


def extract_detections(detection_image: Image, size_image: Image | None = None,
                       cluster_radius: float = 8.0, p_threshold: float = 0.5) -> list[Detection]:
    """Greedy clustering of above-threshold centres.

    Centres are visited by decreasing probability; each unassigned centre
    seeds a cluster collecting every unassigned centre within
    ``cluster_radius`` of it. The detection sits at the cluster centroid and
    carries the largest ``size_image`` value inside the cluster.
    """
    grid = detection_image.grid
    rc = np.argwhere(detection_image.samples >= p_threshold)
    if len(rc) == 0:
        return []
    p = detection_image.samples[rc[:, 0], rc[:, 1]]
    xy = np.column_stack([grid.origin_xy[0] + grid.spacing * rc[:, 1],
                          grid.origin_xy[1] + grid.spacing * rc[:, 0]])
    sizes = (np.zeros(len(rc)) if size_image is None
             else size_image.samples[rc[:, 0], rc[:, 1]])
    order = np.lexsort((rc[:, 1], rc[:, 0], -p))
    free = np.ones(len(rc), dtype=bool)
    out = []
    for k in order:
        if not free[k]:
            continue
        near = free & (np.hypot(*(xy - xy[k]).T) <= cluster_radius)
        free &= ~near
        c = xy[near].mean(axis=0)
        out.append(Detection((float(c[0]), float(c[1])), float(sizes[near].max()),
                             float(p[near].max()), int(near.sum())))
    return out


def build_nest_map(detector: Network, sizer: Network, stack, tiles: TileConfig = TileConfig(),
                   cluster_radius: float = 8.0, p_threshold: float = 0.5) -> NestMap:
    det = detect_map(detector, stack, tiles)
    siz = size_map(sizer, stack, tiles)
    ref = refine(siz, det, p_threshold)
    return NestMap(det, siz, ref, extract_detections(det, ref, cluster_radius, p_threshold))


def planimetric_std(errors) -> float:
    """Sample standard deviation of planimetric errors (0 for fewer than two)."""
    e = np.asarray(errors, dtype=float)
    return float(e.std(ddof=1)) if len(e) > 1 else 0.0


def evaluate(detections: list[Detection], truths: list[NestRecord],
             assoc_radius: float = 25.0) -> MetricsReport:
    """Associate each detection to its nearest truth within ``assoc_radius``.

    Several detections may share one truth; that truth counts once toward
    the detection rate. Detections with no truth in range are false alarms.
    """
    txy = np.array([t.center_xy for t in truths], dtype=float).reshape(-1, 2)
    matched, errors, false_alarms = set(), [], 0
    for d in detections:
        if len(txy) == 0:
            false_alarms += 1
            continue
        dist = np.hypot(*(txy - np.asarray(d.xy)).T)
        k = int(np.argmin(dist))
        if dist[k] <= assoc_radius:
            matched.add(k)
            errors.append(float(dist[k]))
        else:
            false_alarms += 1
    n_t, n_d = len(truths), len(detections)
    return MetricsReport(
        detection_rate=100.0 * len(matched) / n_t if n_t else 0.0,
        false_alarm_rate=100.0 * false_alarms / n_d if n_d else 0.0,
        n_truths=n_t, n_detections=n_d, matched_truths=sorted(int(truths[k].id) for k in matched),
        planimetric_errors=errors, planimetric_std=planimetric_std(errors),
        false_alarms=false_alarms)


def pool_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Combine per-region reports by summing counts and concatenating errors."""
    n_t = sum(r.n_truths for r in reports)
    n_d = sum(r.n_detections for r in reports)
    fa = sum(r.false_alarms for r in reports)
    matched = [m for r in reports for m in r.matched_truths]
    errors = [x for r in reports for x in r.planimetric_errors]
    return MetricsReport(100.0 * len(matched) / n_t if n_t else 0.0,
                         100.0 * fa / n_d if n_d else 0.0, n_t, n_d, matched, errors,
                         planimetric_std(errors), fa)


def size_metrics(estimates, truths) -> tuple[float, float, float, float]:
    """(mean % error, RMSE, R^2, adjusted R^2 with one predictor)."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.shape != t.shape:
        raise ValueError("estimates and truths must pair up")
    n = len(t)
    if n < 3:
        raise ValueError("need at least 3 pairs for adjusted R^2")
    if np.any(t == 0):
        raise ValueError("true size of zero makes the percentage error undefined")
    resid = e - t
    mpe = float(np.mean(np.abs(resid) / np.abs(t)) * 100.0)
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    return mpe, rmse, r2, adj


def size_pairs(detections: list[Detection], truths: list[NestRecord],
               assoc_radius: float = 25.0) -> tuple[list[float], list[float]]:
    """(estimate, true area) for each matched truth, from its highest-scoring detection."""
    txy = np.array([t.center_xy for t in truths], dtype=float).reshape(-1, 2)
    best: dict[int, Detection] = {}
    for d in detections:
        if len(txy) == 0:
            break
        dist = np.hypot(*(txy - np.asarray(d.xy)).T)
        k = int(np.argmin(dist))
        if dist[k] <= assoc_radius and (k not in best or d.score > best[k].score):
            best[k] = d
    keys = sorted(best)
    return [best[k].size for k in keys], [truths[k].area for k in keys]


def f1_score(report: MetricsReport) -> float:
    """F1 from detection rate (recall) and 1 - false-alarm rate (precision)."""
    recall = report.detection_rate / 100.0
    precision = 1.0 - report.false_alarm_rate / 100.0 if report.n_detections else 0.0
    return 0.0 if recall + precision == 0 else 2 * recall * precision / (recall + precision)


def write_detections_csv(detections: list[Detection], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "size_m2", "score", "members"])
        for d in detections:
            w.writerow([f"{d.xy[0]:.3f}", f"{d.xy[1]:.3f}", f"{d.size:.4f}", f"{d.score:.6f}",
                        d.members])


def write_pgm(image: Image, path: str, lo: float | None = None, hi: float | None = None) -> None:
    """8-bit binary PGM of ``image`` with north (high y) at the top."""
    a = np.asarray(image.samples, dtype=float)
    lo = float(a.min()) if lo is None else lo
    hi = float(a.max()) if hi is None else hi
    scaled = np.zeros_like(a) if hi <= lo else (np.clip(a, lo, hi) - lo) / (hi - lo)
    pix = np.round(scaled[::-1] * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode())
        fh.write(pix.tobytes())
