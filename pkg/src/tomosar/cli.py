"""Command-line pipeline: ``tomosar <stage> --config FILE [--seed N] [--preset NAME]``.

Every stage reads the files written by the previous ones under the
configured work directory, so stages can be re-run independently.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys

import jsonschema
import numpy as np

from . import backprojection, dataset, pipeline, tomography
from .core import GeoGrid, RasterError, TomographicStack, make_rng, read_raster, write_raster
from .echosim import EchoSet, range_bins_for, simulate_echoes
from .neuralnet import AdamConfig, InputScaler, Network, TrainConfig, TrainingDiverged, build_network, train
from .scene import (NEST_PRESETS, NestSpec, PlacementError, RadarParams, SoilModel, TreeSpec,
                    build_forest, carve_nest, helical_trajectory, linear_trajectory, read_nest_csv,
                    write_nest_csv)

log = logging.getLogger("tomosar")

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "paths": {"workdir": "tomosar_out", "models": None},
    "radar": {"center_frequency": 425e6, "bandwidth": 50e6, "azimuth_aperture_deg": 55.9,
              "elevation_aperture_deg": 69.3},
    "soil": {"relative_permittivity": 4.0, "mean_reflectivity": 1.0, "lattice_spacing": 0.25,
             "depth": 2.4, "jitter": 0.5, "loss_db_per_m": 0.0},
    "trees": {"height": 10.0, "spacing": 2.5, "diameter": 0.25, "scatterer_step": 0.5,
              "amplitude": 10.0, "rows": 3, "cols": 3},
    "regions": [{"id": 1, "origin": [-6.0, -6.0], "size": [12.0, 12.0], "nests": []}],
    "trajectory": {"kind": "helical", "radius_start": 23.0, "radius_end": 26.0,
                   "alt_start": 27.0, "alt_end": 40.0, "turns": 4, "arc_step": 0.25,
                   "start": [-30.0, -30.0, 35.0], "end": [30.0, -30.0, 35.0]},
    "simulation": {"method": "gridded", "oversample": 16, "noise_snr_db": None,
                   "max_depth": 2.5},
    "focus": {"spacing": 0.2, "depths": [0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.1],
              "interpolation": "linear", "radiometric": True, "gain_floor": 0.1,
              "single_layer": None},
    "profile": {"start": [-5.0, 0.0], "end": [5.0, 0.0], "ref": 1.0},
    "dataset": {"tile_m": 12.0, "stride_m": 4.0, "central_m": 4.0, "validation_region": 5,
                "positive_threshold": 0.5, "augment_copies": 8, "flips": True,
                "rotations": True, "gain_range": [0.8, 1.25]},
    "train": {"profile": "downscaled", "epochs_detection": 35, "epochs_size": 40, "batch": 64,
              "lr": 3e-5, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "log_input": True},
    "eval": {"assoc_radius": 25.0, "cluster_radius": 8.0, "p_threshold": 0.5, "regions": None},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_xy = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_xyz = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


SCHEMA = _obj({
    "version": {"const": CONFIG_VERSION},
    "seed": {"type": "integer", "minimum": 0},
    "paths": _obj({"workdir": {"type": "string"}, "models": {"type": ["string", "null"]}}),
    "radar": _obj({"center_frequency": _pos, "bandwidth": _pos, "azimuth_aperture_deg": _pos,
                   "elevation_aperture_deg": _pos}),
    "soil": _obj({"relative_permittivity": {"type": "number", "minimum": 1},
                  "mean_reflectivity": _pos, "lattice_spacing": _pos, "depth": _pos,
                  "jitter": {"type": "number", "minimum": 0, "maximum": 0.5},
                  "loss_db_per_m": {"type": "number", "minimum": 0}}),
    "trees": {"oneOf": [{"type": "null"}, _obj({
        "height": _pos, "spacing": _pos, "diameter": _pos, "scatterer_step": _pos,
        "amplitude": _num, "rows": {"type": ["integer", "null"], "minimum": 0},
        "cols": {"type": ["integer", "null"], "minimum": 0}})]},
    "regions": {"type": "array", "minItems": 1, "items": _obj({
        "id": {"type": "integer", "minimum": 1},
        "origin": _xy,
        "size": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "nests": {"type": "array", "items": _obj({
            "chambers": {"enum": sorted(NEST_PRESETS)}, "center": _xy}, ["chambers", "center"])},
        "random_nests": _obj({
            "count": {"type": "integer", "minimum": 0},
            "presets": {"type": "array", "items": {"enum": sorted(NEST_PRESETS)}, "minItems": 1},
            "margin": {"type": "number", "minimum": 0},
            "min_separation": {"type": "number", "minimum": 0}}, ["count"]),
    }, ["id", "origin", "size"])},
    "trajectory": _obj({
        "kind": {"enum": ["helical", "linear"]}, "radius_start": _pos, "radius_end": _pos,
        "alt_start": _pos, "alt_end": _pos, "turns": {"type": "number", "minimum": 1},
        "arc_step": _pos, "start": _xyz, "end": _xyz}),
    "simulation": _obj({"method": {"enum": ["gridded", "direct"]},
                        "oversample": {"type": "integer", "minimum": 2},
                        "noise_snr_db": {"type": ["number", "null"]}, "max_depth": _pos}),
    "focus": _obj({"spacing": _pos,
                   "depths": {"type": "array", "items": {"type": "number", "minimum": 0},
                              "minItems": 1},
                   "interpolation": {"enum": ["linear", "nearest"]}, "radiometric": {"type": "boolean"},
                   "gain_floor": {"type": "number", "minimum": 0, "maximum": 1},
                   "single_layer": {"type": ["number", "null"], "minimum": 0}}),
    "profile": _obj({"start": _xy, "end": _xy, "ref": _pos}),
    "dataset": _obj({"tile_m": _pos, "stride_m": _pos, "central_m": _pos,
                     "validation_region": {"type": "integer"},
                     "positive_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                     "augment_copies": {"type": "integer", "minimum": 0},
                     "flips": {"type": "boolean"}, "rotations": {"type": "boolean"},
                     "gain_range": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}}),
    "train": _obj({"profile": {"enum": ["downscaled", "full"]},
                   "epochs_detection": {"type": "integer", "minimum": 1},
                   "epochs_size": {"type": "integer", "minimum": 1},
                   "batch": {"type": "integer", "minimum": 1},
                   "lr": {"type": "number", "minimum": 0}, "beta1": _num, "beta2": _num,
                   "eps": _pos, "log_input": {"type": "boolean"}}),
    "eval": _obj({"assoc_radius": {"type": "number", "minimum": 0}, "cluster_radius": _pos,
                  "p_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                  "regions": {"type": ["array", "null"], "items": {"type": "integer"}}}),
})


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _field_regions(n_regions: int = 5, size: float = 100.0, nests: int = 8,
                   presets=(6, 20, 50, 100)) -> list[dict]:
    return [{"id": k + 1, "origin": [0.0, 0.0], "size": [size, size],
             "random_nests": {"count": nests, "presets": list(presets), "margin": 12.0,
                              "min_separation": 20.0}} for k in range(n_regions)]


PRESETS = {
    "sim-6ch": {"regions": [{"id": 1, "origin": [-6.0, -6.0], "size": [12.0, 12.0],
                             "nests": [{"chambers": 6, "center": [0.0, 0.0]}]}]},
    "trees-only": {"regions": [{"id": 1, "origin": [-6.0, -6.0], "size": [12.0, 12.0],
                                "nests": []}]},
    # five field-scale regions on a coarser grid with the downscaled network
    "field-5": {
        "trees": {"height": 10.0, "spacing": 3.4, "diameter": 0.25, "scatterer_step": 0.5,
                  "amplitude": 10.0, "rows": None, "cols": None},
        "soil": {"lattice_spacing": 0.35},
        "regions": _field_regions(),
        "trajectory": {"kind": "helical", "radius_start": 115.0, "radius_end": 165.0,
                       "alt_start": 120.0, "alt_end": 80.0, "turns": 1, "arc_step": 0.35},
        "focus": {"spacing": 0.4, "depths": [0.0, 0.6, 1.2, 1.8]},
        "dataset": {"validation_region": 5},
    },
    "field-5-linear": {
        "trees": {"height": 10.0, "spacing": 3.4, "diameter": 0.25, "scatterer_step": 0.5,
                  "amplitude": 10.0, "rows": None, "cols": None},
        "soil": {"lattice_spacing": 0.35},
        "regions": _field_regions(),
        "trajectory": {"kind": "linear", "start": [-100.0, -120.0, 100.0],
                       "end": [100.0, -120.0, 100.0], "arc_step": 0.35},
        "focus": {"spacing": 0.4, "depths": [0.0, 0.6, 1.2, 1.8], "single_layer": 0.0},
        "dataset": {"validation_region": 5},
    },
}


def load_config(path: str | None = None, preset: str | None = None, seed: int | None = None) -> dict:
    """Defaults, then the preset, then the file, then ``seed``; validated throughout."""
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[preset])
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        _validate(user)
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}") from e
    ids = [r["id"] for r in cfg.get("regions", [])]
    if len(set(ids)) != len(ids):
        raise ConfigError("region ids must be unique")
    depths = cfg.get("focus", {}).get("depths")
    if depths is not None and any(b <= a for a, b in zip(depths, depths[1:])):
        raise ConfigError("focus depths must be strictly increasing")


# ---------------------------------------------------------------------------
# helpers


def _wd(cfg: dict, *parts: str) -> str:
    path = os.path.join(cfg["paths"]["workdir"], *parts)
    os.makedirs(os.path.dirname(path) if parts else path, exist_ok=True)
    return path


def _require(path: str, what: str) -> None:
    if not os.path.exists(path):
        raise DataError(f"missing {what}: {path} (run the earlier stage first)")


def _region_extent(region: dict) -> GeoGrid:
    return GeoGrid.covering(region["origin"][0], region["origin"][1], region["size"][0],
                            region["size"][1], spacing=0.05)


def _region_center(region: dict) -> tuple[float, float]:
    return (region["origin"][0] + 0.5 * region["size"][0],
            region["origin"][1] + 0.5 * region["size"][1])


def _focus_grid(cfg: dict, region: dict) -> GeoGrid:
    f = cfg["focus"]
    s = f["spacing"]
    nx = int(round(region["size"][0] / s))
    ny = int(round(region["size"][1] / s))
    return GeoGrid(tuple(region["origin"]), s, nx, ny, tuple(f["depths"]))


def _soil(cfg) -> SoilModel:
    return SoilModel(**cfg["soil"])


def _radar(cfg) -> RadarParams:
    return RadarParams(**cfg["radar"])


def _trajectory(cfg: dict, region: dict):
    t = cfg["trajectory"]
    cx, cy = _region_center(region)
    if t["kind"] == "helical":
        return helical_trajectory(t["radius_start"], t["radius_end"], t["alt_start"], t["alt_end"],
                                  t["turns"], t["arc_step"], center=(cx, cy))
    start = np.asarray(t["start"], dtype=float) + [cx, cy, 0.0]
    end = np.asarray(t["end"], dtype=float) + [cx, cy, 0.0]
    return linear_trajectory(start, end, t["arc_step"], look_at=(cx, cy, 0.0))


def _nest_specs(region: dict, rng: np.random.Generator) -> list[NestSpec]:
    specs = [NestSpec.preset(n["chambers"], tuple(n["center"])) for n in region.get("nests", [])]
    rn = region.get("random_nests")
    if rn:
        margin = rn.get("margin", 12.0)
        sep = rn.get("min_separation", 20.0)
        presets = rn.get("presets", sorted(NEST_PRESETS))
        x0, y0 = region["origin"]
        w, h = region["size"]
        centers = [s.center_xy for s in specs]
        for k in range(rn["count"]):
            for _ in range(10_000):
                c = (float(rng.uniform(x0 + margin, x0 + w - margin)),
                     float(rng.uniform(y0 + margin, y0 + h - margin)))
                if all(math.hypot(c[0] - q[0], c[1] - q[1]) >= sep for q in centers):
                    break
            else:
                raise PlacementError(f"region {region['id']}: cannot place nest {k + 1} "
                                     f"{sep} m from the others")
            centers.append(c)
            specs.append(NestSpec.preset(presets[k % len(presets)], c))
    return specs


def _regions(cfg: dict, ids=None) -> list[dict]:
    regs = cfg["regions"]
    if ids is None:
        return regs
    known = {r["id"]: r for r in regs}
    missing = [i for i in ids if i not in known]
    if missing:
        raise ConfigError(f"unknown region ids {missing}")
    return [known[i] for i in ids]


def _tiles(cfg) -> dataset.TileConfig:
    d = cfg["dataset"]
    return dataset.TileConfig(d["tile_m"], d["stride_m"], d["central_m"])


def _models_dir(cfg) -> str:
    return cfg["paths"]["models"] or _wd(cfg, "models", "")


# ---------------------------------------------------------------------------
# stages


def cmd_simulate(cfg: dict) -> None:
    """Scene JSON, ground-truth CSV and echoes for every region."""
    root = make_rng(cfg["seed"])
    trees = None if cfg["trees"] is None else TreeSpec(**cfg["trees"])
    soil, radar = _soil(cfg), _radar(cfg)
    for region in cfg["regions"]:
        rng = np.random.Generator(root.bit_generator.jumped(region["id"]))
        extent = _region_extent(region)
        scene = build_forest(trees, soil, extent, rng)
        for k, spec in enumerate(_nest_specs(region, rng), start=1):
            scene = carve_nest(scene, spec, rng, nest_id=k)
        traj = _trajectory(cfg, region)
        sim = cfg["simulation"]
        bins = range_bins_for(extent, traj, radar, soil, max_depth=sim["max_depth"],
                              heights=(0.0, trees.height if trees else 0.0))
        log.info("region %d: %d scatterers, %d pulses, %d bins", region["id"], len(scene),
                 len(traj), bins.count)
        echoes = simulate_echoes(scene, traj, radar, soil, bins, method=sim["method"],
                                 oversample=sim["oversample"], noise_snr_db=sim["noise_snr_db"],
                                 rng=rng)
        base = _wd(cfg, f"region_{region['id']}", "")
        scene.to_json(os.path.join(base, "scene.json"), seed=cfg["seed"], region=region["id"])
        write_nest_csv(scene.nests, os.path.join(base, "nests.csv"))
        echoes.save(os.path.join(base, "echoes"))


def cmd_focus(cfg: dict) -> None:
    """Back-projected stack per region.

    With ``focus.single_layer`` set, one layer is focused at that depth and
    copied into every configured depth plane (the input layout the networks
    expect).
    """
    f = cfg["focus"]
    backprojection.set_threads()
    for region in cfg["regions"]:
        base = _wd(cfg, f"region_{region['id']}", "")
        path = os.path.join(base, "echoes")
        _require(path + ".json", "echo file")
        echoes = EchoSet.load(path)
        grid = _focus_grid(cfg, region)
        fc = backprojection.FocusConfig(grid, f["interpolation"], f["radiometric"], _soil(cfg),
                                        f["gain_floor"])
        if f["single_layer"] is None:
            stack = backprojection.backproject_stack(echoes, fc)
        else:
            layer = backprojection.backproject_layer(echoes, grid, f["single_layer"], fc)
            cube = np.repeat(layer.samples[None], len(grid.depths), axis=0)
            valid = np.repeat(layer.valid[None], len(grid.depths), axis=0)
            stack = TomographicStack.from_array(grid, cube, valid)
        write_raster(stack, os.path.join(base, "stack"))


def cmd_profile(cfg: dict) -> None:
    """One CSV per region: distance along the transect, then dB per layer."""
    p = cfg["profile"]
    for region in cfg["regions"]:
        base = _wd(cfg, f"region_{region['id']}", "")
        path = os.path.join(base, "stack")
        _require(path + ".json", "stack file")
        stack = read_raster(path)
        cx, cy = _region_center(region)
        start = (cx + p["start"][0], cy + p["start"][1])
        end = (cx + p["end"][0], cy + p["end"][1])
        profs = [tomography.extract_profile(layer, start, end, ref=p["ref"]) for layer in stack.layers]
        with open(os.path.join(base, "profile.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["distance_m"] + [f"depth_{d:.2f}_db" for d in stack.grid.depths])
            for i, dist in enumerate(profs[0].axis):
                w.writerow([f"{dist:.3f}"] + [f"{pr.reflectivity_db[i]:.4f}" for pr in profs])


def cmd_dataset(cfg: dict) -> None:
    """Detection and size patch sets over every region, in (region, row, col) order."""
    tiles = _tiles(cfg)
    det_sets, size_sets = [], []
    for region in sorted(cfg["regions"], key=lambda r: r["id"]):
        base = _wd(cfg, f"region_{region['id']}", "")
        for name in ("stack", "nests"):
            _require(os.path.join(base, name + (".json" if name == "stack" else ".csv")),
                     f"{name} file")
        stack = read_raster(os.path.join(base, "stack"))
        nests = read_nest_csv(os.path.join(base, "nests.csv"))
        ref_det = dataset.render_reference(nests, stack.grid, dataset.DETECTION)
        ref_size = dataset.render_reference(nests, stack.grid, dataset.SIZE)
        det = dataset.tile_patches(stack, ref_det, tiles, region["id"], dataset.DETECTION)
        det_sets.append(det)
        size_sets.append(det.with_labels(dataset.tile_labels(ref_size, tiles), dataset.SIZE))
    out = _wd(cfg, "dataset", "")
    dataset.PatchSet.concat(det_sets).save(os.path.join(out, "detection"))
    dataset.PatchSet.concat(size_sets).save(os.path.join(out, "size"))


def _adam(cfg) -> AdamConfig:
    t = cfg["train"]
    return AdamConfig(t["lr"], t["beta1"], t["beta2"], t["eps"])


def cmd_train(cfg: dict) -> None:
    """Detection then size network on every region but the validation one."""
    d, t = cfg["dataset"], cfg["train"]
    src = _wd(cfg, "dataset", "")
    models = _models_dir(cfg)
    os.makedirs(models, exist_ok=True)
    root = make_rng(cfg["seed"] + 1)
    policy = dataset.AugmentPolicy(d["flips"], d["rotations"], tuple(d["gain_range"]),
                                   d["augment_copies"])
    det_all = None
    for task, epochs in (("detection", t["epochs_detection"]), ("size", t["epochs_size"])):
        path = os.path.join(src, task)
        _require(path + ".json", f"{task} patch set")
        ps = dataset.PatchSet.load(path)
        if task == "detection":
            det_all = ps
        train_set, val_set = dataset.split_regions(ps, d["validation_region"])
        # augment the same patches for both tasks: those positive for detection
        det_train, _ = dataset.split_regions(det_all, d["validation_region"])
        pos = det_train.labels >= d["positive_threshold"]
        aug_rng = np.random.Generator(root.bit_generator.jumped(1))
        augmented = dataset.augment_positives(train_set, aug_rng, policy, mask=pos)
        net_rng = np.random.Generator(root.bit_generator.jumped(2 if task == "detection" else 3))
        net = build_network(task, tuple(ps.images.shape[1:]), t["profile"], net_rng)
        net.scaler = InputScaler(ps.images.shape[-1], t["log_input"]).fit(train_set.images)
        config = TrainConfig.for_task(task, epochs=epochs, batch=t["batch"], adam=_adam(cfg))
        log.info("%s: %d training patches (%d after augmentation), %d validation", task,
                 len(train_set), len(augmented), len(val_set))
        result = train(net, augmented.images, augmented.labels, config, net_rng,
                       validation=(val_set.images, val_set.labels))
        net.save(os.path.join(models, task))
        result.write_csv(os.path.join(models, f"curves_{task}.csv"))


def _eval_regions(cfg) -> list[dict]:
    ids = cfg["eval"]["regions"]
    return _regions(cfg, ids if ids is not None else [cfg["dataset"]["validation_region"]])


def cmd_infer(cfg: dict) -> None:
    """Detection, size and refined maps plus clustered detections per evaluated region."""
    e = cfg["eval"]
    models = _models_dir(cfg)
    for task in ("detection", "size"):
        _require(os.path.join(models, task) + ".json", f"{task} network")
    detector = Network.load(os.path.join(models, "detection"))
    sizer = Network.load(os.path.join(models, "size"))
    for region in _eval_regions(cfg):
        base = _wd(cfg, f"region_{region['id']}", "")
        _require(os.path.join(base, "stack.json"), "stack file")
        stack = read_raster(os.path.join(base, "stack"))
        nm = pipeline.build_nest_map(detector, sizer, stack, _tiles(cfg), e["cluster_radius"],
                                     e["p_threshold"])
        out = _wd(cfg, "infer", f"region_{region['id']}_")
        write_raster(nm.detection, out + "detection")
        write_raster(nm.size, out + "size")
        write_raster(nm.refined, out + "refined")
        pipeline.write_detections_csv(nm.detections, out + "detections.csv")
        pipeline.write_pgm(nm.refined, out + "refined.pgm")


def _read_detections(path: str) -> list[pipeline.Detection]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [pipeline.Detection((float(r["x"]), float(r["y"])), float(r["size_m2"]),
                                   float(r["score"]), int(r["members"])) for r in csv.DictReader(fh)]


def cmd_evaluate(cfg: dict) -> pipeline.MetricsReport:
    """MetricsReport pooled over the evaluated regions, written as JSON.

    Association runs per region (regions share local coordinates); counts,
    errors and size pairs are then pooled.
    """
    e = cfg["eval"]
    reports, est, true = [], [], []
    for region in _eval_regions(cfg):
        base = _wd(cfg, f"region_{region['id']}", "")
        det_path = _wd(cfg, "infer", f"region_{region['id']}_detections.csv")
        _require(det_path, "detections file")
        _require(os.path.join(base, "nests.csv"), "ground truth")
        dets = _read_detections(det_path)
        truths = read_nest_csv(os.path.join(base, "nests.csv"))
        reports.append(pipeline.evaluate(dets, truths, e["assoc_radius"]))
        a, b = pipeline.size_pairs(dets, truths, e["assoc_radius"])
        est += a
        true += b
    report = pipeline.pool_reports(reports)
    if len(est) >= 3:
        (report.size_mean_pct_error, report.size_rmse, report.size_r2,
         report.size_adjusted_r2) = pipeline.size_metrics(est, true)
    report.to_json(_wd(cfg, "eval", "metrics.json"))
    return report


COMMANDS = {"simulate": cmd_simulate, "focus": cmd_focus, "profile": cmd_profile,
            "dataset": cmd_dataset, "train": cmd_train, "infer": cmd_infer,
            "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tomosar", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--preset", choices=sorted(PRESETS))
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset, args.seed)
        result = COMMANDS[args.command](cfg)
        if isinstance(result, pipeline.MetricsReport):
            print(json.dumps({"detection_rate": result.detection_rate,
                              "false_alarm_rate": result.false_alarm_rate,
                              "planimetric_std": result.planimetric_std,
                              "size_mean_pct_error": result.size_mean_pct_error}))
    except ConfigError as e:
        print(f"tomosar: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, RasterError, FileNotFoundError, PlacementError) as e:
        print(f"tomosar: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as e:
        print(f"tomosar: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
