"""Command-line pipeline: slice -> split -> gen -> qc -> mix -> train -> eval -> report.

Every subcommand reads its defaults from the matching section of ``--config``
(JSON or TOML), lets flags override them, prints a JSON report on stdout and
optionally writes it with ``--report``. Relative paths are resolved against the
run root (``--run-root``, else ``$BRAINAUG_RUN_ROOT``, else the working
directory) and are written back relative to it, so identical runs in
different directories produce identical reports.
"""
from __future__ import annotations

import argparse
import csv
import fcntl
import hashlib
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import qc, swd, synthsrc, volio
from .errors import BrainaugError, ConfigError, EmptyInputError, SizeError
from .unet import TrainConfig, UNetConfig, evaluate, load_checkpoint, save_checkpoint, train

log = logging.getLogger("brainaug")

RUN_ROOT_ENV = "BRAINAUG_RUN_ROOT"
RESULT_COLUMNS = ["run", "dataset_fraction", "n_real", "n_synth", "total", "classes",
                  "test_dice_error_pct", "val_error", "best_epoch"]

DEFAULTS = {
    "slice": {"mr_suffix": "_t1ce", "mask_suffix": "_seg"},
    "split": {"ratios": [0.8, 0.1, 0.1], "seed": 0, "by_volume": False},
    "remap": {"classes": 2},
    "gen": {"n": 100, "seed": 1, "source_id": None, "perturb": False, "params": {}},
    "phantom-volumes": {"n_volumes": 4, "slices": 20, "size": [60, 60], "seed": 0, "params": {}},
    "qc": {"threshold": qc.DEFAULT_THRESHOLD, "fraction": 1.0},
    "swd": {"levels": 3, "patches": 128, "projections": 512, "seed": 0},
    "mix": {"n_real": None, "n_synth": 0, "seed": 0},
    "train": {
        "classes": 2, "n_real": None, "n_synth": 0, "fraction": 1.0, "shuffle_seed": 0, "init_seed": 0,
        "epochs": 150, "lr": 1e-4, "batch_size": 8, "levels": 2, "base_filters": 8, "dtype": "float32",
        "bn_momentum": 0.99,
    },
    "eval": {},
    "report": {},
}


# ---------------------------------------------------------------- helpers


class Ctx:
    def __init__(self, root: Path, cfg: dict):
        self.root = root
        self.cfg = cfg

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.root / p

    def rel(self, p) -> str:
        return os.path.relpath(os.path.abspath(p), os.path.abspath(self.root))


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    text = p.read_bytes()
    if p.suffix == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    return json.loads(text)


def _options(ctx: Ctx, cmd: str, args) -> dict:
    opts = dict(DEFAULTS[cmd])
    section = ctx.cfg.get(cmd, {})
    unknown = set(section) - set(opts) - {"experiments"}
    if unknown:
        raise ConfigError([f"[{cmd}] unknown key {k!r}" for k in sorted(unknown)])
    opts.update({k: v for k, v in section.items() if k != "experiments"})
    for k in opts:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            opts[k] = v
    return opts


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_digest(m: ds.Manifest) -> str:
    """Hash of every referenced file's content, in manifest order."""
    h = hashlib.sha256()
    for e in m.entries:
        for p in (e.mr, e.mask):
            if p is not None:
                h.update(hashlib.sha256(m.resolve(p).read_bytes()).digest())
    return h.hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


@contextmanager
def _locked(path):
    lock = open(str(path) + ".lock", "a+")
    try:
        fcntl.flock(lock, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(lock, fcntl.LOCK_UN)
        lock.close()


def _require(violations, cond, msg):
    if not cond:
        violations.append(msg)


# ---------------------------------------------------------------- slice


def cmd_slice(ctx: Ctx, args) -> dict:
    o = _options(ctx, "slice", args)
    if not args.input or not args.out:
        raise ConfigError(["slice: --in and --out are required"])
    in_dir, out_dir = ctx.path(args.input), ctx.path(args.out)
    mr_files = sorted(p for p in in_dir.glob(f"*{o['mr_suffix']}.nii*") if p.suffix in (".nii", ".gz"))
    if not mr_files:
        raise EmptyInputError(f"no '*{o['mr_suffix']}.nii' volumes in {ctx.rel(in_dir)}")
    (out_dir / "mr").mkdir(parents=True, exist_ok=True)
    (out_dir / "mask").mkdir(parents=True, exist_ok=True)
    entries, hashes = [], {}
    for mr_path in mr_files:
        sid = mr_path.name.split(o["mr_suffix"] + ".nii")[0]
        ext = mr_path.name[len(sid) + len(o["mr_suffix"]):]
        mask_path = in_dir / f"{sid}{o['mask_suffix']}{ext}"
        if not mask_path.exists():
            raise EmptyInputError(f"no label volume {mask_path.name} for {mr_path.name}")
        mr_vol, lab_vol = volio.read_nifti(mr_path, sid), volio.read_nifti(mask_path, sid)
        if mr_vol.dims != lab_vol.dims:
            raise SizeError(f"{sid}: MR dims {mr_vol.dims} != label dims {lab_vol.dims}")
        hashes[mr_path.name] = sha256_file(mr_path)
        hashes[mask_path.name] = sha256_file(mask_path)
        width = max(3, len(str(mr_vol.dims[2] - 1)))
        for s_mr, s_lab in zip(volio.slice_axial(mr_vol), volio.slice_axial(lab_vol)):
            k = s_mr.origin[1]
            name = volio.slice_filename(sid, k, width)
            lab = volio.Slice2D(s_lab.pixels, volio.MASK8, s_lab.origin)
            lab.check_range(n_classes=ds.N_SOURCE_CLASSES)
            volio.write_png(volio.pad_to_pow2(s_mr), out_dir / "mr" / name)
            volio.write_png(volio.pad_to_pow2(lab), out_dir / "mask" / name)
            entries.append(ds.Entry(f"mr/{name}", f"mask/{name}", sid, k, ds.REAL))
    manifest = ds.Manifest(entries, "all", None, out_dir)
    manifest.save(out_dir / "slices.json")
    return {
        "command": "slice",
        "n_volumes": len(mr_files),
        "n_slices": len(entries),
        "manifest": ctx.rel(out_dir / "slices.json"),
        "input_hashes": hashes,
    }


def cmd_phantom_volumes(ctx: Ctx, args) -> dict:
    o = _options(ctx, "phantom-volumes", args)
    if not args.out:
        raise ConfigError(["phantom-volumes: --out is required"])
    out = ctx.path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = synthsrc.PhantomParams.from_dict({**o["params"], "image_size": list(o["size"])})
    names = []
    for i in range(int(o["n_volumes"])):
        sid = f"vol{i:03d}"
        mr, lab = synthsrc.gen_phantom_volume(params, int(o["slices"]), [int(o["seed"]), i], sid)
        volio.write_nifti(mr, out / f"{sid}_t1ce.nii", np.int16)
        volio.write_nifti(lab, out / f"{sid}_seg.nii", np.uint8)
        names += [f"{sid}_t1ce.nii", f"{sid}_seg.nii"]
    return {"command": "phantom-volumes", "files": names, "seed": o["seed"], "params": params.to_dict()}


# ---------------------------------------------------------------- split / remap / mix


def cmd_split(ctx: Ctx, args) -> dict:
    o = _options(ctx, "split", args)
    v = []
    _require(v, args.manifest is not None, "split: --manifest is required")
    _require(v, args.out is not None, "split: --out is required")
    ratios = list(o["ratios"])
    _require(v, len(ratios) == 3 and abs(sum(ratios) - 1) < 1e-9 and min(ratios) >= 0,
             f"split: ratios {ratios} must be three non-negative numbers summing to 1")
    if v:
        raise ConfigError(v)
    src = ds.Manifest.load(ctx.path(args.manifest))
    out = ctx.path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    parts = ds.split(src, ratios, int(o["seed"]), bool(o["by_volume"]))
    paths = {}
    for m in parts:
        p = out / f"{m.split_tag}.json"
        m.save(p)
        paths[m.split_tag] = ctx.rel(p)
    return {
        "command": "split",
        "seed": o["seed"],
        "ratios": ratios,
        "by_volume": bool(o["by_volume"]),
        "sizes": {m.split_tag: len(m) for m in parts},
        "manifests": paths,
        "input_hash": manifest_digest(src),
    }


def cmd_remap(ctx: Ctx, args) -> dict:
    o = _options(ctx, "remap", args)
    if args.manifest is None or args.out is None:
        raise ConfigError(["remap: --manifest and --out are required"])
    scheme = ds.ClassScheme.for_classes(int(o["classes"]))
    src = ds.Manifest.load(ctx.path(args.manifest))
    out = ctx.path(args.out)
    (out / "mask").mkdir(parents=True, exist_ok=True)
    entries = []
    for e in src.entries:
        s = volio.read_png(src.resolve(e.mask))
        name = Path(e.mask).name
        volio.write_png(volio.Slice2D(ds.remap_classes(s.pixels, scheme), volio.MASK8), out / "mask" / name)
        mr = None if e.mr is None else os.path.relpath(os.path.abspath(src.resolve(e.mr)), os.path.abspath(out))
        entries.append(ds.Entry(mr, f"mask/{name}", e.source, e.index, e.provenance))
    m = ds.Manifest(entries, src.split_tag, src.seed, out)
    m.save(out / "manifest.json")
    return {"command": "remap", "classes": scheme.n_classes, "mapping": list(scheme.mapping), "n": len(m),
            "manifest": ctx.rel(out / "manifest.json"), "input_hash": manifest_digest(src)}


def cmd_mix(ctx: Ctx, args) -> dict:
    o = _options(ctx, "mix", args)
    if args.real is None or args.synth is None or args.out is None:
        raise ConfigError(["mix: --real, --synth and --out are required"])
    real = ds.Manifest.load(ctx.path(args.real))
    synth = ds.Manifest.load(ctx.path(args.synth))
    n_real = len(real) if o["n_real"] is None else int(o["n_real"])
    n_synth = int(o["n_synth"])
    mixed = ds.mix(real, synth, n_real, n_synth, int(o["seed"]))
    out = ctx.path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mixed.save(out)
    return {
        "command": "mix", "n_real": n_real, "n_synth": n_synth, "total": len(mixed), "seed": o["seed"],
        "manifest": ctx.rel(out),
        "input_hashes": {"real": manifest_digest(real), "synth": manifest_digest(synth)},
    }


# ---------------------------------------------------------------- gen / qc / swd


def cmd_gen(ctx: Ctx, args) -> dict:
    o = _options(ctx, "gen", args)
    v = []
    _require(v, args.out is not None, "gen: --out is required")
    _require(v, int(o["n"]) >= 1, "gen: n must be >= 1")
    if v:
        raise ConfigError(v)
    params = synthsrc.PhantomParams.from_dict(dict(o["params"]))
    renderer = params.perturbed() if o["perturb"] else None
    out = ctx.path(args.out)
    _, manifest = synthsrc.gen_synth_dataset(int(o["n"]), params, int(o["seed"]), out,
                                             source_id=o["source_id"], renderer_params=renderer)
    manifest.save(out / "synth.json")
    return {
        "command": "gen", "n": int(o["n"]), "seed": o["seed"], "perturb": bool(o["perturb"]),
        "params": params.to_dict(), "manifest": ctx.rel(out / "synth.json"),
        "output_hash": manifest_digest(manifest),
    }


def cmd_qc(ctx: Ctx, args) -> dict:
    o = _options(ctx, "qc", args)
    v = []
    _require(v, args.reference is not None and args.synth is not None and args.out is not None,
             "qc: --reference, --synth and --out are required")
    _require(v, float(o["threshold"]) > 0, "qc: threshold must be positive")
    _require(v, 0 < float(o["fraction"]) <= 1, "qc: fraction must be in (0, 1]")
    if v:
        raise ConfigError(v)
    ref = ds.take_fraction(ds.Manifest.load(ctx.path(args.reference)), o["fraction"])
    synth = ds.Manifest.load(ctx.path(args.synth))
    ref_masks, ref_empty = ds.filter_empty(ds.load_masks(ref))
    stats = qc.batch_pixel_stats(ref_masks)
    out = ctx.path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth_masks = ds.load_masks(synth)
    ids = [e.mask for e in synth.entries]
    report = qc.filter_dataset(synth_masks, stats, float(o["threshold"]), ids)
    kept = set(report.kept)
    kept_manifest = synth.derive([e for e in synth.entries if e.mask in kept])
    kept_manifest.save(out / "synth_qc.json")
    (out / "qc_report.json").write_text(report.to_json())
    return {
        "command": "qc", "threshold": report.threshold, "n_reference": len(ref_masks),
        "reference_empty_fraction": ref_empty, "n_synth": len(synth), "n_kept": len(report.kept),
        "discarded_fraction": report.discarded_fraction,
        "manifest": ctx.rel(out / "synth_qc.json"), "qc_report": ctx.rel(out / "qc_report.json"),
        "input_hashes": {"reference": manifest_digest(ref), "synth": manifest_digest(synth)},
    }


def _load_png_dir(d: Path):
    files = sorted(d.glob("*.png"))
    if not files:
        raise EmptyInputError(f"no PNG files in {d}")
    return [volio.read_png(f).pixels.astype(np.float64) for f in files]


def cmd_swd(ctx: Ctx, args) -> dict:
    o = _options(ctx, "swd", args)
    if args.ref is None or not args.gen:
        raise ConfigError(["swd: --ref and --gen are required"])
    cfg = swd.SWDConfig(n_levels=int(o["levels"]), patches_per_image=int(o["patches"]),
                        n_projections=int(o["projections"]), seed=int(o["seed"]))
    ref = _load_png_dir(ctx.path(args.ref))
    results = {}
    for g in args.gen:
        per_level, avg = swd.swd_score(_load_png_dir(ctx.path(g)), ref, cfg)
        results[g] = {"per_level": per_level, "average": avg}
    report = {"command": "swd", "config": asdict(cfg)}
    if len(args.gen) == 1:
        report.update(results[args.gen[0]])
    else:
        report["candidates"] = results
        report["selected"] = min(sorted(results), key=lambda k: results[k]["average"])
    return report


# ---------------------------------------------------------------- train / eval / report


def _experiments(ctx: Ctx, args) -> list:
    o = _options(ctx, "train", args)
    listed = ctx.cfg.get("train", {}).get("experiments")
    flag_defined = any(getattr(args, k, None) is not None for k in ("classes", "n_real", "n_synth", "fraction"))
    if listed and not flag_defined:
        return [{**o, **e} for e in listed]
    return [o]


def _validate_experiment(e, train_m, n_synth_avail):
    v = []
    _require(v, int(e["classes"]) in (7, 4, 2), f"classes must be 7, 4 or 2, got {e['classes']}")
    frac_ok = 0 < float(e["fraction"]) <= 1
    _require(v, frac_ok, f"fraction {e['fraction']} must be in (0, 1]")
    avail = len(ds.take_fraction(train_m, e["fraction"])) if frac_ok else 0
    n_real = avail if e["n_real"] is None else int(e["n_real"])
    _require(v, 0 <= n_real <= avail, f"n_real {n_real} exceeds the {avail} available real entries")
    _require(v, 0 <= int(e["n_synth"]) <= n_synth_avail,
             f"n_synth {e['n_synth']} exceeds the {n_synth_avail} available synthetic entries")
    _require(v, n_real + int(e["n_synth"]) > 0, "an experiment needs at least one training entry")
    _require(v, int(e["epochs"]) >= 1, "epochs must be >= 1")
    _require(v, float(e["lr"]) > 0, "lr must be positive")
    _require(v, int(e["batch_size"]) >= 1, "batch_size must be >= 1")
    return v


def run_name(e, n_real) -> str:
    return f"c{int(e['classes'])}_f{float(e['fraction']):g}_r{n_real}_s{int(e['n_synth'])}"


def _append_results(path: Path, row: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with _locked(path):
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            w = csv.DictWriter(fh, RESULT_COLUMNS)
            if new:
                w.writeheader()
            w.writerow(row)


def cmd_train(ctx: Ctx, args) -> dict:
    missing = [f for f in ("train_manifest", "val", "test", "out") if getattr(args, f) is None]
    if missing:
        raise ConfigError([f"train: --{m.replace('_manifest', '').replace('_', '-')} is required" for m in missing])
    train_m = ds.Manifest.load(ctx.path(args.train_manifest))
    val_m = ds.Manifest.load(ctx.path(args.val))
    test_m = ds.Manifest.load(ctx.path(args.test))
    synth_m = ds.Manifest.load(ctx.path(args.synth)) if args.synth else ds.Manifest([], "all", None, ctx.root)
    exps = _experiments(ctx, args)
    violations = []
    for i, e in enumerate(exps):
        violations += [f"experiment {i}: {m}" for m in _validate_experiment(e, train_m, len(synth_m))]
    if violations:
        raise ConfigError(violations)

    hashes = {"train": manifest_digest(train_m), "val": manifest_digest(val_m), "test": manifest_digest(test_m),
              "synth": manifest_digest(synth_m)}
    results_path = ctx.path(args.results) if args.results else ctx.path(args.out) / "results.csv"
    reports = []
    for e in exps:
        real = ds.take_fraction(train_m, e["fraction"])
        n_real = len(real) if e["n_real"] is None else int(e["n_real"])
        n_synth = int(e["n_synth"])
        name = e.get("name") or run_name(e, n_real)
        run_dir = ctx.path(args.out) / name
        run_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()

        mixed = ds.mix(real, synth_m, n_real, n_synth, int(e["shuffle_seed"]))
        mixed.save(run_dir / "train_mix.json")
        scheme = ds.ClassScheme.for_classes(int(e["classes"]))
        # stats and weights over every training entry, synthetic included
        stats = ds.compute_norm_stats(mixed)
        weights = ds.compute_class_weights(mixed, scheme.n_classes)
        ds.save_sidecar(run_dir / "norm_stats.json", stats)
        ds.save_sidecar(run_dir / "class_weights.json", weights)

        size = volio.read_png(mixed.resolve(mixed.entries[0].mr)).pixels.shape
        ucfg = UNetConfig(n_levels=int(e["levels"]), base_filters=int(e["base_filters"]), n_classes=scheme.n_classes,
                          input_size=size, seed=int(e["init_seed"]), dtype=e["dtype"],
                          bn_momentum=float(e["bn_momentum"]))
        tcfg = TrainConfig(lr=float(e["lr"]), batch_size=int(e["batch_size"]), epochs=int(e["epochs"]),
                           class_weights=weights, seed=int(e["shuffle_seed"]))
        result = train(ucfg, tcfg, mixed, val_m, stats)
        save_checkpoint(result.best, run_dir / "best.ckpt")
        result.write_log(run_dir / "train_log.csv")
        ev = evaluate(result.best, test_m, weights)
        wall = time.perf_counter() - t0

        spec = {
            "name": name, "class_scheme": scheme.n_classes, "n_real": n_real, "n_synth": n_synth,
            "dataset_fraction": float(e["fraction"]),
            "seeds": {"split": train_m.seed, "shuffle": int(e["shuffle_seed"]), "init": int(e["init_seed"])},
            "unet": ucfg.to_dict(),
            "train": {"lr": tcfg.lr, "batch_size": tcfg.batch_size, "epochs": tcfg.epochs},
        }
        report = {
            "command": "train",
            "spec": spec,
            "best_epoch": result.best.epoch,
            "val_error": result.best.val_error,
            "saved_epochs": [c.epoch for c in result.history],
            "test_dice_error_pct": ev.dice_error_pct,
            "per_class_dice": list(ev.per_class_dice),
            "norm_stats": asdict(stats),
            "class_weights": list(weights.w),
            "input_hashes": {**hashes, "train_mix": manifest_digest(mixed)},
            "artifacts": {
                "checkpoint": ctx.rel(run_dir / "best.ckpt"),
                "train_log": ctx.rel(run_dir / "train_log.csv"),
                "timing": ctx.rel(run_dir / "timing.json"),
                "results": ctx.rel(results_path),
            },
        }
        (run_dir / "run_report.json").write_text(_dump(report))
        (run_dir / "timing.json").write_text(_dump({"wall_time_s": wall}))
        _append_results(results_path, {
            "run": name, "dataset_fraction": float(e["fraction"]), "n_real": n_real, "n_synth": n_synth,
            "total": n_real + n_synth, "classes": scheme.n_classes,
            "test_dice_error_pct": repr(ev.dice_error_pct), "val_error": repr(result.best.val_error),
            "best_epoch": result.best.epoch,
        })
        reports.append(report)
    return reports[0] if len(reports) == 1 else {"command": "train", "runs": reports}


def cmd_eval(ctx: Ctx, args) -> dict:
    if args.checkpoint is None or args.test is None:
        raise ConfigError(["eval: --checkpoint and --test are required"])
    ckpt_path, test_path = ctx.path(args.checkpoint), ctx.path(args.test)
    if not ckpt_path.exists():
        raise EmptyInputError(f"missing checkpoint {ctx.rel(ckpt_path)}")
    ckpt = load_checkpoint(ckpt_path)
    test_m = ds.Manifest.load(test_path)
    ev = evaluate(ckpt, test_m)
    return {
        "command": "eval",
        "checkpoint": ctx.rel(ckpt_path),
        "best_epoch": ckpt.epoch,
        "val_error": ckpt.val_error,
        "test_dice_error_pct": ev.dice_error_pct,
        "per_class_dice": list(ev.per_class_dice),
        "input_hashes": {"checkpoint": sha256_file(ckpt_path), "test": manifest_digest(test_m)},
    }


def read_results(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({
            "run": r["run"], "dataset_fraction": float(r["dataset_fraction"]), "n_real": int(r["n_real"]),
            "n_synth": int(r["n_synth"]), "classes": int(r["classes"]),
            "error": float(r["test_dice_error_pct"]),
        })
    return out


def build_report(rows) -> dict:
    """Pivot result rows into mix x class-count tables with baseline deltas and best mixes.

    Rows are grouped by dataset fraction; within a group the baseline is the
    real-only mix with the most real images. A later row for the same cell
    replaces an earlier one.
    """
    if not rows:
        raise EmptyInputError("results table is empty")
    groups = {}
    for r in rows:
        g = groups.setdefault(r["dataset_fraction"], {"mixes": [], "cells": {}})
        mix_key = (r["n_real"], r["n_synth"])
        if mix_key not in g["mixes"]:
            g["mixes"].append(mix_key)
        g["cells"][(mix_key, r["classes"])] = r["error"]
    out = {"groups": []}
    for frac, g in groups.items():
        baselines = [m for m in g["mixes"] if m[1] == 0 and m[0] > 0]
        if not baselines:
            raise SizeError(f"no real-only baseline row for dataset fraction {frac}")
        base = max(baselines, key=lambda m: m[0])
        schemes = sorted({c for (_, c) in g["cells"]}, reverse=True)
        best, deltas = {}, {}
        for c in schemes:
            cand = [m for m in g["mixes"] if (m, c) in g["cells"]]
            best[c] = min(cand, key=lambda m: g["cells"][(m, c)])
            if (base, c) not in g["cells"]:
                raise SizeError(f"baseline {base} lacks a {c}-class result (fraction {frac})")
            for m in cand:
                deltas[(m, c)] = g["cells"][(m, c)] - g["cells"][(base, c)]
        out["groups"].append({
            "dataset_fraction": frac,
            "baseline": list(base),
            "classes": schemes,
            "rows": [
                {
                    "n_real": m[0], "n_synth": m[1], "total": m[0] + m[1],
                    "errors": {str(c): g["cells"].get((m, c)) for c in schemes},
                    "deltas": {str(c): deltas.get((m, c)) for c in schemes},
                }
                for m in g["mixes"]
            ],
            "best": {str(c): list(best[c]) for c in schemes},
        })
    return out


def format_report(rep: dict) -> str:
    lines = []
    for g in rep["groups"]:
        cls = g["classes"]
        lines.append(f"dataset fraction {g['dataset_fraction']:g} (baseline {tuple(g['baseline'])})")
        lines.append("| (real, synthetic), total | " + " | ".join(f"{c} classes" for c in cls) + " |")
        lines.append("|---|" + "---|" * len(cls))
        for r in g["rows"]:
            cells = []
            for c in cls:
                err = r["errors"][str(c)]
                if err is None:
                    cells.append("")
                    continue
                txt = f"{err:.2f} ({r['deltas'][str(c)]:+.2f})"
                if g["best"][str(c)] == [r["n_real"], r["n_synth"]]:
                    txt = f"**{txt}**"
                cells.append(txt)
            lines.append(f"| ({r['n_real']:,}, {r['n_synth']:,}), total: {r['total']:,} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)


def cmd_report(ctx: Ctx, args) -> dict:
    if args.results is None:
        raise ConfigError(["report: --results is required"])
    path = ctx.path(args.results)
    if not path.exists():
        raise EmptyInputError(f"missing results table {ctx.rel(path)}")
    rep = build_report(read_results(path))
    text = format_report(rep)
    if args.out:
        ctx.path(args.out).write_text(text)
    return {"command": "report", "table": text, **rep, "input_hash": sha256_file(path)}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brainaug", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--run-root", help=f"base directory for relative paths (default ${RUN_ROOT_ENV} or cwd)")
    p.add_argument("--report", help="also write the JSON report to this path")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("slice", help="NIFTI volumes -> padded PNG slices + manifest")
    s.add_argument("--in", dest="input")
    s.add_argument("--out")
    s.add_argument("--mr-suffix")
    s.add_argument("--mask-suffix")

    s = sub.add_parser("phantom-volumes", help="write phantom NIFTI volume pairs")
    s.add_argument("--out")
    s.add_argument("--n-volumes", type=int)
    s.add_argument("--slices", type=int)
    s.add_argument("--size", type=int, nargs=2)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("split", help="shuffle and split a manifest into train/val/test")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.add_argument("--ratios", type=float, nargs=3)
    s.add_argument("--seed", type=int)
    s.add_argument("--by-volume", action="store_true", default=None)

    s = sub.add_parser("remap", help="write masks remapped to 7/4/2 classes")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.add_argument("--classes", type=int, choices=(7, 4, 2))

    s = sub.add_parser("gen", help="generate synthetic phantom (mask, image) pairs")
    s.add_argument("--out")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--source-id")
    s.add_argument("--perturb", action="store_true", default=None)

    s = sub.add_parser("qc", help="Z-score filter synthetic masks against real ones")
    s.add_argument("--reference")
    s.add_argument("--synth")
    s.add_argument("--out")
    s.add_argument("--qc-threshold", "--threshold", dest="threshold", type=float)
    s.add_argument("--fraction", type=float)

    s = sub.add_parser("swd", help="sliced Wasserstein distance between PNG directories")
    s.add_argument("--ref")
    s.add_argument("--gen", nargs="+")
    s.add_argument("--levels", type=int)
    s.add_argument("--patches", type=int)
    s.add_argument("--projections", type=int)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("mix", help="combine real and synthetic manifests")
    s.add_argument("--real")
    s.add_argument("--synth")
    s.add_argument("--out")
    s.add_argument("--n-real", type=int)
    s.add_argument("--n-synth", type=int)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("train", help="train and test one or more experiment specs")
    s.add_argument("--train", dest="train_manifest")
    s.add_argument("--val")
    s.add_argument("--test")
    s.add_argument("--synth")
    s.add_argument("--out")
    s.add_argument("--results")
    s.add_argument("--classes", type=int, choices=(7, 4, 2))
    s.add_argument("--n-real", type=int)
    s.add_argument("--n-synth", type=int)
    s.add_argument("--fraction", type=float)
    s.add_argument("--shuffle-seed", type=int)
    s.add_argument("--init-seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--levels", type=int)
    s.add_argument("--base-filters", type=int)

    s = sub.add_parser("eval", help="test Dice error of a checkpoint")
    s.add_argument("--checkpoint")
    s.add_argument("--test")

    s = sub.add_parser("report", help="comparison table of a results CSV")
    s.add_argument("--results")
    s.add_argument("--out")
    return p


COMMANDS = {
    "slice": cmd_slice,
    "phantom-volumes": cmd_phantom_volumes,
    "split": cmd_split,
    "remap": cmd_remap,
    "gen": cmd_gen,
    "qc": cmd_qc,
    "swd": cmd_swd,
    "mix": cmd_mix,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        root = Path(args.run_root or os.environ.get(RUN_ROOT_ENV) or ".")
        ctx = Ctx(root, {})
        ctx.cfg = _load_config(None if args.config is None else ctx.path(args.config))
        report = COMMANDS[args.command](ctx, args)
    except (BrainaugError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["violations"] = exc.violations
        sys.stderr.write(_dump(err))
        return 2 if isinstance(exc, ConfigError) else 1
    text = _dump(report)
    if args.report:
        ctx.path(args.report).parent.mkdir(parents=True, exist_ok=True)
        ctx.path(args.report).write_text(text)
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
