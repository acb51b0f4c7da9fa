"""Command-line entry point: ``gridsight <group> <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def _load_json(path):
    if path is None:
        return None
    with open(path) as f:
        return json.load(f)


def _mapping(path):
    from .synth import default_mapping
    from .weakgt import ClassMapping

    return ClassMapping.load(path) if path else default_mapping()


def _manifest_rig(root, records, override):
    from .camera import load_rig

    return load_rig(override) if override else load_rig(os.path.join(root, records[0]["rig"]))


def _write_derived_manifest(out_dir, root, records, key, grid_paths):
    """Manifest next to the new grids; original paths are rewritten relative to it."""
    out_dir = os.path.abspath(out_dir)
    path = os.path.join(out_dir, "manifest.jsonl")
    with open(path, "w") as f:
        for rec, gp in zip(records, grid_paths):
            new = {}
            for k, v in rec.items():
                if isinstance(v, str) and k not in ("id",) and os.path.exists(os.path.join(root, v)):
                    new[k] = os.path.relpath(os.path.join(root, v), out_dir)
                else:
                    new[k] = v
            new[key] = os.path.relpath(gp, out_dir)
            f.write(json.dumps(new, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- commands


def cmd_synth_gen(args):
    from .synth import generate_dataset

    config = _load_json(args.config) or {}
    path = generate_dataset(args.n, args.out, config, args.seed)
    print(path)


def _per_record_grids(args, key, build):
    from .grid import GridSpec, write_grid
    from .synth import read_manifest, worker_count

    root, records = read_manifest(args.manifest)
    if not records:
        raise ValueError(f"{args.manifest}: empty manifest")
    rig = _manifest_rig(root, records, args.rig)
    mapping = _mapping(args.mapping)
    spec = GridSpec.for_size(args.grid_size)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.abspath(args.out)

    def job(rec):
        return write_grid(build(root, rec, rig, spec, mapping), os.path.join(out, rec["id"] + ".json"))

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            paths = list(pool.map(job, records))
    else:
        paths = [job(rec) for rec in records]
    print(_write_derived_manifest(args.out, root, records, key, paths))


def cmd_gt_build(args):
    from .netpbm import read_pfm, read_pgm
    from .weakgt import project_labeled_cloud

    def build(root, rec, rig, spec, mapping):
        disp = read_pfm(os.path.join(root, rec["disparity"]))
        labels = read_pgm(os.path.join(root, rec["labels"]))
        return project_labeled_cloud(disp, labels, rig, spec, mapping, args.ceiling)

    _per_record_grids(args, "weak_grid", build)


def cmd_flatplane_run(args):
    from .flatplane import flatplane_map
    from .netpbm import read_pgm

    def build(root, rec, rig, spec, mapping):
        return flatplane_map(read_pgm(os.path.join(root, rec["labels"])), rig, spec, mapping)

    _per_record_grids(args, "flatplane_grid", build)


def cmd_ved_train(args):
    from .ved import VedConfig, save_checkpoint, train

    cfg = _load_json(args.config) or {}
    for key in ("epochs", "batch_size", "seed", "target"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.no_sampling:
        cfg["sampling_enabled"] = False
    config = VedConfig.from_dict(cfg)
    log_path = args.log or os.path.splitext(args.out)[0] + ".log.jsonl"
    ckpt = train(args.manifest, config, log_path=log_path)
    save_checkpoint(ckpt, args.out)
    print(json.dumps(ckpt.metrics, sort_keys=True))


def cmd_ved_infer(args):
    from .camera import fov_mask, load_rig
    from .grid import write_grid
    from .netpbm import read_ppm
    from .ved import infer, load_checkpoint

    ckpt = load_checkpoint(args.ckpt)
    mask = fov_mask(load_rig(args.rig), ckpt.grid_spec) if args.rig else None
    print(write_grid(infer(ckpt, read_ppm(args.image), mask), args.out))


def cmd_ved_encode(args):
    from .netpbm import read_ppm
    from .synth import read_manifest
    from .ved import encode, load_checkpoint

    ckpt = load_checkpoint(args.ckpt)
    root, records = read_manifest(args.manifest)
    out = {
        "ids": [r["id"] for r in records],
        "embeddings": [encode(ckpt, read_ppm(os.path.join(root, r["rgb"]))).tolist() for r in records],
    }
    with open(args.out, "w") as f:
        json.dump(out, f)
        f.write("\n")


def cmd_eval_run(args):
    from .grid import read_grid
    from .metrics import confusion, mean_accuracy, mean_iou

    truths = sorted(glob.glob(os.path.join(args.truth_dir, "*.json")))
    truths = [t for t in truths if os.path.basename(t) != "manifest.json"]
    if not truths:
        raise ValueError(f"no grids in {args.truth_dir}")
    rows = []
    for tpath in truths:
        name = os.path.basename(tpath)
        ppath = os.path.join(args.pred_dir, name)
        if not os.path.exists(ppath):
            raise FileNotFoundError(f"no prediction {ppath} for truth {tpath}")
        cm = confusion(read_grid(ppath), read_grid(tpath))
        if cm.sum() == 0:
            continue
        rows.append((os.path.splitext(name)[0], mean_accuracy(cm), mean_iou(cm)))
    if not rows:
        raise ValueError("no sample has evaluable cells")
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "mean_accuracy", "mean_iou"])
        for r in rows:
            w.writerow([r[0], repr(r[1]), repr(r[2])])
        w.writerow(["mean", repr(float(np.mean([r[1] for r in rows]))), repr(float(np.mean([r[2] for r in rows])))])
    print(f"mean_accuracy={np.mean([r[1] for r in rows]):.4f} mean_iou={np.mean([r[2] for r in rows]):.4f}")


def cmd_eval_sweep(args):
    from .metrics import write_sweep_csv
    from .sweep import perturbation_sweep
    from .ved import load_checkpoint

    ckpt = load_checkpoint(args.ckpt) if args.ckpt else None
    mapping = _mapping(args.mapping) if args.mapping else None
    rows = perturbation_sweep(args.method, args.manifest, ckpt, mapping, truth_key=args.truth)
    write_sweep_csv(rows, args.out)
    for r in rows:
        print(f"{r['method']:16s} {r['perturbation']:12s} acc {r['mean_accuracy']:.4f} "
              f"iou {r['mean_iou']:.4f} (-{r['iou_downgrade']:.4f})")


def cmd_pca_fit(args):
    from .latent import pca_fit, save_pca

    data = _load_json(args.embeddings)
    emb = data["embeddings"] if isinstance(data, dict) else data
    pca = pca_fit(np.asarray(emb, dtype=np.float64))
    save_pca(pca, args.out)
    top = ", ".join(f"{v:.4g}" for v in pca.eigenvalues[:5])
    print(f"{pca.dim}-d PCA, leading eigenvalues: {top}")


def cmd_pca_sweep(args):
    from .grid import GridMap, colorize, write_grid
    from .latent import load_pca, perturb_axis
    from .netpbm import write_ppm
    from .ved import decode, load_checkpoint

    ckpt = load_checkpoint(args.ckpt)
    pca = load_pca(args.pca)
    amounts = [float(a) for a in args.amounts.split(",") if a.strip()]
    base = pca.mean.astype(np.float32)
    os.makedirs(args.out_dir, exist_ok=True)
    for a in amounts:
        probs = decode(ckpt, perturb_axis(base, pca, args.axis, a))
        grid = GridMap(ckpt.grid_spec, probs.argmax(axis=0).astype(np.uint8))
        stem = os.path.join(args.out_dir, f"axis{args.axis}_{a:+g}")
        write_grid(grid, stem + ".json")
        write_ppm(stem + ".ppm", colorize(grid))
        print(stem + ".ppm")


def cmd_render_map(args):
    from .grid import colorize, read_grid
    from .netpbm import write_ppm

    img = colorize(read_grid(args.grid))
    if args.scale > 1:
        img = img.repeat(args.scale, axis=0).repeat(args.scale, axis=1)
    write_ppm(args.out, img)


def _time_inference(ckpt, n):
    from .ved import predict_probs

    c = ckpt.config
    img = np.random.default_rng(0).integers(0, 256, (1, c.input_height, c.input_width, 3), dtype=np.uint8)
    predict_probs(ckpt, img)  # warm-up
    lat = []
    for _ in range(n):
        t0 = time.perf_counter()
        predict_probs(ckpt, img)
        lat.append(time.perf_counter() - t0)
    lat = np.array(lat)
    return {
        "input": [c.input_height, c.input_width],
        "latent_dim": c.latent_dim,
        "n": n,
        "mean_ms": float(lat.mean() * 1e3),
        "median_ms": float(np.median(lat) * 1e3),
        "hz": float(1.0 / lat.mean()),
    }


def cmd_bench_infer(args):
    from .ved import Checkpoint, VedConfig, init_params, load_checkpoint, parameter_count

    results = {}
    if args.ckpt:
        results["checkpoint"] = _time_inference(load_checkpoint(args.ckpt), args.n)
    for preset in args.preset or ([] if args.ckpt else ["desk", "paper"]):
        config = VedConfig() if preset == "desk" else VedConfig.paper_scale()
        params, bn = init_params(config, np.random.default_rng(0))
        res = _time_inference(Checkpoint(config, params, bn), args.n)
        res["parameters"] = parameter_count(params)
        results[preset] = res
    for name, r in results.items():
        print(f"{name:10s} {r['input'][0]}x{r['input'][1]} mean {r['mean_ms']:.1f} ms "
              f"median {r['median_ms']:.1f} ms  {r['hz']:.1f} Hz")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=1, sort_keys=True)
            f.write("\n")


def cmd_bench_kernels(args):
    from .benchmark import run_kernel_benchmark

    for line in run_kernel_benchmark(repeat=args.repeat):
        print(line)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridsight", description="Top-view semantic grid mapping toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    groups = p.add_subparsers(dest="group", required=True)

    def group(name, help_):
        g = groups.add_parser(name, help=help_)
        return g.add_subparsers(dest="command", required=True)

    synth = group("synth", "synthetic datasets")
    s = synth.add_parser("gen", help="render a synthetic dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="dataset config JSON")
    s.set_defaults(func=cmd_synth_gen)

    def grid_job(sub, name, help_, func, ceiling=False):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--manifest", required=True)
        s.add_argument("--rig", help="calibration JSON (default: the manifest's rig)")
        s.add_argument("--mapping", help="label mapping JSON (default: synthetic label ids)")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--grid-size", type=int, default=64)
        if ceiling:
            s.add_argument("--ceiling", type=float, help="drop points higher than this (m)")
        s.set_defaults(func=func)

    grid_job(group("gt", "weak ground truth"), "build", "project stereo + labels to grids", cmd_gt_build, True)
    grid_job(group("flatplane", "flat-plane baseline"), "run", "flat-plane projection of labels", cmd_flatplane_run)

    ved = group("ved", "variational encoder-decoder")
    s = ved.add_parser("train", help="train a model")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", help="model config JSON")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--no-sampling", action="store_true", help="ablation: z = mu, no latent loss")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--target", choices=["true_grid", "weak_grid"])
    s.add_argument("--log", help="per-epoch JSON-lines log (default: next to the checkpoint)")
    s.set_defaults(func=cmd_ved_train)
    s = ved.add_parser("infer", help="predict a grid from one image")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--rig", help="calibration JSON used for the eval mask")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ved_infer)
    s = ved.add_parser("encode", help="latent means for every manifest image")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ved_encode)

    ev = group("eval", "evaluation")
    s = ev.add_parser("run", help="score predicted grids against truth grids")
    s.add_argument("--pred-dir", required=True)
    s.add_argument("--truth-dir", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval_run)
    s = ev.add_parser("sweep", help="pitch/roll robustness table")
    s.add_argument("--method", required=True, choices=["flatplane", "ved", "ved-no-sampling"])
    s.add_argument("--manifest", required=True)
    s.add_argument("--ckpt")
    s.add_argument("--mapping")
    s.add_argument("--truth", default="true_grid", help="manifest key of the reference grids")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval_sweep)

    pca = group("pca", "latent space analysis")
    s = pca.add_parser("fit", help="PCA of encoder embeddings")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pca_fit)
    s = pca.add_parser("sweep", help="decode maps along a principal axis")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--pca", required=True)
    s.add_argument("--axis", type=int, default=0)
    s.add_argument("--amounts", required=True, help="comma separated, e.g. -3,0,3")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_pca_sweep)

    render = group("render", "visualisation")
    s = render.add_parser("map", help="grid to PPM picture")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--scale", type=int, default=1)
    s.set_defaults(func=cmd_render_map)

    bench = group("bench", "benchmarks")
    s = bench.add_parser("infer", help="inference latency and frame rate")
    s.add_argument("--ckpt")
    s.add_argument("--preset", action="append", choices=["desk", "paper"],
                   help="randomly initialised model of this size (repeatable)")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--json", help="also write results here")
    s.set_defaults(func=cmd_bench_infer)
    s = bench.add_parser("kernels", help="compiled vs numpy kernels")
    s.add_argument("--repeat", type=int, default=5)
    s.set_defaults(func=cmd_bench_kernels)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError, IndexError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"gridsight: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
