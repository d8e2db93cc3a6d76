"""Command-line entry point: ``densecorr <command> ...``.

Global flags may precede or follow the command name.  Every command reads the dataset
manifest, writes its outputs atomically under ``--out-dir`` and exits 0 only
if all outputs were written.  Per-item failures are reported on stderr and
give exit status 1; usage errors give 2.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from densecorr._fileutil import atomic_write_text
from densecorr.descriptors import DenseDescriptorConfig, NNIndex, dense_descriptors
from densecorr.evalviz import (
    PatchDatabase,
    format_pck_table,
    patch_reconstruction,
    pck,
    rf_average,
    uniform_rf_baseline,
)
from densecorr.flow import (
    FlowConfig,
    aggregate_median,
    bp_align,
    rank_by_deformation,
    transfer_keypoints,
    warp_image,
    write_flow,
)
from densecorr.gridgeom import read_grid, write_grid
from densecorr.imaging import crop_to_box, read_image, to_gray, write_png
from densecorr.keypoints import Keypoint, KeypointSet, format_annotations, read_annotations
from densecorr.manifest import ManifestError, load_manifest, write_manifest
from densecorr.parts import (
    DetectorConfig,
    build_training_set,
    classify_keypoint,
    cross_validate,
    predict_keypoint,
    read_model,
    train_detector,
    train_one_vs_all,
    write_model,
)

log = logging.getLogger("densecorr")


class UsageError(Exception):
    pass


class PartialFailure(Exception):
    def __init__(self, failed):
        super().__init__(", ".join(failed))
        self.failed = list(failed)


# ---------------------------------------------------------------- helpers

def _threads(args) -> int:
    if args.threads:
        return max(1, args.threads)
    env = os.environ.get("DENSECORR_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"DENSECORR_THREADS must be an integer, got {env!r}") from None


def _pmap(fn, items, threads):
    """``[(item, result, error)]`` in input order."""
    def run(item):
        try:
            return item, fn(item), None
        except Exception as exc:  # reported per item
            return item, None, exc

    if threads <= 1:
        return [run(it) for it in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(run, items))


def _collect(results, label=str):
    out, failed = [], []
    for item, res, err in results:
        if err is not None:
            log.error("%s: %s", label(item), err)
            failed.append(label(item))
        else:
            out.append((item, res))
    return out, failed


def _check_layer(manifest, layer):
    if layer not in manifest.layers():
        known = ", ".join(sorted(manifest.layers())) or "none"
        raise UsageError(f"unknown layer {layer!r} (manifest has: {known})")


def _grid(manifest, image_id, layer):
    rec = manifest[image_id]
    if layer not in rec.grids:
        raise ManifestError(f"{image_id}: no grid for layer {layer!r}")
    return read_grid(rec.grids[layer], image_id)


def _global_index(manifest, records):
    ids, vecs = [], []
    for r in records:
        if r.global_desc is None:
            raise ManifestError(f"{r.image_id}: no global descriptor")
        ids.append(r.image_id)
        vecs.append(read_grid(r.global_desc).data.ravel())
    return NNIndex(ids, np.array(vecs, dtype=np.float64).reshape(len(ids), -1))


def _global_vector(manifest, image_id):
    rec = manifest[image_id]
    if rec.global_desc is None:
        raise ManifestError(f"{image_id}: no global descriptor")
    return read_grid(rec.global_desc).data.ravel()


def _frame_keypoints(manifest, image_id, box):
    kps = manifest.keypoints(image_id)
    return kps.to_box_frame(box) if box else kps


def _frame_image(manifest, image_id, box):
    img = read_image(manifest[image_id].image)
    if box:
        img = crop_to_box(img, manifest.keypoints(image_id).bbox, box)
    return img


def _image_bbox(manifest, image_id):
    rec = manifest[image_id]
    if rec.annotation is not None:
        return manifest.keypoints(image_id).bbox
    h, w = read_image(rec.image).shape[:2]
    return (0.0, 0.0, float(w), float(h))


def _to_image_frame(kps, manifest, image_id, box):
    bbox = _image_bbox(manifest, image_id)
    if box:
        return kps.from_box_frame(bbox, box, image_id)
    return kps.replace(image_id=image_id, bbox=bbox)


def _out(args, *parts) -> Path:
    p = Path(args.out_dir).joinpath(*parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_models(directory: Path, models) -> None:
    lines = ["keypoint\tmodel"]
    for name in sorted(models):
        fname = f"{name}.model"
        write_model(directory / fname, models[name])
        lines.append(f"{name}\t{fname}")
    atomic_write_text(directory / "models.tsv", "\n".join(lines) + "\n")


def _read_models(directory: Path):
    index = directory / "models.tsv"
    if not index.exists():
        raise UsageError(f"no models.tsv in {directory}")
    models = {}
    for line in index.read_text().splitlines()[1:]:
        if line.strip():
            name, fname = line.split("\t")
            models[name] = read_model(directory / fname)
    return models


def _split_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------- commands

def cmd_features(args, manifest):
    cfg = DenseDescriptorConfig(args.stride, args.radius, args.spatial_bins, args.orientation_bins)
    records = list(manifest)

    def work(rec):
        img = to_gray(read_image(rec.image))
        if args.box:
            img = crop_to_box(img, manifest.keypoints(rec.image_id).bbox, args.box)
        grid = dense_descriptors(img, cfg, rec.image_id)
        path = _out(args, "features", f"{rec.image_id}.{args.layer}.dcfg").resolve()
        write_grid(grid, path)
        return path

    done, failed = _collect(_pmap(work, records, _threads(args)), lambda r: r.image_id)
    for rec, path in done:
        manifest.with_grid(rec.image_id, args.layer, path)
        if args.as_global:
            manifest.with_global(rec.image_id, path)
    write_manifest(_out(args, "manifest.tsv"), manifest)
    log.info("features: %d grids for layer %s (dim %d)", len(done), args.layer, cfg.dim)
    if failed:
        raise PartialFailure(failed)


def _flow_config(args):
    return FlowConfig(beta=args.beta, label_radius=args.label_radius,
                      bp_iterations=args.iterations, damping=args.damping)


def cmd_align(args, manifest):
    _check_layer(manifest, args.layer)
    cfg = _flow_config(args)
    log.info("align: beta=%g label_radius=%d", cfg.beta, cfg.label_radius)
    src = _grid(manifest, args.source, args.layer)
    tgt = _grid(manifest, args.target, args.layer)
    flow, energy = bp_align(src, tgt, cfg)
    stem = f"{args.source}__{args.target}"
    write_flow(_out(args, "align", stem + ".dcfw"), flow, energy)
    warped = warp_image(_frame_image(manifest, args.target, args.box), flow, src.geometry)
    write_png(_out(args, "align", stem + ".png"), warped)
    row = f"{args.source},{args.target},{energy.data_term!r},{energy.smoothness_term!r},{energy.total!r}"
    atomic_write_text(_out(args, "align", stem + ".energy.csv"),
                      "source,target,data,smoothness,total\n" + row + "\n")
    print(row)


def cmd_transfer(args, manifest):
    _check_layer(manifest, args.layer)
    cfg = _flow_config(args)
    targets = args.targets or [r.image_id for r in manifest.select(split=args.split)]
    if not targets:
        raise UsageError("no target images")
    pool = [r for r in manifest.select(split=args.pool_split) if r.annotation is not None]
    index = _global_index(manifest, pool)
    for t in targets:
        manifest[t]
        n_cand = sum(1 for i in index.ids if i != t)
        if args.k > n_cand:
            raise UsageError(f"k={args.k} exceeds the {n_cand} candidates for {t}")
    log.info("transfer: k=%d top_n=%d beta=%g", args.k, args.top_n, cfg.beta)

    def work(t):
        tgt = _grid(manifest, t, args.layer)
        order, scores = index.search(_global_vector(manifest, t), len(index))
        nbrs = [(index.ids[i], float(s)) for i, s in zip(order[0], scores[0])
                if index.ids[i] != t][:args.k]
        results, preds = [], []
        for nid, _ in nbrs:
            flow, energy = bp_align(_grid(manifest, nid, args.layer), tgt, cfg)
            kps = _frame_keypoints(manifest, nid, args.box)
            results.append((flow, energy))
            preds.append(transfer_keypoints(kps, flow, tgt.geometry, image_id=t))
        ranked = rank_by_deformation(results)
        agg = aggregate_median([preds[k] for k in ranked], args.top_n)
        rows = [(t, rank, nbrs[k][0], nbrs[k][1], results[k][1].smoothness_term)
                for rank, k in enumerate(ranked)]
        return _to_image_frame(agg, manifest, t, args.box), rows

    done, failed = _collect(_pmap(work, targets, _threads(args)))
    atomic_write_text(_out(args, "transfer", "predictions.csv"),
                      format_annotations([p for _, (p, _) in done]))
    lines = ["target\trank\tneighbor\tcosine\tdeformation"]
    for _, (_, rows) in done:
        lines += ["\t".join(str(v) for v in row) for row in rows]
    atomic_write_text(_out(args, "transfer", "neighbors.tsv"), "\n".join(lines) + "\n")
    annotated = [t for t, _ in done if manifest[t].annotation is not None]
    if annotated and len(annotated) == len(done):
        rep = pck([p for _, (p, _) in done], [manifest.keypoints(t) for t in annotated], 0.1)
        log.info("transfer: PCK@0.1 = %.4f over %d images", rep.mean, len(annotated))
    if failed:
        raise PartialFailure(failed)


def _classifier_samples(manifest, records, layer, box):
    feats, labels = [], []
    for rec in records:
        grid = _grid(manifest, rec.image_id, layer)
        kps = _frame_keypoints(manifest, rec.image_id, box)
        for name, kp in sorted(kps.visible().items()):
            feats.append(grid.data[grid.nearest_cell((kp.x, kp.y))].astype(np.float64))
            labels.append(name)
    return np.array(feats), labels


def cmd_train_classifier(args, manifest):
    _check_layer(manifest, args.layer)
    recs = manifest.select(category=args.category, split="train")
    X, y = _classifier_samples(manifest, recs, args.layer, args.box)
    types = sorted(set(y))
    if len(types) < 2:
        raise UsageError(f"category {args.category!r} has {len(types)} keypoint type(s); need 2")
    outdir = _out(args, "classifier", args.category, "x").parent
    if args.sweep:
        curve = cross_validate(X, y, _split_floats(args.sweep), folds=args.folds, seed=args.seed)
        text = "c,accuracy\n" + "".join(f"{c!r},{a:.6f}\n" for c, a in curve)
        atomic_write_text(outdir / "cv.csv", text)
        sys.stdout.write(text)
        return
    log.info("train-classifier: %s, %d samples, %d types, c=%g", args.category, len(y),
             len(types), args.c)
    _write_models(outdir, train_one_vs_all(X, y, args.c))


def cmd_classify(args, manifest):
    _check_layer(manifest, args.layer)
    mdir = Path(args.models) if args.models else Path(args.out_dir) / "classifier" / args.category
    models = _read_models(mdir)
    recs = manifest.select(category=args.category, split=args.split)
    X, y = _classifier_samples(manifest, recs, args.layer, args.box)
    if not y:
        raise UsageError(f"no visible keypoints in {args.category!r}/{args.split}")
    pred = [classify_keypoint(models, x)[0] for x in X]
    lines = ["keypoint,correct,total,accuracy"]
    for name in sorted(set(y)):
        hit = sum(1 for p, t in zip(pred, y) if t == name and p == t)
        tot = y.count(name)
        lines.append(f"{name},{hit},{tot},{hit / tot:.6f}")
    hit = sum(1 for p, t in zip(pred, y) if p == t)
    lines.append(f"all,{hit},{len(y)},{hit / len(y):.6f}")
    text = "\n".join(lines) + "\n"
    atomic_write_text(_out(args, "classifier", args.category, "accuracy.csv"), text)
    sys.stdout.write(text)


def _detector_config(args):
    return DetectorConfig(c=args.c, eta=args.eta, sigma=args.sigma, neighborhood=args.neighborhood,
                          positives_per_keypoint=args.positives, canonical_box=args.box or 500,
                          hnm_rounds=args.hnm_rounds, hnm_batch=args.hnm_batch,
                          bin_size=args.bin_size)


def cmd_train_detector(args, manifest):
    _check_layer(manifest, args.layer)
    cfg = _detector_config(args)
    recs = manifest.select(category=args.category, split="train")
    if not recs:
        raise UsageError(f"no training images for category {args.category!r}")
    data = [(_grid(manifest, r.image_id, args.layer), _frame_keypoints(manifest, r.image_id, args.box))
            for r in recs]
    names = args.keypoint or sorted({n for _, k in data for n in k.points})
    log.info("train-detector: %s, %d images, keypoints %s, c=%g", args.category, len(data),
             ",".join(names), cfg.c)

    def work(name):
        ts = build_training_set(data, name, cfg)
        res = train_detector(ts, cfg, seed=args.seed)
        log.info("  %s: %d positives, %d/%d negatives active after %d rounds", name,
                 len(ts.positives), len(res.active), len(ts.negatives), res.rounds)
        return res.model

    done, failed = _collect(_pmap(work, names, _threads(args)))
    outdir = _out(args, "detector", args.category, "x").parent
    _write_models(outdir, dict(done))
    if failed:
        raise PartialFailure(failed)


def cmd_predict(args, manifest):
    _check_layer(manifest, args.layer)
    cfg = _detector_config(args)
    log.info("predict: eta=%g sigma=%g alpha=%g box=%d", cfg.eta, cfg.sigma, args.alpha, args.box)
    mdir = Path(args.models) if args.models else Path(args.out_dir) / "detector" / args.category
    models = _read_models(mdir)
    train = [r for r in manifest.select(category=args.category, split="train")
             if r.annotation is not None]
    targets = manifest.select(category=args.category, split=args.split)
    if not targets:
        raise UsageError(f"no {args.split} images for category {args.category!r}")
    index = _global_index(manifest, train) if train else None

    def work(rec):
        t = rec.image_id
        manifest.keypoints(t)  # truth is required for the frame and the score
        grid = _grid(manifest, t, args.layer)
        prior_kps = None
        if index is not None:
            order, _ = index.search(_global_vector(manifest, t), len(index))
            nid = next((index.ids[i] for i in order[0] if index.ids[i] != t), None)
            if nid is not None:
                prior_kps = _frame_keypoints(manifest, nid, args.box)
        fused, alone = {}, {}
        for name, model in sorted(models.items()):
            mu = None
            if prior_kps is not None and name in prior_kps.points and prior_kps.points[name].visible:
                mu = (prior_kps.points[name].x, prior_kps.points[name].y)
            d = predict_keypoint(grid, model, mu, cfg)
            fused[name] = Keypoint(d.x, d.y, True)
            d0 = predict_keypoint(grid, model, None, cfg)
            alone[name] = Keypoint(d0.x, d0.y, True)
        bbox = (0.0, 0.0, float(args.box or 1), float(args.box or 1))
        return tuple(_to_image_frame(KeypointSet(t, bbox, pts), manifest, t, args.box)
                     for pts in (alone, fused))

    done, failed = _collect(_pmap(work, targets, _threads(args)), lambda r: r.image_id)
    alone = [a for _, (a, _) in done]
    fused = [f for _, (_, f) in done]
    atomic_write_text(_out(args, "detector", args.category, "predictions_detector.csv"),
                      format_annotations(alone))
    atomic_write_text(_out(args, "detector", args.category, "predictions_prior.csv"),
                      format_annotations(fused))
    truths = [manifest.keypoints(r.image_id) for r, _ in done]
    if done:
        rows = [("detector", {args.category: pck(alone, truths, args.alpha)}),
                ("detector+prior", {args.category: pck(fused, truths, args.alpha)})]
        text = format_pck_table(rows, [args.category])
        atomic_write_text(_out(args, "detector", args.category, "pck.csv"), text)
        sys.stdout.write(text)
    if failed:
        raise PartialFailure(failed)


def cmd_evaluate(args, manifest):
    preds = read_annotations(args.predictions)
    alphas = _split_floats(args.alpha)
    truth_file = read_annotations(args.truth) if args.truth else None
    truths = {}
    for pid in preds:
        truths[pid] = truth_file[pid] if truth_file is not None else manifest.keypoints(pid)
    cats = sorted({manifest[p].category if p in manifest.records else "" for p in preds})
    rows = []
    for a in alphas:
        reps = {}
        for cat in cats:
            ids = [p for p in preds
                   if (manifest[p].category if p in manifest.records else "") == cat]
            reps[cat or "all"] = pck([preds[i] for i in ids], [truths[i] for i in ids], a)
        rows.append((f"PCK@{a:g}", reps))
    text = format_pck_table(rows, [c or "all" for c in cats])
    atomic_write_text(_out(args, "evaluate", "pck.csv"), text)
    sys.stdout.write(text)


def cmd_build_db(args, manifest):
    _check_layer(manifest, args.layer)
    recs = [r for r in manifest if args.split is None or r.split == args.split]
    items = [(r.image_id, _frame_image(manifest, r.image_id, args.box),
              _grid(manifest, r.image_id, args.layer)) for r in recs]
    db = PatchDatabase(items)
    db.save(_out(args, "db", args.layer, "x").parent)
    log.info("build-db: %d patches from %d images", len(db), len(items))


def cmd_viz(args, manifest):
    db_dir = Path(args.db) if args.db else Path(args.out_dir) / "db" / args.layer
    if not (db_dir / "db.tsv").exists():
        raise UsageError(f"no patch database at {db_dir} (run build-db first)")
    db = PatchDatabase.load(db_dir)
    if args.mode == "uniform":
        img = _frame_image(manifest, args.image, args.box)
        out = uniform_rf_baseline(img, db, args.neighborhood, seed=args.seed)
        name = f"{args.image}.uniform.png"
    else:
        _check_layer(manifest, args.layer)
        grid = _grid(manifest, args.image, args.layer)
        if args.mode == "patches":
            img = _frame_image(manifest, args.image, args.box)
            out = patch_reconstruction(img, grid, db, args.k)
            name = f"{args.image}.patches.k{args.k}.png"
        else:
            if args.cell:
                i, j = (int(v) for v in args.cell.split(","))
            else:
                i, j = grid.height // 2, grid.width // 2
            out = rf_average(grid.data[i, j], db, args.k)
            name = f"{args.image}.rfavg.{i}_{j}.k{args.k}.png"
    path = _out(args, "viz", name)
    write_png(path, out)
    print(path)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, suppress):
        # repeated on every subcommand so they may also follow the command name
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--manifest", default=dflt(None), help="dataset manifest (TSV)")
        parser.add_argument("--out-dir", default=dflt("."), help="output directory (default: .)")
        parser.add_argument("--seed", type=int, default=dflt(0))
        parser.add_argument("--threads", type=int, default=dflt(0),
                            help="worker threads (default: $DENSECORR_THREADS or 1)")
        parser.add_argument("-v", "--verbose", action="store_true", default=dflt(False))

    p = argparse.ArgumentParser(prog="densecorr", description=__doc__.splitlines()[0])
    global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    def flow_flags(sp):
        sp.add_argument("--layer", default="conv4")
        sp.add_argument("--beta", type=float, default=3e-3, help="smoothness weight")
        sp.add_argument("--label-radius", type=int, default=8)
        sp.add_argument("--iterations", type=int, default=50)
        sp.add_argument("--damping", type=float, default=0.5)
        sp.add_argument("--box", type=int, default=0,
                        help="grids were computed on the bbox rescaled to this side (0: full image)")

    def det_flags(sp):
        sp.add_argument("--category", required=True)
        sp.add_argument("--layer", default="conv5")
        sp.add_argument("--c", type=float, default=1e-6)
        sp.add_argument("--eta", type=float, default=0.1)
        sp.add_argument("--sigma", type=float, default=22.0)
        sp.add_argument("--neighborhood", type=int, default=3)
        sp.add_argument("--positives", type=int, default=10)
        sp.add_argument("--hnm-rounds", type=int, default=10)
        sp.add_argument("--hnm-batch", type=int, default=1000)
        sp.add_argument("--bin-size", type=float, default=None)
        sp.add_argument("--box", type=int, default=500)

    sp = command("features", help="compute dense gradient-histogram grids")
    sp.add_argument("--layer", default="dsift")
    sp.add_argument("--stride", type=int, default=8)
    sp.add_argument("--radius", type=int, default=20)
    sp.add_argument("--spatial-bins", type=int, default=4)
    sp.add_argument("--orientation-bins", type=int, default=8)
    sp.add_argument("--box", type=int, default=0)
    sp.add_argument("--as-global", action="store_true",
                    help="also use these grids as global descriptors")
    sp.set_defaults(func=cmd_features)

    sp = command("align", help="align two images' feature grids")
    sp.add_argument("source")
    sp.add_argument("target")
    flow_flags(sp)
    sp.set_defaults(func=cmd_align)

    sp = command("transfer", help="predict keypoints by aligning retrieved neighbors")
    sp.add_argument("targets", nargs="*")
    flow_flags(sp)
    sp.add_argument("--k", type=int, default=25)
    sp.add_argument("--top-n", type=int, default=5)
    sp.add_argument("--split", default="val", help="target split when no ids are given")
    sp.add_argument("--pool-split", default="train")
    sp.set_defaults(func=cmd_transfer)

    for name, func in (("train-classifier", cmd_train_classifier), ("classify", cmd_classify)):
        sp = command(name, help="one-vs-all keypoint classifiers")
        sp.add_argument("--category", required=True)
        sp.add_argument("--layer", required=True)
        sp.add_argument("--box", type=int, default=0)
        if func is cmd_train_classifier:
            sp.add_argument("--c", type=float, default=1e-6)
            sp.add_argument("--sweep", default=None, help='comma-separated C values, e.g. "1e-8,1e-6"')
            sp.add_argument("--folds", type=int, default=5)
        else:
            sp.add_argument("--models", default=None)
            sp.add_argument("--split", default="val")
        sp.set_defaults(func=func)

    sp = command("train-detector", help="sliding-window keypoint detectors")
    det_flags(sp)
    sp.add_argument("--keypoint", action="append", default=None)
    sp.set_defaults(func=cmd_train_detector)

    sp = command("predict", help="predict keypoints with detectors and prior")
    det_flags(sp)
    sp.add_argument("--models", default=None)
    sp.add_argument("--split", default="val")
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.set_defaults(func=cmd_predict)

    sp = command("evaluate", help="PCK of a predictions file")
    sp.add_argument("predictions")
    sp.add_argument("--truth", default=None, help="annotation file (default: manifest)")
    sp.add_argument("--alpha", default="0.1,0.05,0.025")
    sp.set_defaults(func=cmd_evaluate)

    sp = command("build-db", help="build a patch database for visualizations")
    sp.add_argument("--layer", required=True)
    sp.add_argument("--split", default=None)
    sp.add_argument("--box", type=int, default=0)
    sp.set_defaults(func=cmd_build_db)

    sp = command("viz", help="patch reconstructions and rf averages")
    sp.add_argument("mode", choices=["patches", "uniform", "rfavg"])
    sp.add_argument("--image", required=True)
    sp.add_argument("--layer", required=True)
    sp.add_argument("--db", default=None)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--neighborhood", type=int, default=99,
                    help="uniform baseline window side in pixels")
    sp.add_argument("--cell", default=None, help="i,j of the seed feature for rfavg")
    sp.add_argument("--box", type=int, default=0)
    sp.set_defaults(func=cmd_viz)
    return p


def _setup_logging(args):
    log.handlers.clear()
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.propagate = False
    fmt = logging.Formatter("%(levelname)s %(message)s")
    err = logging.StreamHandler(sys.stderr)
    err.setFormatter(fmt)
    log.addHandler(err)
    logfile = Path(args.out_dir) / "logs" / f"{args.command}.log"
    logfile.parent.mkdir(parents=True, exist_ok=True)
    fh = logging.FileHandler(logfile, mode="w")
    fh.setFormatter(fmt)
    log.addHandler(fh)
    return fh


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest is None:
        parser.error("--manifest is required")
    fh = _setup_logging(args)
    try:
        manifest = load_manifest(args.manifest)
        args.threads = _threads(args)
        args.func(args, manifest)
        return 0
    except UsageError as exc:
        print(f"densecorr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except PartialFailure as exc:
        print(f"densecorr {args.command}: failed ids: {' '.join(exc.failed)}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"densecorr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    finally:
        log.removeHandler(fh)
        fh.close()


if __name__ == "__main__":
    sys.exit(main())
