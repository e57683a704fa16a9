"""Command-line entry point: ``filer {match,detect,eval,sweep-rotation,mosaic,synth}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import plotting
from .config import dump_config, load_config
from .errors import FilerError
from .evalbench import (EvalReport, GroundTruth, aggregate, correct_match_ratio, count_correct,
                        evaluate_matches, read_affine, read_ground_truth, write_affine,
                        write_landmarks)
from .imagecore import load_grayscale, save_grayscale
from .matcher import extract_features, match_images, assign_main_directions
from .mosaic import checkerboard_mosaic
from .synthgen import SynthSpec, affine_about_center, generate_pair, rotate_image

log = logging.getLogger("filer")

MANIFEST_COLUMNS = ("image_a", "image_b", "h_true", "landmarks")


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, consensus=replace(cfg.consensus, rng_seed=args.seed))
    return cfg


def _require(*paths):
    for p in paths:
        if p and not os.path.exists(p):
            raise FileNotFoundError(p)


def write_matches(path, matches) -> None:
    with open(path, "w") as fh:
        fh.write("x1\ty1\tx2\ty2\tdistance\tinlier\n")
        for i in range(len(matches)):
            (x1, y1), (x2, y2) = matches.xy_a[i], matches.xy_b[i]
            fh.write(f"{x1:.3f}\t{y1:.3f}\t{x2:.3f}\t{y2:.3f}\t{matches.distance[i]:.6f}\t"
                     f"{int(bool(matches.inlier[i]))}\n")


def read_matches(path):
    rows = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2)
    return rows


def _match_diagnostics(ms, h, diag, gt):
    out = dict(diag)
    if gt is not None:
        ncm = count_correct(ms.xy_a[ms.inlier], ms.xy_b[ms.inlier], gt.h_true) if ms.n_inliers else 0
        out.update(ground_truth=True, ncm=ncm, cmr=correct_match_ratio(ncm, ms.n_inliers))
    else:
        # no ground truth: consensus inliers stand in for correct matches
        out.update(ground_truth=False, ncm=ms.n_inliers, cmr=correct_match_ratio(ms.n_inliers, len(ms)))
    return out


def cmd_match(args) -> int:
    _require(args.image_a, args.image_b, args.config, args.gt, args.landmarks)
    cfg = _config(args)
    a = load_grayscale(args.image_a)
    b = load_grayscale(args.image_b)
    gt = read_ground_truth(args.gt, args.landmarks) if args.gt else None
    ms, h, diag = match_images(a, b, cfg)
    diag = _match_diagnostics(ms, h, diag, gt)
    os.makedirs(args.out, exist_ok=True)
    write_matches(os.path.join(args.out, "matches.tsv"), ms)
    write_affine(os.path.join(args.out, "affine.txt"), h)
    plotting.match_overlay(os.path.join(args.out, "overlay.png"), a, b, ms)
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
    print(f"NCM={diag['ncm']} CMR={diag['cmr']:.1f}% runtime={diag['runtime']:.2f}s")
    return 0


def cmd_detect(args) -> int:
    _require(args.image, args.config)
    cfg = _config(args)
    image = load_grayscale(args.image)
    feats = extract_features(image, cfg)
    assign_main_directions(feats, cfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "keypoints.tsv"), "w") as fh:
        fh.write("x\ty\tscore\tmain_direction\n")
        for p in feats.points:
            md = "nan" if p.main_direction is None else f"{p.main_direction:.6f}"
            fh.write(f"{p.x:.1f}\t{p.y:.1f}\t{p.score:.6f}\t{md}\n")
    lo, hi = feats.i_out.min(), feats.i_out.max()
    save_grayscale(os.path.join(args.out, "structure.png"), (feats.i_out - lo) / max(hi - lo, 1e-12))
    plotting.keypoint_figure(os.path.join(args.out, "keypoints.png"), feats.i_out, feats.points)
    print(f"{len(feats.points)} features")
    return 0


def read_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for rec in reader:
            if not rec or all(not c.strip() for c in rec):
                continue
            if [c.strip() for c in rec[:4]] == list(MANIFEST_COLUMNS):
                continue
            cells = [c.strip() for c in rec] + [""] * 4
            rows.append(tuple(os.path.join(base, c) if c else "" for c in cells[:4]))
    return rows


REPORT_FIELDS = ("pair", "status", "image_a", "image_b", "n_c", "rep", "ncm", "cmr", "rmse", "me",
                 "runtime", "n_putative", "error")


def evaluate_row(row, cfg):
    image_a, image_b, h_path, lm_path = row
    _require(image_a, image_b, h_path, lm_path or None)
    a = load_grayscale(image_a)
    b = load_grayscale(image_b)
    gt = read_ground_truth(h_path, lm_path or None)
    t0 = time.perf_counter()
    ms, h, diag = match_images(a, b, cfg)
    return evaluate_matches(ms, h, gt, diag["n_points_a"], diag["n_points_b"], time.perf_counter() - t0)


def cmd_eval(args) -> int:
    _require(args.manifest, args.config)
    cfg = _config(args)
    rows = read_manifest(args.manifest)
    if not rows:
        print("error: manifest has no rows", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    out_rows, reports = [], []
    for i, row in enumerate(rows):
        rec = {"pair": i, "image_a": os.path.basename(row[0]), "image_b": os.path.basename(row[1])}
        try:
            rep = evaluate_row(row, cfg)
        except (FilerError, OSError, ValueError) as exc:
            log.warning("pair %d failed: %s", i, exc)
            rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        else:
            reports.append(rep)
            rec.update(status="ok", error="", **{k: v for k, v in rep.as_dict().items() if k in REPORT_FIELDS})
        out_rows.append(rec)

    with open(os.path.join(args.out, "report.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore")
        w.writeheader()
        for rec in out_rows:
            w.writerow({k: _fmt(rec.get(k, "")) for k in REPORT_FIELDS})
    summary = aggregate(reports) if reports else {}
    summary["n_failed"] = len(rows) - len(reports)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump({"pairs": out_rows, "aggregate": summary}, fh, indent=2, default=_json_default)
    plotting.report_figure(os.path.join(args.out, "report.png"), out_rows)
    if not reports:
        print("error: every manifest row failed", file=sys.stderr)
        return 1
    print(f"pairs={len(rows)} ok={len(reports)} SR={summary['success_rate']:.3f} "
          f"mean NCM={summary['mean_ncm']:.1f}")
    return 0


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return v


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(type(v))


def parse_angles(text: str):
    """``"0,15,30"`` or ``"uniform:24"`` (24 angles from 0 up to 360 exclusive), degrees."""
    text = text.strip()
    if text.startswith("uniform:"):
        n = int(text.split(":", 1)[1])
        return [360.0 * k / n for k in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


SWEEP_FIELDS = ("angle", "status", "ncm", "cmr", "n_inliers", "n_putative", "rotation_est", "runtime", "error")


def sweep_rotation(image_a, image_b, angles, cfg, h_base=None):
    """Rotate B about its centre by each angle and match it against A."""
    h_base = np.eye(3) if h_base is None else np.asarray(h_base, dtype=np.float64)
    rows = []
    for ang in angles:
        rad = math.radians(ang)
        rec = {"angle": ang}
        b_rot = rotate_image(image_b, rad)
        h_true = affine_about_center(rad, (0.0, 0.0), image_b.shape[1], image_b.shape[0]) @ h_base
        t0 = time.perf_counter()
        try:
            ms, h, diag = match_images(image_a, b_rot, cfg)
        except FilerError as exc:
            rec.update(status="failed", ncm=0, cmr=0.0, n_inliers=0, n_putative=0,
                       rotation_est=math.nan, runtime=time.perf_counter() - t0,
                       error=f"{type(exc).__name__}: {exc}")
        else:
            inl = ms.inlier
            ncm = count_correct(ms.xy_a[inl], ms.xy_b[inl], h_true) if ms.n_inliers else 0
            rec.update(status="ok", ncm=ncm, cmr=correct_match_ratio(ncm, ms.n_inliers),
                       n_inliers=ms.n_inliers, n_putative=len(ms),
                       rotation_est=diag["rotation_deg"], runtime=time.perf_counter() - t0, error="")
        log.info("angle %.1f: %s", ang, rec)
        rows.append(rec)
    return rows


def cmd_sweep_rotation(args) -> int:
    _require(args.image_a, args.image_b, args.config, args.gt)
    cfg = _config(args)
    a = load_grayscale(args.image_a)
    b = load_grayscale(args.image_b)
    h_base = read_affine(args.gt) if args.gt else None
    angles = parse_angles(args.angles)
    rows = sweep_rotation(a, b, angles, cfg, h_base)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        for rec in rows:
            w.writerow({k: _fmt(rec[k]) if k not in ("runtime",) else f"{rec[k]:.3f}" for k in SWEEP_FIELDS})
    plotting.sweep_figure(os.path.join(args.out, "sweep.png"), rows)
    ok = [r for r in rows if r["status"] == "ok"]
    print(f"angles={len(rows)} ok={len(ok)} min CMR={min((r['cmr'] for r in ok), default=0):.1f}")
    return 0


def cmd_mosaic(args) -> int:
    _require(args.image_a, args.image_b, args.affine)
    a = load_grayscale(args.image_a)
    b = load_grayscale(args.image_b)
    h = read_affine(args.affine)
    mosaic = checkerboard_mosaic(a, b, h, args.tile)
    os.makedirs(args.out, exist_ok=True)
    save_grayscale(os.path.join(args.out, "mosaic.png"), mosaic)
    return 0


def _intensity_steps(args):
    steps = []
    if args.gamma is not None:
        steps.append(("gamma", args.gamma))
    if args.piecewise:
        steps.append(("piecewise", 0))
    if args.invert:
        steps.append(("inversion", 0))
    return tuple(steps)


def cmd_synth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    manifest = [MANIFEST_COLUMNS]
    for k in range(args.count):
        rotation = args.rotation + k * args.rotation_step
        spec = SynthSpec(pattern=args.pattern, width=args.size, height=args.size,
                         intensity_maps=_intensity_steps(args), noise=args.noise,
                         noise_level=args.noise_level, rotation=math.radians(rotation),
                         translation=(args.tx, args.ty), warp_amplitude=args.warp,
                         rng_seed=args.seed + k, image_path=args.image)
        a, b, gt = generate_pair(spec)
        stem = f"pair_{k:03d}"
        names = (f"{stem}_a.png", f"{stem}_b.png", f"{stem}_h.txt", f"{stem}_landmarks.csv")
        save_grayscale(os.path.join(args.out, names[0]), a)
        save_grayscale(os.path.join(args.out, names[1]), b)
        write_affine(os.path.join(args.out, names[2]), gt.h_true)
        write_landmarks(os.path.join(args.out, names[3]), gt.landmarks)
        manifest.append(names)
    with open(os.path.join(args.out, "manifest.csv"), "w", newline="") as fh:
        csv.writer(fh).writerows(manifest)
    print(f"wrote {args.count} pair(s) to {args.out}")
    return 0


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(load_config(args.config)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="filer", description="Multimodal image matching.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--out", default="out", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, help="consensus RNG seed")

    p = sub.add_parser("match", help="match two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--gt", help="ground-truth affine (3x3 text, A -> B)")
    p.add_argument("--landmarks", help="landmark CSV x_a,y_a,x_b,y_b")
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("detect", help="detect features on one image")
    p.add_argument("image")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="evaluate every pair of a manifest")
    p.add_argument("manifest")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-rotation", help="match A against rotated copies of B")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--angles", default="uniform:24", help="degrees: '0,15,30' or 'uniform:N'")
    p.add_argument("--gt", help="affine A -> B before rotation (default identity)")
    common(p)
    p.set_defaults(func=cmd_sweep_rotation)

    p = sub.add_parser("mosaic", help="checkerboard mosaic of A and B warped by an affine")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--affine", required=True, help="3x3 affine mapping A -> B")
    p.add_argument("--tile", type=int, default=64)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_mosaic)

    p = sub.add_parser("synth", help="generate synthetic multimodal pairs")
    p.add_argument("--pattern", default="edges", choices=("checkerboard", "blobs", "edges", "loaded-image"))
    p.add_argument("--image", help="source image for --pattern loaded-image")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--rotation", type=float, default=0.0, help="degrees")
    p.add_argument("--rotation-step", type=float, default=0.0, help="degrees added per pair")
    p.add_argument("--tx", type=float, default=0.0)
    p.add_argument("--ty", type=float, default=0.0)
    p.add_argument("--gamma", type=float)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--piecewise", action="store_true")
    p.add_argument("--noise", default="none", choices=("none", "gaussian", "salt-pepper", "speckle"))
    p.add_argument("--noise-level", type=float, default=0.0)
    p.add_argument("--warp", type=float, default=0.0, help="local warp amplitude in pixels")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("config", help="print the effective configuration")
    p.add_argument("--config")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FilerError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
