"""Detector/matcher metrics, registration accuracy and ground-truth file formats."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyReportList, TooFewLandmarks, ZeroFeatures

TRUE_MATCH_TOL = 3.0


@dataclass
class GroundTruth:
    h_true: np.ndarray  # 3x3, maps image-A coordinates to image-B coordinates
    landmarks: np.ndarray  # (n, 4) rows of x_a, y_a, x_b, y_b


@dataclass
class EvalReport:
    n_c: int = 0
    rep: float = 0.0
    ncm: int = 0
    cmr: float = 0.0
    rmse: float = math.nan
    me: float = math.nan
    runtime: float = 0.0
    n_putative: int = 0

    def as_dict(self):
        return asdict(self)


def _project(h, xy):
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    return xy @ np.asarray(h)[:2, :2].T + np.asarray(h)[:2, 2]


def pair_residuals(xy_a, xy_b, h) -> np.ndarray:
    """``||p_b - H p_a||`` for every pair."""
    xy_b = np.asarray(xy_b, dtype=np.float64).reshape(-1, 2)
    return np.sqrt(((xy_b - _project(h, xy_a)) ** 2).sum(axis=1))


def count_correct(xy_a, xy_b, h_true, tol: float = TRUE_MATCH_TOL) -> int:
    """Pairs whose ground-truth residual is strictly below ``tol``."""
    if len(np.asarray(xy_a)) == 0:
        return 0
    return int(np.count_nonzero(pair_residuals(xy_a, xy_b, h_true) < tol))


def repeatability(n_c, n1, n2) -> float:
    if n1 + n2 <= 0:
        raise ZeroFeatures("no features in either image")
    return n_c / ((n1 + n2) / 2.0)


def stability_ratios(reports) -> tuple:
    """Fractions of reports with ``n_c > 100`` and with ``rep > 0.1``."""
    reports = list(reports)
    if not reports:
        raise EmptyReportList("no reports")
    n = len(reports)
    return (sum(1 for r in reports if r.n_c > 100) / n,
            sum(1 for r in reports if r.rep > 0.1) / n)


def registration_accuracy(h_est, gt: GroundTruth) -> tuple:
    lm = np.asarray(gt.landmarks, dtype=np.float64).reshape(-1, 4)
    if len(lm) < 4:
        raise TooFewLandmarks(f"{len(lm)} landmarks, need at least 4")
    r = pair_residuals(lm[:, :2], lm[:, 2:], h_est)
    return float(np.sqrt(np.mean(r ** 2))), float(np.mean(r))


def success_rate(reports, threshold: int = 4) -> float:
    reports = list(reports)
    if not reports:
        raise EmptyReportList("no reports")
    return sum(1 for r in reports if r.ncm > threshold) / len(reports)


def correct_match_ratio(ncm: int, n_matches: int) -> float:
    return 100.0 * ncm / n_matches if n_matches else 0.0


def evaluate_matches(matches, h_est, gt: GroundTruth, n1: int, n2: int, runtime: float = 0.0) -> EvalReport:
    """Metrics for one matched pair.

    ``n_c`` counts correct putative matches, ``ncm`` counts correct
    consensus inliers and ``cmr`` is ``ncm`` over the inlier count.
    """
    h_true = gt.h_true
    n_c = count_correct(matches.xy_a, matches.xy_b, h_true) if len(matches) else 0
    inl = matches.inlier if len(matches) else np.zeros(0, dtype=bool)
    n_inl = int(np.count_nonzero(inl))
    ncm = count_correct(matches.xy_a[inl], matches.xy_b[inl], h_true) if n_inl else 0
    rmse, me = (math.nan, math.nan)
    if h_est is not None and len(np.asarray(gt.landmarks).reshape(-1, 4)) >= 4:
        rmse, me = registration_accuracy(h_est, gt)
    return EvalReport(n_c=n_c, rep=repeatability(n_c, n1, n2) if n1 + n2 else 0.0, ncm=ncm,
                      cmr=correct_match_ratio(ncm, n_inl), rmse=rmse, me=me,
                      runtime=runtime, n_putative=len(matches))


def aggregate(reports) -> dict:
    """Means over reports plus the stability ratios and success rate."""
    reports = list(reports)
    if not reports:
        raise EmptyReportList("no reports")
    out = {}
    for key in ("n_c", "rep", "ncm", "cmr", "rmse", "me", "runtime"):
        vals = [getattr(r, key) for r in reports]
        vals = [v for v in vals if not (isinstance(v, float) and math.isnan(v))]
        out[f"mean_{key}"] = float(np.mean(vals)) if vals else math.nan
    out["ratio_nc"], out["ratio_rep"] = stability_ratios(reports)
    out["success_rate"] = success_rate(reports)
    out["n_pairs"] = len(reports)
    return out


# ---------------------------------------------------------------- file formats

def write_affine(path, h) -> None:
    h = np.asarray(h, dtype=np.float64)
    with open(os.fspath(path), "w") as fh:
        for row in h:
            fh.write(" ".join(f"{v:.12g}" for v in row) + "\n")


def read_affine(path) -> np.ndarray:
    with open(os.fspath(path)) as fh:
        rows = [line.split() for line in fh if line.strip()]
    h = np.array(rows, dtype=np.float64)
    if h.shape != (3, 3):
        raise ValueError(f"{path}: expected 3 rows of 3 numbers, got shape {h.shape}")
    return h


def write_landmarks(path, landmarks) -> None:
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_a", "y_a", "x_b", "y_b"])
        for row in np.asarray(landmarks).reshape(-1, 4):
            w.writerow([f"{v:.10g}" for v in row])


def read_landmarks(path) -> np.ndarray:
    rows = []
    with open(os.fspath(path), newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                rows.append([float(v) for v in rec[:4]])
            except ValueError:
                continue  # header
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def read_ground_truth(h_path, landmarks_path=None) -> GroundTruth:
    lm = read_landmarks(landmarks_path) if landmarks_path else np.zeros((0, 4))
    return GroundTruth(h_true=read_affine(h_path), landmarks=lm)
