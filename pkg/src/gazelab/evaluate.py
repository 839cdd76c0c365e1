"""Value and ranking evaluation, plus the saliency-map pipeline.

Two regimes compare predictions with ground truth:

* value: each prediction scored against the matching observer's scanpath
  (ScanMatch, MultiMatch mean, string-edit distance), with means and
  standard errors over pairs.
* ranking: each prediction ranked against every observer's ground truth on
  its image by ScanMatch; the matching observer's rank yields MRR and R@K.

The saliency path pools fixations per image into Gaussian-smoothed density
maps and scores them with CC, AUC, NSS, sAUC, KLD, and SIM.

Per-pair computations are pure; ``threads`` > 1 maps them across a thread
pool with a deterministic, order-preserving reduce.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricConfig, multimatch, scanmatch, string_edit_distance
from .scanpath import Scanpath

log = logging.getLogger(__name__)

VALUE_METRICS = ("sm", "mm", "sed")


def resolve_threads(threads: int | None = None) -> int:
    """Explicit argument, else the ISP_THREADS environment, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("ISP_THREADS", "")
    return max(1, int(env)) if env.strip() else 1


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _index_by_pair(paths) -> dict:
    out = {}
    for sp in paths:
        out[(sp.image_id, sp.observer_id)] = sp
    return out


def predict_split(model, corpus, split: str, n_steps: int | None = None,
                  mode: str = "argmax", seed: int = 0):
    """One predicted scanpath per (image, observer) of the split."""
    observers = sorted({sp.observer_id for sp in corpus.scanpaths[split]})
    if n_steps is None:
        n_steps = len(corpus.scanpaths[split][0])
    preds = []
    for image_id in corpus.split_ids[split]:
        scene = corpus.scene_by_id(image_id)
        for observer_id in observers:
            preds.append(model.sample_scanpath(
                scene.E, observer_id, n_steps=n_steps, mode=mode,
                seed=[int(seed), 21, int(image_id), int(observer_id)],
                image_id=image_id))
    return preds


@dataclass
class ValueResult:
    pairs: dict
    means: dict
    stderr: dict


def _pair_scores(pred: Scanpath, gt: Scanpath, config: MetricConfig) -> dict:
    return {
        "sm": scanmatch(pred, gt, config),
        "mm": multimatch(pred, gt, config).mean,
        "sed": float(string_edit_distance(pred, gt, config)),
    }


def value_eval(preds, gt, config: MetricConfig | None = None,
               threads: int = 1) -> ValueResult:
    """Score each prediction against its own observer's ground truth."""
    config = config or MetricConfig()
    by_pair = _index_by_pair(preds)
    ordered = sorted(gt, key=lambda sp: (sp.image_id, sp.observer_id))
    for sp in ordered:
        if (sp.image_id, sp.observer_id) not in by_pair:
            raise ValueError(
                f"missing prediction for image {sp.image_id}, "
                f"observer {sp.observer_id}")

    def score(sp):
        return _pair_scores(by_pair[(sp.image_id, sp.observer_id)], sp,
                            config)

    scored = _pmap(score, ordered, threads)
    pairs = {(sp.image_id, sp.observer_id): row
             for sp, row in zip(ordered, scored)}
    means, stderr = {}, {}
    for name in VALUE_METRICS:
        values = np.array([row[name] for row in scored], dtype=float)
        means[name] = float(values.mean()) if values.size else float("nan")
        stderr[name] = (float(values.std(ddof=1) / np.sqrt(values.size))
                        if values.size > 1 else 0.0)
    return ValueResult(pairs=pairs, means=means, stderr=stderr)


def expected_random_mrr(n_observers: int) -> float:
    """Exact MRR when the correct rank is uniform on 1..n."""
    if n_observers < 1:
        raise ValueError("need at least one observer")
    return float(sum(1.0 / r for r in range(1, n_observers + 1))
                 / n_observers)


@dataclass
class RankingResult:
    ranks: dict
    mrr: float
    recall_at: dict


def rank_eval(preds, gt, config: MetricConfig | None = None,
              ks=(1, 5), threads: int = 1) -> RankingResult:
    """Rank every observer's ground truth against each prediction.

    Ground truths on the prediction's image are sorted by ScanMatch to the
    prediction, descending, ties broken by observer id ascending; the
    matching observer's position is the rank. Images lacking ground truth
    from every observer are excluded and logged.
    """
    config = config or MetricConfig()
    observers = sorted({sp.observer_id for sp in gt})
    gt_by_image: dict[int, dict] = {}
    for sp in gt:
        gt_by_image.setdefault(sp.image_id, {})[sp.observer_id] = sp
    usable = {}
    for image_id, per_obs in sorted(gt_by_image.items()):
        if set(per_obs) != set(observers):
            log.warning("rank_eval: image %s lacks ground truth from all "
                        "observers; excluded", image_id)
            continue
        usable[image_id] = per_obs
    pred_rows = sorted(
        (sp for sp in preds if sp.image_id in usable),
        key=lambda sp: (sp.image_id, sp.observer_id))

    def rank_one(pred):
        per_obs = usable[pred.image_id]
        scored = [(scanmatch(pred, per_obs[obs], config), obs)
                  for obs in observers]
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        for position, (_, obs) in enumerate(scored, start=1):
            if obs == pred.observer_id:
                return position
        raise ValueError(
            f"prediction observer {pred.observer_id} has no ground truth "
            f"on image {pred.image_id}")

    ranks_list = _pmap(rank_one, pred_rows, threads)
    ranks = {(sp.image_id, sp.observer_id): rank
             for sp, rank in zip(pred_rows, ranks_list)}
    values = np.array(ranks_list, dtype=float)
    mrr = float(np.mean(1.0 / values)) if values.size else float("nan")
    recall = {int(k): (float(np.mean(values <= k) * 100.0)
                       if values.size else float("nan"))
              for k in ks}
    return RankingResult(ranks=ranks, mrr=mrr, recall_at=recall)


def human_consistency(gt, config: MetricConfig | None = None,
                      threads: int = 1) -> dict:
    """Leave-one-observer-out inter-observer agreement, grand means.

    For each (image, observer), the mean metric between that observer's
    scanpath and every other observer's on the same image. Images with a
    single observer are skipped with a warning.
    """
    config = config or MetricConfig()
    by_image: dict[int, list] = {}
    for sp in gt:
        by_image.setdefault(sp.image_id, []).append(sp)
    jobs = []
    for image_id, group in sorted(by_image.items()):
        if len(group) < 2:
            log.warning("human_consistency: image %s has a single "
                        "observer; skipped", image_id)
            continue
        group = sorted(group, key=lambda sp: sp.observer_id)
        for sp in group:
            others = [o for o in group if o.observer_id != sp.observer_id]
            jobs.append((sp, others))

    def agree(job):
        sp, others = job
        rows = [_pair_scores(sp, other, config) for other in others]
        return {name: float(np.mean([row[name] for row in rows]))
                for name in VALUE_METRICS}

    scored = _pmap(agree, jobs, threads)
    return {name: (float(np.mean([row[name] for row in scored]))
                   if scored else float("nan"))
            for name in VALUE_METRICS}


# ---------------------------------------------------------------------------
# saliency

@dataclass
class SaliencyMap:
    grid: np.ndarray
    kind: str = "density"

    def __post_init__(self):
        if self.kind not in ("density", "raw"):
            raise ValueError("kind must be 'density' or 'raw'")


def _bin_fixations(fixations, height: int, width: int) -> np.ndarray:
    counts = np.zeros((height, width))
    for fix in fixations:
        col = min(int(fix.x * width), width - 1)
        row = min(int(fix.y * height), height - 1)
        counts[row, col] += 1.0
    return counts


def build_saliency(fixations, sigma: float | None = None,
                   resolution=(64, 64), kind: str = "density") -> SaliencyMap:
    """Gaussian-smoothed fixation map at the given (height, width).

    Fixations are binned to cells and convolved with a separable Gaussian
    truncated at three sigma; ``density`` maps are normalized to sum 1,
    ``raw`` maps keep the smoothed counts. Sigma defaults to width / 16
    cells.
    """
    fixations = list(fixations)
    if not fixations:
        raise ValueError("cannot build a saliency map from zero fixations")
    height, width = int(resolution[0]), int(resolution[1])
    if sigma is None:
        sigma = width / 16.0
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    counts = _bin_fixations(fixations, height, width)
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    # np.convolve "same" returns max(M, N) values; slice the full product
    # instead so kernels wider than the grid still yield the grid size.
    def centered(signal):
        return np.convolve(signal, kernel, mode="full")[
            radius:radius + signal.shape[0]]

    smooth = np.apply_along_axis(centered, 1, counts)
    smooth = np.apply_along_axis(centered, 0, smooth)
    if kind == "density":
        smooth = smooth / smooth.sum()
    return SaliencyMap(grid=smooth, kind=kind)


@dataclass
class SaliencyScores:
    cc: float
    auc: float
    nss: float
    sauc: float
    kld: float
    sim: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {"cc": self.cc, "auc": self.auc, "nss": self.nss,
                "sauc": self.sauc, "kld": self.kld, "sim": self.sim,
                "degenerate": self.degenerate}


KLD_EPS = 1e-7


def _fix_cells(fixations, height, width):
    return [(min(int(f.y * height), height - 1),
             min(int(f.x * width), width - 1)) for f in fixations]


def _auc_from_values(pos: np.ndarray, neg: np.ndarray) -> float:
    """ROC area with thresholds at the positive values.

    Step integration of the ROC staircase, which reduces to the rank-sum
    statistic: the fraction of (positive, negative) pairs the positive
    wins, ties credited half.
    """
    if pos.size == 0 or neg.size == 0:
        return float("nan")
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    at_or_below = np.searchsorted(neg_sorted, pos, side="right")
    wins = below + 0.5 * (at_or_below - below)
    return float(wins.sum() / (pos.size * neg.size))


def saliency_metrics(pred: SaliencyMap, gt_fixations, gt_map: SaliencyMap,
                     other_fixations=()) -> SaliencyScores:
    """Standard saliency scores of a predicted map.

    CC is Pearson between the two grids. AUC treats every fixated cell as
    positive and every other cell as negative, thresholding at fixated
    values. NSS is the mean z-scored prediction at fixation cells. sAUC
    replaces the negatives with fixation cells from other images. KLD and
    SIM compare density maps with a 1e-7 floor. A constant prediction has
    no z-score or correlation; those scores degenerate to 0 with a flag.
    """
    gt_fixations = list(gt_fixations)
    if pred.grid.shape != gt_map.grid.shape:
        raise ValueError(
            f"resolution mismatch: {pred.grid.shape} vs {gt_map.grid.shape}")
    if not gt_fixations:
        raise ValueError("gt_fixations must be nonempty")
    height, width = pred.grid.shape
    p = pred.grid.astype(float)
    g = gt_map.grid.astype(float)
    degenerate = False

    p_std = p.std()
    g_std = g.std()
    if p_std == 0.0 or g_std == 0.0:
        degenerate = True
        cc = 0.0
    else:
        cc = float(np.corrcoef(p.ravel(), g.ravel())[0, 1])

    cells = _fix_cells(gt_fixations, height, width)
    unique_cells = sorted(set(cells))
    fix_mask = np.zeros((height, width), dtype=bool)
    for row, col in unique_cells:
        fix_mask[row, col] = True
    auc = _auc_from_values(p[fix_mask], p[~fix_mask])

    if p_std == 0.0:
        degenerate = True
        nss = 0.0
    else:
        z = (p - p.mean()) / p_std
        nss = float(np.mean([z[row, col] for row, col in cells]))

    other = list(other_fixations)
    if other:
        neg_cells = _fix_cells(other, height, width)
        neg_vals = np.array([p[r, c] for r, c in neg_cells])
        sauc = _auc_from_values(p[fix_mask], neg_vals)
    else:
        sauc = float("nan")

    p_density = p / p.sum() if pred.kind == "raw" else p
    g_density = g / g.sum() if gt_map.kind == "raw" else g
    kld = float(np.sum(g_density *
                       np.log((g_density + KLD_EPS) / (p_density + KLD_EPS))))
    sim = float(np.sum(np.minimum(p_density, g_density)))
    return SaliencyScores(cc=cc, auc=auc, nss=nss, sauc=sauc, kld=kld,
                          sim=sim, degenerate=degenerate)


def saliency_report(preds, gt, resolution=(64, 64), sigma: float | None = None,
                    seed: int = 0, n_shuffle: int = 10) -> dict:
    """Per-image pooled saliency scores and their means.

    Fixations are pooled over observers per image on both sides. For each
    image, sAUC negatives come from the ground-truth fixations of up to
    ``n_shuffle`` other images chosen by the seed.
    """
    pred_by_image: dict[int, list] = {}
    for sp in preds:
        pred_by_image.setdefault(sp.image_id, []).extend(sp.fixations)
    gt_by_image: dict[int, list] = {}
    for sp in gt:
        gt_by_image.setdefault(sp.image_id, []).extend(sp.fixations)
    images = sorted(set(pred_by_image) & set(gt_by_image))
    rows = {}
    rng = np.random.default_rng([int(seed), 31])
    for image_id in images:
        others = [i for i in images if i != image_id]
        chosen = (rng.choice(len(others), size=min(n_shuffle, len(others)),
                             replace=False) if others else [])
        shuffle_fix = []
        for idx in chosen:
            shuffle_fix.extend(gt_by_image[others[int(idx)]])
        pred_map = build_saliency(pred_by_image[image_id], sigma=sigma,
                                  resolution=resolution)
        gt_map = build_saliency(gt_by_image[image_id], sigma=sigma,
                                resolution=resolution)
        rows[image_id] = saliency_metrics(pred_map, gt_by_image[image_id],
                                          gt_map, shuffle_fix)
    means = {}
    for name in ("cc", "auc", "nss", "sauc", "kld", "sim"):
        values = [getattr(rows[i], name) for i in images]
        finite = [v for v in values if np.isfinite(v)]
        means[name] = float(np.mean(finite)) if finite else float("nan")
    return {"per_image": rows, "means": means,
            "degenerate": any(rows[i].degenerate for i in images)}
