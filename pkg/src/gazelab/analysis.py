"""Semantic-level gaze statistics and observer-feature analysis.

Fixations are grouped into social, nonsocial, and background regions to
give per-observer proportion, latency, and duration profiles. Rankings of
observers by those profiles are compared with a permutation-tested
Spearman correlation, trait groups with a Welch t statistic under label
permutation, and learned observer projections feed a leave-one-out
perceptron that tries to recover group membership from gaze alone.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .optim import Adam
from .synthetic import CATEGORIES
from .tensor import Tape, Tensor, matmul, sigmoid, softplus, tanh, transpose, tsum

log = logging.getLogger(__name__)

COMPARE_TOL = 1e-12


@dataclass
class CategoryStats:
    """One observer's behavior inside one region category.

    ``latency_ms`` is the mean time before the first fixation lands in the
    category, averaged over scanpaths that reach it; ``None`` when the
    observer never fixates the category (likewise for the mean duration).
    """

    proportion: float
    latency_ms: float | None
    mean_duration_ms: float | None


@dataclass
class RoiStats:
    per_observer: dict[int, dict[str, CategoryStats]]

    def proportions(self, category: str) -> dict[int, float]:
        """Map observer id to fixation proportion in one category."""
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        return {obs: stats[category].proportion
                for obs, stats in self.per_observer.items()}


def roi_stats(scanpaths, scenes) -> RoiStats:
    """Per-observer fixation statistics over region categories.

    Proportions are fixation counts per category over the observer's total;
    they sum to one. Latency to a category is the sum of durations of the
    fixations preceding the first one inside it, zero when the scanpath
    starts there.
    """
    scene_by_id = {scene.id: scene for scene in scenes}
    counts: dict[int, dict[str, int]] = {}
    durations: dict[int, dict[str, list]] = {}
    latencies: dict[int, dict[str, list]] = {}
    for sp in scanpaths:
        scene = scene_by_id.get(sp.image_id)
        if scene is None:
            raise ValueError(f"unknown image id {sp.image_id}")
        obs = sp.observer_id
        counts.setdefault(obs, {cat: 0 for cat in CATEGORIES})
        durations.setdefault(obs, {cat: [] for cat in CATEGORIES})
        latencies.setdefault(obs, {cat: [] for cat in CATEGORIES})
        elapsed = 0.0
        first_hit: dict[str, float] = {}
        for fix in sp.fixations:
            cat = scene.category_at(fix.x, fix.y)
            counts[obs][cat] += 1
            durations[obs][cat].append(fix.dur_ms)
            first_hit.setdefault(cat, elapsed)
            elapsed += fix.dur_ms
        for cat, latency in first_hit.items():
            latencies[obs][cat].append(latency)

    per_observer = {}
    for obs in sorted(counts):
        total = sum(counts[obs].values())
        stats = {}
        for cat in CATEGORIES:
            durs = durations[obs][cat]
            lats = latencies[obs][cat]
            stats[cat] = CategoryStats(
                proportion=counts[obs][cat] / total,
                latency_ms=float(np.mean(lats)) if lats else None,
                mean_duration_ms=float(np.mean(durs)) if durs else None,
            )
        per_observer[obs] = stats
    return RoiStats(per_observer=per_observer)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank run."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and \
                values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    return float(da @ db / np.sqrt((da @ da) * (db @ db)))


def _exceeds(value: float, observed: float, alternative: str) -> bool:
    if alternative == "greater":
        return value >= observed - COMPARE_TOL
    if alternative == "less":
        return value <= observed + COMPARE_TOL
    return abs(value) >= abs(observed) - COMPARE_TOL


@dataclass
class CorrelationResult:
    rho: float
    p_value: float
    degenerate: bool
    method: str
    n_permutations: int


def spearman_rho(x, y, alternative: str = "greater",
                 n_permutations: int = 10000,
                 seed: int = 0) -> CorrelationResult:
    """Spearman rank correlation with a permutation p-value.

    Ties get mean ranks; the coefficient is Pearson on the rank vectors.
    The null distribution permutes one side. All permutations are
    enumerated when there are at most ``n_permutations`` of them, which
    makes the p-value exact; otherwise it is sampled with the add-one
    correction. A constant input has no ranking to correlate, so the
    result degenerates to zero with ``p = 1``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("inputs must be equal-length 1-D vectors")
    n = x.shape[0]
    if n < 3:
        raise ValueError("need at least 3 paired values")
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return CorrelationResult(rho=0.0, p_value=1.0, degenerate=True,
                                 method="degenerate", n_permutations=0)
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rho = _pearson(rx, ry)
    if math.factorial(n) <= n_permutations:
        hits = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            hits += _exceeds(_pearson(rx, ry[list(perm)]), rho, alternative)
            total += 1
        return CorrelationResult(rho=rho, p_value=hits / total,
                                 degenerate=False, method="exact",
                                 n_permutations=total)
    rng = np.random.default_rng([seed, 37])
    hits = 0
    for _ in range(n_permutations):
        hits += _exceeds(_pearson(rx, rng.permutation(ry)), rho, alternative)
    return CorrelationResult(rho=rho,
                             p_value=(hits + 1) / (n_permutations + 1),
                             degenerate=False, method="sampled",
                             n_permutations=n_permutations)


def welch_t(a: np.ndarray, b: np.ndarray) -> float:
    """Welch's unequal-variance t statistic; zero for identical constants."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a.mean() - b.mean()
    denom = math.sqrt(a.var(ddof=1) / a.shape[0] + b.var(ddof=1) / b.shape[0])
    if denom == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return float(diff / denom)


@dataclass
class GroupCompareResult:
    t: float
    p_value: float
    method: str
    n_permutations: int


def group_compare(values_a, values_b, n_permutations: int = 10000,
                  seed: int = 0) -> GroupCompareResult:
    """Two-sided permutation test of a group difference via Welch's t.

    Group labels are reshuffled over the pooled values; the p-value is the
    share of relabelings whose |t| reaches the observed one. Every split is
    enumerated when there are at most ``n_permutations`` of them (exact),
    otherwise splits are sampled with the add-one correction.
    """
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("each group needs at least 2 values")
    t_obs = welch_t(a, b)
    pooled = np.concatenate([a, b])
    n = pooled.shape[0]
    k = a.shape[0]
    total = math.comb(n, k)
    if total <= n_permutations:
        hits = 0
        for picked in itertools.combinations(range(n), k):
            mask = np.zeros(n, dtype=bool)
            mask[list(picked)] = True
            hits += _exceeds(welch_t(pooled[mask], pooled[~mask]), t_obs,
                             "two-sided")
        return GroupCompareResult(t=t_obs, p_value=hits / total,
                                  method="exact", n_permutations=total)
    rng = np.random.default_rng([seed, 41])
    hits = 0
    for _ in range(n_permutations):
        perm = rng.permutation(n)
        hits += _exceeds(welch_t(pooled[perm[:k]], pooled[perm[k:]]), t_obs,
                         "two-sided")
    return GroupCompareResult(t=t_obs,
                              p_value=(hits + 1) / (n_permutations + 1),
                              method="sampled",
                              n_permutations=n_permutations)


@dataclass
class ObserverFeature:
    """Concatenated observer projections from the four guidance pathways."""

    observer_id: int
    v: np.ndarray


def extract_observer_features(model, observers=None) -> list[ObserverFeature]:
    """Per-observer vector [W_mu u, W_us u, W_uc u, W_um u].

    Requires the embedding pathway; without it every observer maps to the
    same code and the projections carry no identity.
    """
    if not model.config.uses_embedding:
        raise ValueError(
            "observer features require the embedding pathway (enable_oe "
            "with embedding mode)")
    if observers is None:
        observers = range(model.config.n_observers)
    p = model.params
    features = []
    for obs in observers:
        u = model.encode_observer(int(obs)).data
        v = np.concatenate([p["W_mu"].data @ u, p["W_us"].data @ u,
                            p["W_uc"].data @ u, p["W_um"].data @ u])
        features.append(ObserverFeature(observer_id=int(obs), v=v))
    return features


@dataclass
class LoocvResult:
    accuracy: float
    predictions: list
    probabilities: list
    classes: tuple


def classify_group_loocv(features, labels, hidden: int = 16,
                         epochs: int = 200, lr: float = 0.001,
                         seed: int = 0) -> LoocvResult:
    """Leave-one-out group classification with a small perceptron.

    Each fold z-scores with training-fold statistics, trains a
    tanh-hidden, logistic-output network with Adam, and predicts the held
    out observer. Accuracy is the percent of folds predicted correctly.

    Holding one observer out leaves the training labels imbalanced, so the
    loss reweights classes by inverse frequency; together with the small
    default learning rate this keeps label-shuffled controls at chance
    instead of the below-chance drift an interpolating fit produces.
    """
    rows = [f.v if isinstance(f, ObserverFeature) else np.asarray(f, float)
            for f in features]
    X = np.stack(rows).astype(float)
    n, dim = X.shape
    if n < 4:
        raise ValueError("need at least 4 observers for leave-one-out")
    if len(labels) != n:
        raise ValueError("labels must match the number of feature rows")
    classes = tuple(sorted(set(labels)))
    if len(classes) != 2:
        raise ValueError(f"need exactly 2 classes, got {classes}")
    y = np.array([classes.index(lab) for lab in labels], dtype=float)

    predictions = []
    probabilities = []
    for fold in range(n):
        train = np.arange(n) != fold
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        sd = np.where(sd == 0.0, 1.0, sd)
        Xz = (X - mu) / sd
        rng = np.random.default_rng([seed, 43, fold])
        params = {
            "W1": Tensor(rng.normal(0.0, 1.0 / np.sqrt(dim), (hidden, dim)),
                         trainable=True),
            "b1": Tensor(np.zeros(hidden), trainable=True),
            "W2": Tensor(rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, 1)),
                         trainable=True),
            "b2": Tensor(np.zeros(1), trainable=True),
        }
        opt = Adam(params, lr=lr, weight_decay=0.0)
        y_train = y[train]
        n_pos = y_train.sum()
        n_neg = y_train.shape[0] - n_pos
        if n_pos > 0 and n_neg > 0:
            weights = np.where(y_train == 1.0,
                               y_train.shape[0] / (2.0 * n_pos),
                               y_train.shape[0] / (2.0 * n_neg))
        else:
            weights = np.ones(y_train.shape[0])
        Xt = Tensor(Xz[train])
        Yt = Tensor(y_train[:, None])
        Wt = Tensor(weights[:, None])
        for _ in range(epochs):
            with Tape() as tape:
                H = tanh(matmul(Xt, transpose(params["W1"])) + params["b1"])
                Z = matmul(H, params["W2"]) + params["b2"]
                # stable bernoulli NLL: softplus(z) - y z = -log p(y | z)
                loss = tsum(Wt * (softplus(Z) - Yt * Z)) / float(train.sum())
            opt.step(tape.gradients(loss))
        h = tanh(matmul(params["W1"], Tensor(Xz[fold])) + params["b1"])
        z = matmul(transpose(params["W2"]), h) + params["b2"]
        prob = float(sigmoid(z).data[0])
        predicted = classes[int(prob >= 0.5)]
        predictions.append(predicted)
        probabilities.append(prob)

    truth = [classes[int(v)] for v in y]
    accuracy = 100.0 * float(np.mean([p == t for p, t in
                                      zip(predictions, truth)]))
    return LoocvResult(accuracy=accuracy, predictions=predictions,
                       probabilities=probabilities, classes=classes)


def _stats_dict(stats: CategoryStats) -> dict:
    return {"proportion": stats.proportion,
            "latency_ms": stats.latency_ms,
            "mean_duration_ms": stats.mean_duration_ms}


def semantic_report(predictions, ground_truth, scenes, groups=None,
                    seed: int = 0) -> dict:
    """Correlation and group tables comparing predicted and true gaze.

    Builds region statistics for both sides, correlates the per-observer
    proportions per category, and, when a group label map is given, tests
    the group gap in each category for ground truth and predictions.
    """
    gt_stats = roi_stats(ground_truth, scenes)
    pred_stats = roi_stats(predictions, scenes)
    observers = sorted(gt_stats.per_observer)
    report: dict = {
        "observers": observers,
        "ground_truth": {obs: {cat: _stats_dict(s[cat]) for cat in CATEGORIES}
                         for obs, s in gt_stats.per_observer.items()},
        "predicted": {obs: {cat: _stats_dict(s[cat]) for cat in CATEGORIES}
                      for obs, s in pred_stats.per_observer.items()},
        "correlations": {},
    }
    for cat in CATEGORIES:
        gt_props = gt_stats.proportions(cat)
        pred_props = pred_stats.proportions(cat)
        shared = [obs for obs in observers if obs in pred_props]
        result = spearman_rho([gt_props[o] for o in shared],
                              [pred_props[o] for o in shared], seed=seed)
        report["correlations"][cat] = {
            "rho": result.rho, "p_value": result.p_value,
            "degenerate": result.degenerate, "method": result.method}
    if groups is not None:
        names = sorted(set(groups.values()))
        if len(names) != 2:
            raise ValueError(f"need exactly 2 groups, got {names}")
        report["group_comparison"] = {}
        for side, stats in (("ground_truth", gt_stats),
                            ("predicted", pred_stats)):
            tables = {}
            for cat in CATEGORIES:
                props = stats.proportions(cat)
                a = [props[o] for o in sorted(props) if groups[o] == names[0]]
                b = [props[o] for o in sorted(props) if groups[o] == names[1]]
                result = group_compare(a, b, seed=seed)
                tables[cat] = {"t": result.t, "p_value": result.p_value,
                               "method": result.method}
            report["group_comparison"][side] = tables
    return report
