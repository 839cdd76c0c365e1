"""Seeded synthetic gaze corpus: scenes, observer profiles, ground truth.

Real stimuli and eye-tracking are out of scope. Instead, scenes are stacks
of Gaussian blobs on dedicated semantic channels plus smooth background
channels, and observers are trait vectors (channel preferences, center
bias, inhibition of return, temperature, log-normal duration statistics).
Ground-truth scanpaths are drawn from each observer's own priority map, so
individual differences in the data are known by construction and
recoverable: group A down-weights social channels, fixates briefly, and
hugs the center; group B is the mirror image.

Everything is a pure function of (config, seed). Scene i and the scanpath
of (scene, observer) each derive their own child seed, so generation is
order-independent and trivially parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .scanpath import Fixation, Scanpath

CATEGORIES = ("background", "nonsocial", "social")
BACKGROUND, NONSOCIAL, SOCIAL = 0, 1, 2


@dataclass
class CorpusConfig:
    """Generator knobs; defaults define the standard benchmark corpus."""

    n_scenes: int = 60
    n_observers: int = 8
    n_group_a: int = 4
    height: int = 16
    width: int = 16
    channels: int = 12
    n_social_channels: int = 4
    n_nonsocial_channels: int = 4
    scanpath_len: int = 6
    blob_count: tuple[int, int] = (2, 5)
    blob_sigma: tuple[float, float] = (0.05, 0.08)
    blob_amp: tuple[float, float] = (0.7, 1.2)
    # semantic blobs keep this distance from the screen center, so center
    # bias and semantic preference stay separately identifiable
    blob_center_gap: float = 0.15
    background_level: float = 0.25
    center_sigma: float = 0.32
    ior_sigma: float = 0.10
    # group trait distributions: (group A, group B) bases
    social_pref: tuple[float, float] = (0.15, 1.05)
    nonsocial_pref: tuple[float, float] = (0.95, 0.60)
    background_pref: float = 0.15
    pref_jitter: float = 0.25
    center_bias: tuple[float, float] = (1.10, 0.35)
    center_bias_jitter: float = 0.15
    ior_strength: float = 1.0
    ior_strength_jitter: float = 0.25
    temp: float = 0.16
    temp_jitter: float = 0.05
    dur_range_a: tuple[float, float] = (150.0, 280.0)
    dur_range_b: tuple[float, float] = (320.0, 640.0)
    log_dur_sd: float = 0.25

    def __post_init__(self):
        if self.n_social_channels + self.n_nonsocial_channels >= self.channels:
            raise ValueError(
                f"need at least one background channel: {self.channels} total, "
                f"{self.n_social_channels}+{self.n_nonsocial_channels} semantic"
            )
        if self.n_group_a >= self.n_observers:
            raise ValueError("group split leaves group B empty")
        edge = 3.5 * self.blob_sigma[1] + 0.02
        if self.blob_center_gap > 0.5 - edge - 0.02:
            raise ValueError(
                f"blob_center_gap {self.blob_center_gap} leaves no room for "
                f"blobs of sigma {self.blob_sigma[1]} inside the edge margin"
            )


@dataclass
class Blob:
    channel: int
    category: int
    cx: float
    cy: float
    sigma: float
    amp: float


@dataclass
class SyntheticScene:
    """Feature stack E, ROI labels, and a mild task-guidance prior m0."""

    id: int
    E: np.ndarray  # (C, H, W), nonnegative
    roi_mask: np.ndarray  # (H, W) of category codes
    m0: np.ndarray  # (H, W) simplex
    blobs: list[Blob] = field(default_factory=list)

    @property
    def grid(self) -> tuple[int, int]:
        return self.E.shape[1], self.E.shape[2]

    def category_at(self, x: float, y: float) -> str:
        h, w = self.roi_mask.shape
        row = min(int(y * h), h - 1)
        col = min(int(x * w), w - 1)
        return CATEGORIES[self.roi_mask[row, col]]


@dataclass
class ObserverProfile:
    id: int
    group: str  # "A" or "B"
    channel_pref: np.ndarray  # (C,)
    center_bias: float
    ior_strength: float
    temp: float
    log_dur_mean: float
    log_dur_sd: float

    def __post_init__(self):
        if self.temp <= 0:
            raise ValueError(f"profile {self.id}: temp must be > 0, got {self.temp}")
        if self.log_dur_sd <= 0:
            raise ValueError(f"profile {self.id}: log_dur_sd must be > 0")

    def social_preference(self, config: CorpusConfig) -> float:
        return float(self.channel_pref[: config.n_social_channels].mean())


def cell_centers(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(H, W) grids of x and y cell-center coordinates in [0,1]."""
    xs = (np.arange(width) + 0.5) / width
    ys = (np.arange(height) + 0.5) / height
    return np.meshgrid(xs, ys)


def center_bias_map(height: int, width: int, sigma: float) -> np.ndarray:
    """Unnormalized Gaussian bump at the screen center, peak 1."""
    gx, gy = cell_centers(height, width)
    return np.exp(-(((gx - 0.5) ** 2) + ((gy - 0.5) ** 2)) / (2.0 * sigma**2))


def _gaussian_bump(height, width, cx, cy, sigma, amp=1.0) -> np.ndarray:
    gx, gy = cell_centers(height, width)
    return amp * np.exp(-(((gx - cx) ** 2) + ((gy - cy) ** 2)) / (2.0 * sigma**2))


def _smooth_field(rng, height, width, level) -> np.ndarray:
    """Low-level background texture: blurred uniform noise scaled to [0, level]."""
    raw = rng.uniform(size=(height + 4, width + 4))
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    kernel /= kernel.sum()
    for axis in (0, 1):
        raw = np.apply_along_axis(lambda m: np.convolve(m, kernel, mode="same"), axis, raw)
    field_ = raw[2:-2, 2:-2]
    span = field_.max() - field_.min()
    if span > 0:
        field_ = (field_ - field_.min()) / span
    return level * field_


def generate_scene(config: CorpusConfig, seed, scene_id: int) -> SyntheticScene:
    """One scene from its own child seed; see generate_scenes."""
    rng = np.random.default_rng([_as_seed(seed), 0, scene_id])
    h, w, c = config.height, config.width, config.channels
    E = np.zeros((c, h, w))
    for ch in range(config.n_social_channels + config.n_nonsocial_channels, c):
        E[ch] = _smooth_field(rng, h, w, config.background_level)

    n_blobs = int(rng.integers(config.blob_count[0], config.blob_count[1] + 1))
    blobs: list[Blob] = []
    for b in range(n_blobs):
        # first two blobs pin one social and one nonsocial region per scene
        if b == 0:
            category = SOCIAL
        elif b == 1:
            category = NONSOCIAL
        else:
            category = SOCIAL if rng.uniform() < 0.5 else NONSOCIAL
        if category == SOCIAL:
            channel = int(rng.integers(0, config.n_social_channels))
        else:
            channel = config.n_social_channels + int(
                rng.integers(0, config.n_nonsocial_channels)
            )
        sigma = float(rng.uniform(*config.blob_sigma))
        margin = 3.5 * sigma + 0.02  # keep analytic mass on the canvas
        while True:
            cx = float(rng.uniform(margin, 1.0 - margin))
            cy = float(rng.uniform(margin, 1.0 - margin))
            if (cx - 0.5) ** 2 + (cy - 0.5) ** 2 >= config.blob_center_gap**2:
                break
        amp = float(rng.uniform(*config.blob_amp))
        E[channel] += _gaussian_bump(h, w, cx, cy, sigma, amp)
        blobs.append(Blob(channel, category, cx, cy, sigma, amp))

    roi_mask = np.zeros((h, w), dtype=np.int64)
    strongest = np.zeros((h, w))
    for blob in blobs:
        value = _gaussian_bump(h, w, blob.cx, blob.cy, blob.sigma, blob.amp)
        owned = (value >= 0.5 * blob.amp) & (value > strongest)
        roi_mask[owned] = blob.category
        strongest = np.maximum(strongest, np.where(owned, value, 0.0))

    guidance = center_bias_map(h, w, config.center_sigma)
    m0 = np.exp(guidance - guidance.max())
    m0 /= m0.sum()
    return SyntheticScene(id=scene_id, E=E, roi_mask=roi_mask, m0=m0, blobs=blobs)


def generate_scenes(n: int, config: CorpusConfig, seed) -> list[SyntheticScene]:
    """n scenes, bit-identical under the same (config, seed)."""
    return [generate_scene(config, seed, i) for i in range(n)]


def generate_profiles(
    n_observers: int,
    group_split: tuple[int, int] | int,
    seed,
    config: CorpusConfig | None = None,
) -> list[ObserverProfile]:
    """Observer trait vectors in two groups.

    Group A (ids 0..nA-1) down-weights social channels, raises center bias,
    and fixates briefly; group B mirrors it. Per-observer jitter plus an
    evenly spread duration scale make every profile unique, so scanpaths
    carry an individual signature as well as a group one.
    """
    config = config or CorpusConfig()
    if n_observers < 2:
        raise ValueError("need at least two observers")
    n_a = group_split if isinstance(group_split, int) else group_split[0]
    if not 0 < n_a < n_observers:
        raise ValueError(f"group split {group_split} must leave both groups nonempty")
    rng = np.random.default_rng([_as_seed(seed), 1])
    c = config.channels
    n_soc, n_non = config.n_social_channels, config.n_nonsocial_channels
    profiles = []
    for obs in range(n_observers):
        group = "A" if obs < n_a else "B"
        gi = 0 if group == "A" else 1
        pref = np.empty(c)
        pref[:n_soc] = config.social_pref[gi] + rng.normal(0.0, config.pref_jitter, n_soc)
        pref[n_soc : n_soc + n_non] = config.nonsocial_pref[gi] + rng.normal(
            0.0, config.pref_jitter, n_non
        )
        pref[n_soc + n_non :] = config.background_pref + rng.normal(
            0.0, 0.2 * config.pref_jitter, c - n_soc - n_non
        )
        lo, hi = config.dur_range_a if group == "A" else config.dur_range_b
        rank = obs if group == "A" else obs - n_a
        size = n_a if group == "A" else n_observers - n_a
        frac = rank / max(size - 1, 1)
        log_dur = np.log(lo) + frac * (np.log(hi) - np.log(lo)) + rng.normal(0.0, 0.03)
        profiles.append(
            ObserverProfile(
                id=obs,
                group=group,
                channel_pref=pref,
                center_bias=max(
                    0.0,
                    config.center_bias[gi] + rng.normal(0.0, config.center_bias_jitter),
                ),
                ior_strength=max(
                    0.0, config.ior_strength + rng.normal(0.0, config.ior_strength_jitter)
                ),
                temp=max(0.05, config.temp + rng.normal(0.0, config.temp_jitter)),
                log_dur_mean=float(log_dur),
                log_dur_sd=config.log_dur_sd,
            )
        )
    return profiles


def priority_map(
    profile: ObserverProfile,
    scene: SyntheticScene,
    ior: np.ndarray | None = None,
    config: CorpusConfig | None = None,
) -> np.ndarray:
    """Spatial softmax of preference-weighted features with bias terms.

    P = softmax((sum_c pref_c E_c + center_bias CB - ior_strength IOR) / temp).
    """
    config = config or CorpusConfig()
    h, w = scene.grid
    drive = np.tensordot(profile.channel_pref, scene.E, axes=1)
    drive = drive + profile.center_bias * center_bias_map(h, w, config.center_sigma)
    if ior is not None:
        drive = drive - profile.ior_strength * ior
    logits = drive / profile.temp
    flat = logits.reshape(-1)
    flat = flat - flat.max()
    p = np.exp(flat)
    p /= p.sum()
    return p.reshape(h, w)


def sample_gt_scanpath(
    profile: ObserverProfile,
    scene: SyntheticScene,
    T: int,
    seed,
    config: CorpusConfig | None = None,
) -> Scanpath:
    """Draw T fixations from the profile's evolving priority map.

    Each fixation adds a Gaussian inhibition bump at its cell, so revisits
    are suppressed in proportion to ior_strength. Fixations land on cell
    centers; durations are log-normal draws clamped to [50, 5000] ms.
    """
    if T < 1:
        raise ValueError("scanpath length must be >= 1")
    config = config or CorpusConfig()
    rng = np.random.default_rng(seed)
    h, w = scene.grid
    ior = np.zeros((h, w))
    fixations = []
    for _ in range(T):
        p = priority_map(profile, scene, ior, config)
        idx = int(rng.choice(h * w, p=p.reshape(-1)))
        row, col = divmod(idx, w)
        x, y = (col + 0.5) / w, (row + 0.5) / h
        dur = float(np.exp(rng.normal(profile.log_dur_mean, profile.log_dur_sd)))
        dur = float(np.clip(dur, 50.0, 5000.0))
        fixations.append(Fixation(x, y, dur))
        ior = ior + _gaussian_bump(h, w, x, y, config.ior_sigma)
    return Scanpath(scene.id, profile.id, fixations)


@dataclass
class Corpus:
    """In-memory corpus: scenes, observers, per-split ground-truth scanpaths."""

    config: CorpusConfig
    seed: int
    scenes: list[SyntheticScene]
    profiles: list[ObserverProfile]
    split_ids: dict[str, list[int]]
    scanpaths: dict[str, list[Scanpath]]

    def scene_by_id(self, scene_id: int) -> SyntheticScene:
        return self._index()[scene_id]

    def _index(self) -> dict[int, SyntheticScene]:
        if not hasattr(self, "_scene_index"):
            self._scene_index = {s.id: s for s in self.scenes}
        return self._scene_index


def split_counts(n_scenes: int) -> tuple[int, int, int]:
    """70/10/20 with every split nonempty from 3 scenes up."""
    if n_scenes < 3:
        raise ValueError(f"need at least 3 scenes to split, got {n_scenes}")
    n_train = int(n_scenes * 0.7)
    n_val = max(1, int(n_scenes * 0.1))
    if n_train + n_val >= n_scenes:
        n_train = n_scenes - n_val - 1
    return n_train, n_val, n_scenes - n_train - n_val


def build_corpus(config: CorpusConfig, seed: int) -> Corpus:
    """Scenes, profiles, and one GT scanpath per (scene, observer).

    Scene ids are partitioned 70/10/20 into train/val/test by a seeded
    shuffle; every observer appears in every split. Scanpath randomness is
    keyed per (seed, scene, observer), independent of generation order.
    """
    scenes = generate_scenes(config.n_scenes, config, seed)
    profiles = generate_profiles(
        config.n_observers,
        (config.n_group_a, config.n_observers - config.n_group_a),
        seed,
        config,
    )
    rng = np.random.default_rng([_as_seed(seed), 2])
    order = list(rng.permutation(config.n_scenes))
    n_train, n_val, _ = split_counts(config.n_scenes)
    split_ids = {
        "train": sorted(int(i) for i in order[:n_train]),
        "val": sorted(int(i) for i in order[n_train : n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val :]),
    }
    by_id = {s.id: s for s in scenes}
    scanpaths: dict[str, list[Scanpath]] = {}
    for split, ids in split_ids.items():
        rows = []
        for scene_id in ids:
            for profile in profiles:
                rows.append(
                    sample_gt_scanpath(
                        profile,
                        by_id[scene_id],
                        config.scanpath_len,
                        [_as_seed(seed), 3, scene_id, profile.id],
                        config,
                    )
                )
        scanpaths[split] = rows
    return Corpus(
        config=config,
        seed=int(_as_seed(seed)),
        scenes=scenes,
        profiles=profiles,
        split_ids=split_ids,
        scanpaths=scanpaths,
    )


def smoke_config() -> CorpusConfig:
    """Tiny corpus for fast pipeline runs and CLI smoke tests."""
    return replace(
        CorpusConfig(),
        n_scenes=10,
        n_observers=4,
        n_group_a=2,
        height=8,
        width=8,
        channels=6,
        n_social_channels=2,
        n_nonsocial_channels=2,
        scanpath_len=4,
    )


def _as_seed(seed) -> int:
    if isinstance(seed, (list, tuple)):
        raise TypeError("corpus seeds must be single integers")
    return int(seed)
