"""Observer-conditioned scanpath model.

A recurrent decoder watches a C-channel feature grid E and emits, per step,
a spatial probability map over grid cells plus Gaussian parameters for the
log fixation duration. Observer identity can enter three ways:

* ``embedding`` mode: a learned code u = W_u @ one_hot modulates the
  guidance map, the feature fusion vectors, and the semantic-map weights.
* ``one_hot_concat`` mode: the raw one-hot identity is appended to the
  decoder input and the embedding pathways are left out.
* OE disabled: a single observer-agnostic decoder.

Feature integration (FI) and fixation prioritization (FP) are separately
toggleable; each disabled path is replaced by a small learned projection so
ablation rows stay trainable. All forward math runs on the in-house tensor
engine, so the same code path serves training (under a tape) and inference.

Grid cells are indexed row-major: cell = row * width + col. A fixation at
normalized (x, y) lands in row floor(y * H), col floor(x * W), clamped to
the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scanpath import Fixation, Scanpath
from .tensor import (
    Tensor,
    concat,
    mean,
    narrow,
    outer,
    pick,
    reshape,
    sigmoid,
    softmax,
    softplus,
    tanh,
    transpose,
    relu,
)

OBSERVER_MODES = ("embedding", "one_hot_concat")

DUR_CLAMP_MS = (50.0, 5000.0)
VAR_FLOOR = 1e-4


@dataclass
class ModelConfig:
    """Architecture extents and pathway toggles."""

    n_observers: int = 8
    height: int = 16
    width: int = 16
    channels: int = 12
    observer_dim: int = 16
    hidden: int = 64
    semantic_channels: int = 4
    max_steps: int = 8
    enable_oe: bool = True
    enable_fi: bool = True
    enable_fp: bool = True
    observer_mode: str = "embedding"

    def __post_init__(self):
        for name in (
            "n_observers",
            "height",
            "width",
            "channels",
            "observer_dim",
            "hidden",
            "semantic_channels",
            "max_steps",
        ):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.observer_mode not in OBSERVER_MODES:
            raise ValueError(f"observer_mode must be one of {OBSERVER_MODES}")
        if (self.enable_fi or self.enable_fp) and not self.enable_oe:
            raise ValueError("feature integration and prioritization require "
                             "observer encoding")

    @property
    def cells(self) -> int:
        return self.height * self.width

    @property
    def decoder_in_dim(self) -> int:
        extra = self.n_observers if self.uses_one_hot else 0
        return self.hidden + extra

    @property
    def uses_embedding(self) -> bool:
        return self.enable_oe and self.observer_mode == "embedding"

    @property
    def uses_one_hot(self) -> bool:
        return self.enable_oe and self.observer_mode == "one_hot_concat"


@dataclass
class DecoderState:
    """LSTM carry plus the step counter guarding against overruns."""

    hidden: Tensor
    cell: Tensor
    t: int = 0


def grid_cell(x: float, y: float, height: int, width: int) -> int:
    """Row-major cell index for a normalized fixation position."""
    col = min(int(x * width), width - 1)
    row = min(int(y * height), height - 1)
    return row * width + col


def cell_center(index: int, height: int, width: int) -> tuple[float, float]:
    row, col = divmod(int(index), width)
    return (col + 0.5) / width, (row + 0.5) / height


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Fresh trainable parameter set.

    Weight matrices use scale 1/sqrt(fan_in); the observer embedding W_u uses
    unit scale so freshly initialized observers are already well separated,
    and the attention bank W_a is widened by sqrt(semantic_channels) to keep
    the mixed priority logits at the same scale as the single-map head.
    Biases start at zero except the LSTM forget gate (1.0) and the duration
    mean (log 300 ms).
    """
    rng = np.random.default_rng([int(seed), 7])
    c = config.channels
    d = config.observer_dim
    h = config.hidden
    hw = config.cells
    ell = config.semantic_channels

    def mat(shape, fan_in):
        data = rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape)
        return Tensor(data, trainable=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), trainable=True)

    params = {
        "W_u": Tensor(rng.normal(0.0, 1.0, (d, config.n_observers)),
                      trainable=True),
        "W_eu": mat((h, c), c),
        "W_mu": mat((h, d), d),
        "w_eu": mat((h,), h),
        "m0_logits": zeros(hw),
        "W_hs": mat((hw, hw), hw),
        "b_hs": zeros(hw),
        "W_us": mat((hw, d), d),
        "W_hc": mat((h, 2 * c), 2 * c),
        "b_hc": zeros(h),
        "W_uc": mat((h, d), d),
        "W_fi": mat((c, h), c),
        "b_fi": zeros(h),
        "W_ih": mat((4 * h, config.decoder_in_dim), config.decoder_in_dim),
        "W_hh": mat((4 * h, h), h),
        "b_lstm": zeros(4 * h),
        # the priority head mixes the ell attention maps convexly, which
        # shrinks logit variance by ell under a near-uniform mixture; the
        # sqrt(ell) factor restores parity with the single-map head W_fp
        "W_a": Tensor(rng.normal(0.0, np.sqrt(ell / h), (ell * hw, h)),
                      trainable=True),
        "b_a": zeros(ell * hw),
        "W_b": mat((h, c), c),
        "W_um": mat((h, d), d),
        "w_b": mat((h,), h),
        "W_fp": mat((hw, h), h),
        "b_fp": zeros(hw),
        "W_dur": mat((2, h), h),
        "b_dur": Tensor(np.array([np.log(300.0), 0.0]), trainable=True),
    }
    params["b_lstm"].data[h:2 * h] = 1.0
    return params


class ScanpathModel:
    """Parameter set bound to a configuration.

    Instances are read-only during inference, so concurrent rollouts are
    safe; training mutates the parameters and must stay single-threaded
    per instance.
    """

    def __init__(self, config: ModelConfig, seed: int = 0,
                 params: dict[str, Tensor] | None = None):
        self.config = config
        self.params = init_params(config, seed) if params is None else params

    # -- observer pathway ------------------------------------------------

    def one_hot(self, observer_id: int) -> np.ndarray:
        n = self.config.n_observers
        if not 0 <= int(observer_id) < n:
            raise IndexError(
                f"observer id {observer_id} out of range for {n} observers")
        vec = np.zeros(n)
        vec[int(observer_id)] = 1.0
        return vec

    def encode_observer(self, observer_id: int) -> Tensor:
        """Observer code u = W_u @ one_hot; zero vector when OE is off."""
        one_hot = self.one_hot(observer_id)
        if not self.config.uses_embedding:
            return Tensor(np.zeros(self.config.observer_dim))
        return self.params["W_u"] @ Tensor(one_hot)

    def _code(self, observer_id: int) -> Tensor | None:
        """Embedding for internal use; None when the pathway is off."""
        if not self.config.uses_embedding:
            self.one_hot(observer_id)
            return None
        return self.encode_observer(observer_id)

    # -- forward pieces --------------------------------------------------

    def features(self, E: np.ndarray) -> Tensor:
        """Constant (HW, C) view of a (C, H, W) feature stack."""
        cfg = self.config
        if E.shape != (cfg.channels, cfg.height, cfg.width):
            raise ValueError(
                f"feature stack shape {E.shape} does not match config "
                f"({cfg.channels}, {cfg.height}, {cfg.width})")
        return Tensor(np.ascontiguousarray(E.reshape(cfg.channels, -1).T))

    def observer_guidance(self, E_flat: Tensor, u: Tensor | None) -> Tensor:
        """Length-HW probability map of observer-salient locations."""
        scores = E_flat @ transpose(self.params["W_eu"])
        if u is not None:
            scores = scores + self.params["W_mu"] @ u
        return softmax(tanh(scores) @ self.params["w_eu"])

    def fixated_features(self, E_flat: Tensor, m_prev: Tensor) -> Tensor:
        """Features gated by a spatial map: each row of E scaled by m."""
        return E_flat * reshape(m_prev, (self.config.cells, 1))

    def integrate_features(self, X_t: Tensor, X_u: Tensor | None,
                           u: Tensor | None) -> Tensor:
        """(HW, h) fused map R_t.

        FI on: spatial and channel fusion vectors from the concatenated
        stacks, each shifted by a projection of u, combined by outer
        product. FI off: per-location linear projection of X_t alone.
        """
        p = self.params
        if not self.config.enable_fi:
            return X_t @ p["W_fi"] + p["b_fi"]
        X_ut = concat([X_t, X_u], axis=1)
        u_s = relu(p["W_hs"] @ mean(X_ut, axis=1) + p["b_hs"])
        u_c = relu(p["W_hc"] @ mean(X_ut, axis=0) + p["b_hc"])
        if u is not None:
            u_s = u_s + p["W_us"] @ u
            u_c = u_c + p["W_uc"] @ u
        return outer(u_s, u_c)

    def initial_state(self) -> DecoderState:
        h = self.config.hidden
        return DecoderState(Tensor(np.zeros(h)), Tensor(np.zeros(h)), 0)

    def decoder_step(self, R_t: Tensor, state: DecoderState,
                     observer_id: int) -> tuple[DecoderState, Tensor]:
        """One LSTM step over pooled R_t; returns new state and (L, HW) maps."""
        cfg = self.config
        if state.t >= cfg.max_steps:
            raise ValueError(
                f"decoder step {state.t} would exceed max_steps "
                f"{cfg.max_steps}")
        p = self.params
        x = mean(R_t, axis=0)
        if cfg.uses_one_hot:
            x = concat([x, Tensor(self.one_hot(observer_id))], axis=0)
        z = p["W_ih"] @ x + p["W_hh"] @ state.hidden + p["b_lstm"]
        h = cfg.hidden
        gate_i = sigmoid(narrow(z, 0, 0, h))
        gate_f = sigmoid(narrow(z, 0, h, h))
        gate_g = tanh(narrow(z, 0, 2 * h, h))
        gate_o = sigmoid(narrow(z, 0, 3 * h, h))
        cell = gate_f * state.cell + gate_i * gate_g
        hidden = gate_o * tanh(cell)
        A_t = reshape(p["W_a"] @ hidden + p["b_a"],
                      (cfg.semantic_channels, cfg.cells))
        return DecoderState(hidden, cell, state.t + 1), A_t

    def prioritize_fixation(self, E_flat: Tensor, A_t: Tensor,
                            u: Tensor | None, hidden: Tensor
                            ) -> tuple[Tensor, Tensor, Tensor]:
        """Next-fixation map m_t with the map weights and descriptors.

        FP on: per-map descriptors V[l] = mean over space of E gated by
        A_t[l], softmax weights beta over maps, spatial softmax of the
        weighted combination. FP off: spatial softmax of a hidden-state
        projection; beta degenerates to a point mass and V to zeros.
        """
        cfg = self.config
        p = self.params
        if not cfg.enable_fp:
            m = softmax(p["W_fp"] @ hidden + p["b_fp"])
            beta = Tensor(np.ones(1))
            V = Tensor(np.zeros((1, cfg.channels)))
            return m, beta, V
        V = (A_t @ E_flat) * (1.0 / cfg.cells)
        scores = V @ transpose(p["W_b"])
        if u is not None:
            scores = scores + p["W_um"] @ u
        beta = softmax(tanh(scores) @ p["w_b"])
        m = softmax(beta @ A_t)
        return m, beta, V

    def duration_head(self, state: DecoderState) -> tuple[Tensor, Tensor]:
        """Gaussian parameters (mu, var) for the log duration in ms."""
        v = self.params["W_dur"] @ state.hidden + self.params["b_dur"]
        return pick(v, 0), softplus(pick(v, 1)) + VAR_FLOOR

    def initial_map(self) -> Tensor:
        return softmax(self.params["m0_logits"])

    # -- rollouts --------------------------------------------------------

    def rollout_teacher_forced(self, E: np.ndarray, observer_id: int,
                               gt: Scanpath) -> list[tuple[Tensor, Tensor, Tensor]]:
        """Per-step (m_t, mu_t, var_t) with ground-truth feedback.

        Step t sees the one-hot map of the ground-truth fixation t-1 (the
        learned initial map at t=0), so the outputs at step t depend only
        on fixations before t.
        """
        cfg = self.config
        if len(gt) > cfg.max_steps:
            raise ValueError(
                f"ground truth length {len(gt)} exceeds max_steps "
                f"{cfg.max_steps}")
        gt.validate()
        u = self._code(observer_id)
        E_flat = self.features(E)
        m_u = (self.observer_guidance(E_flat, u)
               if cfg.enable_fi else None)
        state = self.initial_state()
        m_prev = self.initial_map()
        steps = []
        for fix in gt.fixations:
            X_t = self.fixated_features(E_flat, m_prev)
            X_u = (self.fixated_features(E_flat, m_u)
                   if cfg.enable_fi else None)
            R_t = self.integrate_features(X_t, X_u, u)
            state, A_t = self.decoder_step(R_t, state, observer_id)
            m_t, _, _ = self.prioritize_fixation(E_flat, A_t, u, state.hidden)
            mu_t, var_t = self.duration_head(state)
            steps.append((m_t, mu_t, var_t))
            forced = np.zeros(cfg.cells)
            forced[grid_cell(fix.x, fix.y, cfg.height, cfg.width)] = 1.0
            m_prev = Tensor(forced)
        return steps

    def sample_scanpath(self, E: np.ndarray, observer_id: int,
                        n_steps: int | None = None, mode: str = "argmax",
                        seed=0, image_id: int = -1) -> Scanpath:
        """Free-running rollout feeding back its own soft maps.

        ``argmax`` picks the modal cell and the median duration exp(mu);
        ``sample`` draws the cell from m_t and the duration log-normally,
        both from the given seed. Durations are clamped to [50, 5000] ms.
        """
        cfg = self.config
        steps = cfg.max_steps if n_steps is None else int(n_steps)
        if not 1 <= steps <= cfg.max_steps:
            raise ValueError(
                f"n_steps {steps} outside [1, {cfg.max_steps}]")
        if mode not in ("argmax", "sample"):
            raise ValueError("mode must be 'argmax' or 'sample'")
        rng = np.random.default_rng(seed)
        u = self._code(observer_id)
        E_flat = self.features(E)
        m_u = (self.observer_guidance(E_flat, u)
               if cfg.enable_fi else None)
        state = self.initial_state()
        m_prev = self.initial_map()
        fixations = []
        for _ in range(steps):
            X_t = self.fixated_features(E_flat, m_prev)
            X_u = (self.fixated_features(E_flat, m_u)
                   if cfg.enable_fi else None)
            R_t = self.integrate_features(X_t, X_u, u)
            state, A_t = self.decoder_step(R_t, state, observer_id)
            m_t, _, _ = self.prioritize_fixation(E_flat, A_t, u, state.hidden)
            mu_t, var_t = self.duration_head(state)
            prob = m_t.data
            if mode == "argmax":
                cell = int(np.argmax(prob))
                log_dur = float(mu_t.data)
            else:
                cell = int(rng.choice(prob.size, p=prob / prob.sum()))
                log_dur = float(rng.normal(mu_t.data,
                                           np.sqrt(var_t.data)))
            dur = float(np.clip(np.exp(log_dur), *DUR_CLAMP_MS))
            x, y = cell_center(cell, cfg.height, cfg.width)
            fixations.append(Fixation(x, y, dur))
            m_prev = m_t
        return Scanpath(image_id=image_id, observer_id=int(observer_id),
                        fixations=tuple(fixations))


def ablation_config(base: ModelConfig, variant: str) -> ModelConfig:
    """Config for one row of the incremental ablation table."""
    table = {
        "none": dict(enable_oe=False, enable_fi=False, enable_fp=False),
        "OE": dict(enable_oe=True, enable_fi=False, enable_fp=False),
        "OE+FI": dict(enable_oe=True, enable_fi=True, enable_fp=False),
        "OE+FP": dict(enable_oe=True, enable_fi=False, enable_fp=True),
        "OE+FI+FP": dict(enable_oe=True, enable_fi=True, enable_fp=True),
        "one_hot": dict(enable_oe=True, enable_fi=False, enable_fp=False,
                        observer_mode="one_hot_concat"),
    }
    if variant not in table:
        raise ValueError(f"unknown variant {variant!r}; "
                         f"choose from {sorted(table)}")
    changes = dict(observer_mode="embedding")
    changes.update(table[variant])
    return replace(base, **changes)


ABLATION_VARIANTS = ("none", "OE", "OE+FI", "OE+FP", "OE+FI+FP", "one_hot")
