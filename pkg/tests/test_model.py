"""Model tests: pathway math, toggles, rollouts, and gradient flow."""

import numpy as np
import pytest

from gazelab.model import (
    ABLATION_VARIANTS,
    DecoderState,
    ModelConfig,
    ScanpathModel,
    ablation_config,
    cell_center,
    grid_cell,
    init_params,
)
from gazelab.scanpath import Fixation, Scanpath
from gazelab.tensor import Tape, Tensor, grad_check
from gazelab.train import duration_loss, rollout_loss
from support import naive_matmul, reference_rollout


def tiny_config(**overrides):
    base = dict(n_observers=3, height=2, width=2, channels=2, observer_dim=3,
                hidden=4, semantic_channels=2, max_steps=4)
    base.update(overrides)
    return ModelConfig(**base)


def random_E(config, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 1.0,
                       (config.channels, config.height, config.width))


def path_at_cells(cells, config, dur=200.0, image_id=0, observer_id=0):
    fixes = []
    for cell in cells:
        x, y = cell_center(cell, config.height, config.width)
        fixes.append(Fixation(x, y, dur))
    return Scanpath(image_id=image_id, observer_id=observer_id,
                    fixations=tuple(fixes))


class TestConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert (cfg.height, cfg.width, cfg.channels) == (16, 16, 12)
        assert (cfg.observer_dim, cfg.hidden) == (16, 64)
        assert (cfg.semantic_channels, cfg.max_steps) == (4, 8)

    def test_rejects_bad_extents(self):
        with pytest.raises(ValueError, match="hidden"):
            tiny_config(hidden=0)

    def test_fi_requires_oe(self):
        with pytest.raises(ValueError, match="require"):
            tiny_config(enable_oe=False, enable_fi=True)
        with pytest.raises(ValueError, match="require"):
            tiny_config(enable_oe=False, enable_fp=True)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError, match="observer_mode"):
            tiny_config(observer_mode="giant_lookup_table")

    def test_ablation_table(self):
        base = tiny_config()
        assert len(ABLATION_VARIANTS) == 6
        full = ablation_config(base, "OE+FI+FP")
        assert full.enable_oe and full.enable_fi and full.enable_fp
        none = ablation_config(base, "none")
        assert not (none.enable_oe or none.enable_fi or none.enable_fp)
        one_hot = ablation_config(base, "one_hot")
        assert one_hot.observer_mode == "one_hot_concat"
        assert not one_hot.enable_fi and not one_hot.enable_fp
        with pytest.raises(ValueError, match="unknown variant"):
            ablation_config(base, "everything")

    def test_decoder_input_widens_for_one_hot(self):
        cfg = tiny_config(observer_mode="one_hot_concat")
        assert cfg.decoder_in_dim == cfg.hidden + cfg.n_observers
        params = init_params(cfg)
        assert params["W_ih"].data.shape == (4 * cfg.hidden,
                                             cfg.hidden + cfg.n_observers)


class TestObserverEncoding:
    def test_identity_embedding_selects_basis(self):
        cfg = tiny_config(observer_dim=3, n_observers=3)
        model = ScanpathModel(cfg)
        model.params["W_u"].data[:] = np.eye(3)
        u = model.encode_observer(2)
        np.testing.assert_array_equal(u.data, [0.0, 0.0, 1.0])

    def test_one_hot_selects_column(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=3)
        for i in range(cfg.n_observers):
            u = model.encode_observer(i)
            np.testing.assert_array_equal(u.data,
                                          model.params["W_u"].data[:, i])

    def test_matches_naive_matmul(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=5)
        for i in range(cfg.n_observers):
            one_hot = model.one_hot(i)
            expect = naive_matmul(model.params["W_u"].data, one_hot)
            assert np.max(np.abs(model.encode_observer(i).data -
                                 expect)) < 1e-12

    def test_out_of_range_rejected(self):
        model = ScanpathModel(tiny_config())
        with pytest.raises(IndexError, match="out of range"):
            model.encode_observer(3)
        with pytest.raises(IndexError, match="out of range"):
            model.encode_observer(-1)

    def test_disabled_returns_zero_vector(self):
        cfg = tiny_config(enable_oe=False, enable_fi=False, enable_fp=False)
        model = ScanpathModel(cfg)
        np.testing.assert_array_equal(model.encode_observer(1).data,
                                      np.zeros(cfg.observer_dim))


class TestGuidance:
    def test_zero_readout_gives_uniform(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        model.params["w_eu"].data[:] = 0.0
        E_flat = model.features(random_E(cfg))
        m = model.observer_guidance(E_flat, model.encode_observer(0))
        np.testing.assert_allclose(m.data, np.full(cfg.cells, 1 / cfg.cells),
                                   atol=1e-12)

    def test_constant_features_give_uniform_for_any_observer(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=2)
        E = np.full((cfg.channels, cfg.height, cfg.width), 0.37)
        E_flat = model.features(E)
        for i in range(cfg.n_observers):
            m = model.observer_guidance(E_flat, model.encode_observer(i))
            np.testing.assert_allclose(
                m.data, np.full(cfg.cells, 1 / cfg.cells), atol=1e-12)

    def test_matches_per_location_loop(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=4)
        E = random_E(cfg, seed=4)
        E_flat = model.features(E)
        u = model.encode_observer(1)
        m = model.observer_guidance(E_flat, u)
        p = {k: v.data for k, v in model.params.items()}
        scores = np.zeros(cfg.cells)
        for loc in range(cfg.cells):
            pre = p["W_eu"] @ E_flat.data[loc] + p["W_mu"] @ u.data
            scores[loc] = p["w_eu"] @ np.tanh(pre)
        expect = np.exp(scores - scores.max())
        expect /= expect.sum()
        np.testing.assert_allclose(m.data, expect, atol=1e-12)


class TestFixatedFeatures:
    def test_one_hot_mask_keeps_single_row(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg)
        E = random_E(cfg, seed=6)
        E_flat = model.features(E)
        mask = np.zeros(cfg.cells)
        mask[2] = 1.0
        X = model.fixated_features(E_flat, Tensor(mask))
        np.testing.assert_array_equal(X.data[2], E_flat.data[2])
        for loc in (0, 1, 3):
            np.testing.assert_array_equal(X.data[loc], 0.0)

    def test_uniform_mask_scales_by_hw(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg)
        E_flat = model.features(random_E(cfg, seed=7))
        X = model.fixated_features(E_flat,
                                   Tensor(np.full(cfg.cells, 1 / cfg.cells)))
        np.testing.assert_allclose(X.data, E_flat.data / cfg.cells,
                                   atol=1e-15)

    def test_matches_elementwise_loop(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg)
        rng = np.random.default_rng(8)
        E_flat = model.features(random_E(cfg, seed=8))
        m = rng.dirichlet(np.ones(cfg.cells))
        X = model.fixated_features(E_flat, Tensor(m))
        for loc in range(cfg.cells):
            for ch in range(cfg.channels):
                assert X.data[loc, ch] == pytest.approx(
                    E_flat.data[loc, ch] * m[loc], abs=1e-15)

    def test_feature_grid_layout_is_row_major(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg)
        E = random_E(cfg, seed=9)
        E_flat = model.features(E)
        for row in range(cfg.height):
            for col in range(cfg.width):
                np.testing.assert_array_equal(
                    E_flat.data[row * cfg.width + col], E[:, row, col])

    def test_wrong_shape_rejected(self):
        model = ScanpathModel(tiny_config())
        with pytest.raises(ValueError, match="feature stack"):
            model.features(np.zeros((5, 2, 2)))


class TestIntegration:
    def test_all_zero_weights_annihilate(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        for name in ("W_hs", "b_hs", "W_hc", "b_hc", "W_us", "W_uc"):
            model.params[name].data[:] = 0.0
        E_flat = model.features(random_E(cfg))
        X = model.fixated_features(E_flat, model.initial_map())
        R = model.integrate_features(X, X, model.encode_observer(0))
        np.testing.assert_array_equal(R.data, np.zeros((cfg.cells,
                                                        cfg.hidden)))

    def test_basis_vectors_give_single_entry(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        model.params["W_hs"].data[:] = 0.0
        model.params["W_hc"].data[:] = 0.0
        model.params["W_us"].data[:] = 0.0
        model.params["W_uc"].data[:] = 0.0
        model.params["b_hs"].data[:] = 0.0
        model.params["b_hs"].data[1] = 1.0
        model.params["b_hc"].data[:] = 0.0
        model.params["b_hc"].data[2] = 1.0
        E_flat = model.features(random_E(cfg))
        X = model.fixated_features(E_flat, model.initial_map())
        R = model.integrate_features(X, X, model.encode_observer(0))
        expect = np.zeros((cfg.cells, cfg.hidden))
        expect[1, 2] = 1.0
        np.testing.assert_array_equal(R.data, expect)

    def test_matches_composed_loop_oracle(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=11)
        p = {k: v.data for k, v in model.params.items()}
        E_flat = model.features(random_E(cfg, seed=11))
        rng = np.random.default_rng(11)
        m_prev = rng.dirichlet(np.ones(cfg.cells))
        m_u = rng.dirichlet(np.ones(cfg.cells))
        u = model.encode_observer(2)
        X_t = model.fixated_features(E_flat, Tensor(m_prev))
        X_u = model.fixated_features(E_flat, Tensor(m_u))
        R = model.integrate_features(X_t, X_u, u)
        X = np.concatenate([E_flat.data * m_prev[:, None],
                            E_flat.data * m_u[:, None]], axis=1)
        u_s = np.maximum(p["W_hs"] @ X.mean(axis=1) + p["b_hs"], 0.0)
        u_s = u_s + p["W_us"] @ u.data
        u_c = np.maximum(p["W_hc"] @ X.mean(axis=0) + p["b_hc"], 0.0)
        u_c = u_c + p["W_uc"] @ u.data
        np.testing.assert_allclose(R.data, np.outer(u_s, u_c), atol=1e-12)

    def test_disabled_path_is_linear_projection(self):
        cfg = tiny_config(enable_fi=False)
        model = ScanpathModel(cfg, seed=12)
        E_flat = model.features(random_E(cfg, seed=12))
        X = model.fixated_features(E_flat, model.initial_map())
        R = model.integrate_features(X, None, model.encode_observer(0))
        expect = X.data @ model.params["W_fi"].data + \
            model.params["b_fi"].data
        np.testing.assert_allclose(R.data, expect, atol=1e-12)


class TestDecoder:
    def test_zero_network_emits_biases(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        for name in ("W_ih", "W_hh", "b_lstm", "W_a"):
            model.params[name].data[:] = 0.0
        model.params["b_a"].data[:] = np.arange(
            cfg.semantic_channels * cfg.cells, dtype=float)
        state = model.initial_state()
        R = Tensor(np.zeros((cfg.cells, cfg.hidden)))
        new_state, A = model.decoder_step(R, state, 0)
        np.testing.assert_array_equal(new_state.hidden.data,
                                      np.zeros(cfg.hidden))
        np.testing.assert_array_equal(
            A.data, np.arange(cfg.semantic_channels * cfg.cells,
                              dtype=float).reshape(cfg.semantic_channels,
                                                   cfg.cells))

    def test_scalar_lstm_closed_form(self):
        cfg = tiny_config(hidden=1, semantic_channels=1, height=1, width=1,
                          channels=1, observer_dim=1)
        model = ScanpathModel(cfg, seed=2)
        wi, wf, wg, wo = 0.3, -0.5, 0.8, 0.2
        model.params["W_ih"].data[:, 0] = [wi, wf, wg, wo]
        model.params["W_hh"].data[:] = 0.0
        model.params["b_lstm"].data[:] = [0.1, 0.2, 0.3, 0.4]
        r = 0.7
        state, _ = model.decoder_step(Tensor(np.array([[r]])),
                                      model.initial_state(), 0)

        def logistic(v):
            return 1.0 / (1.0 + np.exp(-v))

        gi = logistic(wi * r + 0.1)
        gg = np.tanh(wg * r + 0.3)
        go = logistic(wo * r + 0.4)
        cell = gi * gg
        np.testing.assert_allclose(state.cell.data, [cell], atol=1e-12)
        np.testing.assert_allclose(state.hidden.data,
                                   [go * np.tanh(cell)], atol=1e-12)

    def test_deterministic(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=3)
        R = Tensor(np.random.default_rng(3).normal(size=(cfg.cells,
                                                         cfg.hidden)))
        s1, a1 = model.decoder_step(R, model.initial_state(), 1)
        s2, a2 = model.decoder_step(R, model.initial_state(), 1)
        np.testing.assert_array_equal(s1.hidden.data, s2.hidden.data)
        np.testing.assert_array_equal(a1.data, a2.data)

    def test_step_overflow_rejected(self):
        cfg = tiny_config(max_steps=2)
        model = ScanpathModel(cfg)
        R = Tensor(np.zeros((cfg.cells, cfg.hidden)))
        state = model.initial_state()
        state, _ = model.decoder_step(R, state, 0)
        state, _ = model.decoder_step(R, state, 0)
        with pytest.raises(ValueError, match="max_steps"):
            model.decoder_step(R, state, 0)

    def test_one_hot_concat_conditions_decoder(self):
        cfg = tiny_config(observer_mode="one_hot_concat", enable_fi=False,
                          enable_fp=False)
        model = ScanpathModel(cfg, seed=4)
        R = Tensor(np.random.default_rng(4).normal(size=(cfg.cells,
                                                         cfg.hidden)))
        s0, _ = model.decoder_step(R, model.initial_state(), 0)
        s1, _ = model.decoder_step(R, model.initial_state(), 1)
        assert np.max(np.abs(s0.hidden.data - s1.hidden.data)) > 0.0


class TestPrioritization:
    def test_single_map_degenerates(self):
        cfg = tiny_config(semantic_channels=1)
        model = ScanpathModel(cfg, seed=5)
        E_flat = model.features(random_E(cfg, seed=5))
        A = Tensor(np.random.default_rng(5).normal(size=(1, cfg.cells)))
        hidden = Tensor(np.zeros(cfg.hidden))
        m, beta, _ = model.prioritize_fixation(E_flat, A,
                                               model.encode_observer(0),
                                               hidden)
        np.testing.assert_allclose(beta.data, [1.0], atol=1e-12)
        logits = A.data[0]
        expect = np.exp(logits - logits.max())
        expect /= expect.sum()
        np.testing.assert_allclose(m.data, expect, atol=1e-12)

    def test_identical_maps_make_weights_irrelevant(self):
        cfg = tiny_config(semantic_channels=3)
        model = ScanpathModel(cfg, seed=6)
        E_flat = model.features(random_E(cfg, seed=6))
        row = np.random.default_rng(6).normal(size=cfg.cells)
        A = Tensor(np.tile(row, (3, 1)))
        hidden = Tensor(np.zeros(cfg.hidden))
        maps = []
        for i in range(cfg.n_observers):
            m, _, _ = model.prioritize_fixation(E_flat, A,
                                                model.encode_observer(i),
                                                hidden)
            maps.append(m.data)
        expect = np.exp(row - row.max())
        expect /= expect.sum()
        for m in maps:
            np.testing.assert_allclose(m, expect, atol=1e-12)

    def test_two_map_scalar_trace(self):
        cfg = tiny_config(semantic_channels=2)
        model = ScanpathModel(cfg, seed=7)
        p = {k: v.data for k, v in model.params.items()}
        E_flat = model.features(random_E(cfg, seed=7))
        A = np.random.default_rng(7).normal(size=(2, cfg.cells))
        u = model.encode_observer(1)
        m, beta, V = model.prioritize_fixation(E_flat, Tensor(A), u,
                                               Tensor(np.zeros(cfg.hidden)))
        V_ref = np.zeros((2, cfg.channels))
        scores = np.zeros(2)
        for l in range(2):
            V_ref[l] = (E_flat.data * A[l][:, None]).mean(axis=0)
            scores[l] = p["w_b"] @ np.tanh(p["W_b"] @ V_ref[l] +
                                           p["W_um"] @ u.data)
        beta_ref = np.exp(scores - scores.max())
        beta_ref /= beta_ref.sum()
        combined = beta_ref[0] * A[0] + beta_ref[1] * A[1]
        m_ref = np.exp(combined - combined.max())
        m_ref /= m_ref.sum()
        np.testing.assert_allclose(V.data, V_ref, atol=1e-12)
        np.testing.assert_allclose(beta.data, beta_ref, atol=1e-12)
        np.testing.assert_allclose(m.data, m_ref, atol=1e-12)

    def test_disabled_path_projects_hidden_state(self):
        cfg = tiny_config(enable_fp=False)
        model = ScanpathModel(cfg, seed=8)
        E_flat = model.features(random_E(cfg, seed=8))
        hidden = Tensor(np.random.default_rng(8).normal(size=cfg.hidden))
        m, beta, _ = model.prioritize_fixation(E_flat, None,
                                               model.encode_observer(0),
                                               hidden)
        logits = model.params["W_fp"].data @ hidden.data + \
            model.params["b_fp"].data
        expect = np.exp(logits - logits.max())
        expect /= expect.sum()
        np.testing.assert_allclose(m.data, expect, atol=1e-12)
        np.testing.assert_array_equal(beta.data, [1.0])

    def test_logit_shift_invariance(self):
        # adding a constant to the combined pre-softmax scores leaves the
        # map unchanged; checked on real model logits
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=9)
        E_flat = model.features(random_E(cfg, seed=9))
        A = np.random.default_rng(9).normal(size=(cfg.semantic_channels,
                                                  cfg.cells))
        m, beta, _ = model.prioritize_fixation(E_flat, Tensor(A),
                                               model.encode_observer(0),
                                               Tensor(np.zeros(cfg.hidden)))
        combined = beta.data @ A
        shifted = combined + 123.456
        expect = np.exp(shifted - shifted.max())
        expect /= expect.sum()
        assert np.max(np.abs(m.data - expect)) < 1e-9


class TestDurationHead:
    def test_zero_weights_emit_biases(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        model.params["W_dur"].data[:] = 0.0
        model.params["b_dur"].data[:] = [1.5, -0.3]
        state = DecoderState(Tensor(np.ones(cfg.hidden)),
                             Tensor(np.zeros(cfg.hidden)), 0)
        mu, var = model.duration_head(state)
        assert float(mu.data) == pytest.approx(1.5, abs=1e-12)
        assert float(var.data) == pytest.approx(
            np.logaddexp(0.0, -0.3) + 1e-4, abs=1e-12)

    def test_variance_positive_across_draws(self):
        cfg = tiny_config()
        rng = np.random.default_rng(2)
        for trial in range(1000):
            model = ScanpathModel(cfg, seed=trial % 17)
            hidden = Tensor(rng.normal(scale=3.0, size=cfg.hidden))
            _, var = model.duration_head(
                DecoderState(hidden, Tensor(np.zeros(cfg.hidden)), 0))
            assert float(var.data) > 0.0

    def test_nll_gradient_matches_finite_differences(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=3)
        E = random_E(cfg, seed=3)
        gt = path_at_cells([0, 3, 1], cfg, dur=240.0)

        def f():
            steps = model.rollout_teacher_forced(E, 1, gt)
            return duration_loss([(mu, var) for _, mu, var in steps], gt)

        head = {"W_dur": model.params["W_dur"],
                "b_dur": model.params["b_dur"]}
        report = grad_check(f, head, eps=1e-5, tol=1e-4)
        assert report.passed, report.max_rel_err


class TestRollout:
    def test_single_fixation_gives_one_step(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        gt = path_at_cells([2], cfg)
        steps = model.rollout_teacher_forced(random_E(cfg), 0, gt)
        assert len(steps) == 1

    def test_causality(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=2)
        E = random_E(cfg, seed=2)
        gt_a = path_at_cells([0, 1, 2, 3], cfg)
        gt_b = path_at_cells([0, 1, 3, 0], cfg)
        steps_a = model.rollout_teacher_forced(E, 1, gt_a)
        steps_b = model.rollout_teacher_forced(E, 1, gt_b)
        for t in range(3):
            np.testing.assert_array_equal(steps_a[t][0].data,
                                          steps_b[t][0].data)
            np.testing.assert_array_equal(steps_a[t][1].data,
                                          steps_b[t][1].data)
        assert np.max(np.abs(steps_a[3][0].data - steps_b[3][0].data)) > 0.0

    @pytest.mark.parametrize("variant", ABLATION_VARIANTS)
    def test_full_trace_matches_reference(self, variant):
        cfg = ablation_config(tiny_config(hidden=3), variant)
        model = ScanpathModel(cfg, seed=13)
        E = random_E(cfg, seed=13)
        cells = [1, 3, 0, 2]
        gt = path_at_cells(cells, cfg, observer_id=1)
        steps = model.rollout_teacher_forced(E, 1, gt)
        ref = reference_rollout(
            {k: v.data for k, v in model.params.items()}, E, cells,
            model.one_hot(1), cfg.hidden, cfg.semantic_channels,
            enable_fi=cfg.enable_fi, enable_fp=cfg.enable_fp,
            use_u=cfg.uses_embedding, concat_onehot=cfg.uses_one_hot)
        for (m, mu, var), (m_ref, mu_ref, var_ref) in zip(steps, ref):
            np.testing.assert_allclose(m.data, m_ref, atol=1e-10)
            assert float(mu.data) == pytest.approx(mu_ref, abs=1e-10)
            assert float(var.data) == pytest.approx(var_ref, abs=1e-10)

    def test_out_of_bounds_ground_truth_rejected(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg)
        bad = Scanpath(image_id=0, observer_id=0,
                       fixations=(Fixation(1.5, 0.5, 100.0),))
        with pytest.raises(ValueError):
            model.rollout_teacher_forced(random_E(cfg), 0, bad)

    def test_too_long_ground_truth_rejected(self):
        cfg = tiny_config(max_steps=2)
        model = ScanpathModel(cfg)
        gt = path_at_cells([0, 1, 2], cfg)
        with pytest.raises(ValueError, match="max_steps"):
            model.rollout_teacher_forced(random_E(cfg), 0, gt)


class TestSampling:
    def test_argmax_deterministic(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=1)
        E = random_E(cfg, seed=1)
        a = model.sample_scanpath(E, 0, n_steps=4, mode="argmax", seed=0)
        b = model.sample_scanpath(E, 0, n_steps=4, mode="argmax", seed=99)
        assert a.fixations == b.fixations

    def test_sample_mode_seeded(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=2)
        E = random_E(cfg, seed=2)
        a = model.sample_scanpath(E, 1, n_steps=4, mode="sample", seed=7)
        b = model.sample_scanpath(E, 1, n_steps=4, mode="sample", seed=7)
        c = model.sample_scanpath(E, 1, n_steps=4, mode="sample", seed=8)
        assert a.fixations == b.fixations
        assert a.fixations != c.fixations

    def test_durations_clamped(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=3)
        model.params["b_dur"].data[0] = 20.0
        E = random_E(cfg, seed=3)
        sp = model.sample_scanpath(E, 0, n_steps=4, mode="argmax", seed=0)
        assert np.all(sp.durations() <= 5000.0)
        model.params["b_dur"].data[0] = -20.0
        sp = model.sample_scanpath(E, 0, n_steps=4, mode="sample", seed=0)
        assert np.all(sp.durations() >= 50.0)

    def test_invalid_mode_and_steps_rejected(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg)
        E = random_E(cfg)
        with pytest.raises(ValueError, match="mode"):
            model.sample_scanpath(E, 0, n_steps=2, mode="greedy", seed=0)
        with pytest.raises(ValueError, match="n_steps"):
            model.sample_scanpath(E, 0, n_steps=9, seed=0)

    def test_multinomial_frequencies_match_map(self):
        cfg = ablation_config(
            tiny_config(channels=1, hidden=2, semantic_channels=1,
                        observer_dim=1, n_observers=2, max_steps=1),
            "none")
        model = ScanpathModel(cfg, seed=4)
        E = random_E(cfg, seed=4)
        gt = path_at_cells([0], cfg)
        m = model.rollout_teacher_forced(E, 0, gt)[0][0].data
        n = 100_000
        counts = np.zeros(cfg.cells)
        for s in range(n):
            sp = model.sample_scanpath(E, 0, n_steps=1, mode="sample",
                                       seed=s)
            fix = sp.fixations[0]
            counts[grid_cell(fix.x, fix.y, cfg.height, cfg.width)] += 1
        freq = counts / n
        sigma = np.sqrt(m * (1.0 - m) / n)
        assert np.all(np.abs(freq - m) <= 3.0 * sigma + 1e-12)


class TestInvariants:
    @pytest.mark.parametrize("variant", ABLATION_VARIANTS)
    def test_emitted_maps_are_simplexes(self, variant):
        cfg = ablation_config(tiny_config(), variant)
        for seed in range(5):
            model = ScanpathModel(cfg, seed=seed)
            E = random_E(cfg, seed=seed)
            gt = path_at_cells([0, 2, 1], cfg)
            m0 = model.initial_map().data
            assert m0.min() >= 0 and abs(m0.sum() - 1) < 1e-6
            for m, _, var in model.rollout_teacher_forced(E, 0, gt):
                assert m.data.min() >= 0
                assert abs(m.data.sum() - 1) < 1e-6
                assert float(var.data) > 0

    def test_guided_map_separates_observers(self):
        cfg = tiny_config()
        model = ScanpathModel(cfg, seed=5)
        E_flat = model.features(random_E(cfg, seed=5))
        maps = [model.observer_guidance(E_flat,
                                        model.encode_observer(i)).data
                for i in range(cfg.n_observers)]
        assert np.max(np.abs(maps[0] - maps[1])) > 0.0

    def test_agnostic_predictions_identical_across_observers(self):
        cfg = ablation_config(tiny_config(), "none")
        model = ScanpathModel(cfg, seed=6)
        E = random_E(cfg, seed=6)
        paths = [model.sample_scanpath(E, i, n_steps=3, mode="argmax",
                                       seed=0)
                 for i in range(cfg.n_observers)]
        assert paths[0].fixations == paths[1].fixations == paths[2].fixations

    def test_full_model_gradient_check(self):
        cfg = ModelConfig(n_observers=2, height=4, width=4, channels=3,
                          observer_dim=3, hidden=4, semantic_channels=2,
                          max_steps=3)
        model = ScanpathModel(cfg, seed=0)
        E = np.random.default_rng(0).uniform(0.1, 1.0, (3, 4, 4))
        gt = path_at_cells([5, 10, 3], cfg, observer_id=1)

        def f():
            total, _, _ = rollout_loss(model, E, 1, gt, 0.1)
            return total

        report = grad_check(f, model.params, eps=1e-5, tol=1e-4)
        assert report.passed, report.max_rel_err

    EXPECTED_REACHABLE = {
        "none": {"m0_logits", "W_fi", "b_fi", "W_ih", "W_hh", "b_lstm",
                 "W_fp", "b_fp", "W_dur", "b_dur"},
        "OE": {"m0_logits", "W_fi", "b_fi", "W_ih", "W_hh", "b_lstm",
               "W_fp", "b_fp", "W_dur", "b_dur"},
        "OE+FI": {"m0_logits", "W_u", "W_eu", "W_mu", "w_eu", "W_hs",
                  "b_hs", "W_us", "W_hc", "b_hc", "W_uc", "W_ih", "W_hh",
                  "b_lstm", "W_fp", "b_fp", "W_dur", "b_dur"},
        "OE+FP": {"m0_logits", "W_u", "W_fi", "b_fi", "W_ih", "W_hh",
                  "b_lstm", "W_a", "b_a", "W_b", "W_um", "w_b", "W_dur",
                  "b_dur"},
        "OE+FI+FP": {"m0_logits", "W_u", "W_eu", "W_mu", "w_eu", "W_hs",
                     "b_hs", "W_us", "W_hc", "b_hc", "W_uc", "W_ih",
                     "W_hh", "b_lstm", "W_a", "b_a", "W_b", "W_um",
                     "w_b", "W_dur", "b_dur"},
        "one_hot": {"m0_logits", "W_fi", "b_fi", "W_ih", "W_hh", "b_lstm",
                    "W_fp", "b_fp", "W_dur", "b_dur"},
    }

    @pytest.mark.parametrize("variant", ABLATION_VARIANTS)
    def test_parameter_reachability(self, variant):
        cfg = ablation_config(tiny_config(), variant)
        model = ScanpathModel(cfg, seed=7)
        E = random_E(cfg, seed=7)
        gt = path_at_cells([0, 3, 2], cfg, observer_id=2)
        with Tape() as tape:
            total, _, _ = rollout_loss(model, E, 2, gt, 0.1)
        grads = tape.gradients(total)
        names = {name for name, p in model.params.items()
                 if p in grads}
        assert names == self.EXPECTED_REACHABLE[variant]
