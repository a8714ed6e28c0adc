"""Tests for the meta-learning loop.

Oracles: a quadratic toy problem with a closed-form meta-gradient
(I - lr*A) (C p' + d), finite differences of the full meta-objective on a
tiny LSTM, and the definitional identities at inner_steps = 0.
"""

import math

import numpy as np
import pytest

from metasyl import autodiff as ad
from metasyl.autodiff import ParameterVector
from metasyl.langspace import make_dataset, sample_language
from metasyl.metalearn import (
    Episode,
    MetaState,
    _batch_for_step,
    holdout_accuracy,
    inner_adapt,
    k_shot_eval,
    meta_gradient,
    meta_step,
    meta_train,
    prepare_episode,
)
from metasyl.seq2seq import (
    AdamState,
    ModelConfig,
    adam_step,
    exact_match_accuracy,
    init_params,
    loss_and_grads,
    teacher_forced_loss,
)


def tiny_config(**kw) -> ModelConfig:
    defaults = dict(embed_dim=4, hidden_dim=8, max_decode_len=12)
    defaults.update(kw)
    return ModelConfig(**defaults)


def tiny_dataset(seed: int, n_train: int = 8, n_test: int = 4):
    rng = np.random.default_rng(seed)
    lang = sample_language(rng)
    return make_dataset(lang, rng, n_train=n_train, n_test=n_test, max_len=2)


def quadratic(A: np.ndarray, b: np.ndarray):
    """blocks -> 0.5 p A p^T + p . b for the (1, n) row vector block p."""

    def fn(blocks):
        p = blocks["p"]
        return ad.add(
            ad.mul(0.5, ad.sum_all(ad.mul(ad.matmul(p, A), p))),
            ad.sum_all(ad.mul(p, b)),
        )

    return fn


def sym(seed: int, n: int) -> np.ndarray:
    m = np.random.default_rng(seed).standard_normal((n, n))
    return (m + m.T) / 2 + n * np.eye(n)


class TestBatching:
    def test_full_batch_when_it_fits(self):
        pairs = ["a", "b", "c"]
        assert _batch_for_step(pairs, 100, 0) == pairs
        assert _batch_for_step(pairs, 3, 5) == pairs

    def test_wraparound_slices(self):
        pairs = ["a", "b", "c"]
        assert _batch_for_step(pairs, 2, 0) == ["a", "b"]
        assert _batch_for_step(pairs, 2, 1) == ["c", "a"]
        assert _batch_for_step(pairs, 2, 2) == ["b", "c"]


class TestInnerAdapt:
    def test_zero_steps_identity(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(0))
        ds = tiny_dataset(1)
        assert inner_adapt(params, ds.train, config, steps=0).equal(params)

    def test_one_step_is_gradient_step(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(2))
        ds = tiny_dataset(3)
        _, grads = loss_and_grads(list(ds.train), params, config)
        expected = params.sub(grads.scale(1.0))
        assert inner_adapt(params, ds.train, config, steps=1).equal(expected)

    def test_deterministic_and_nonmutating(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(4))
        before = params.map(np.array)
        ds = tiny_dataset(5)
        a = inner_adapt(params, ds.train, config, steps=2, lr=0.1)
        b = inner_adapt(params, ds.train, config, steps=2, lr=0.1)
        assert a.equal(b)
        assert params.equal(before)

    def test_empty_train_rejected(self):
        config = tiny_config()
        with pytest.raises(ValueError, match="nonempty"):
            inner_adapt(init_params(config, np.random.default_rng(6)), [], config)


class TestMetaGradient:
    def test_exact_matches_closed_form_one_step(self):
        n, alpha = 5, 0.07
        A, C = sym(10, n), sym(11, n)
        rng = np.random.default_rng(12)
        b, d = rng.standard_normal((1, n)), rng.standard_normal((1, n))
        p = rng.standard_normal((1, n))
        params = ParameterVector({"p": p})

        loss, grads = meta_gradient(
            params, [quadratic(A, b)], quadratic(C, d), inner_lr=alpha, order="exact"
        )
        p1 = p - alpha * (p @ A + b)
        expected = (p1 @ C + d) @ (np.eye(n) - alpha * A)
        expected_loss = float((0.5 * p1 @ C @ p1.T + p1 @ d.T).item())
        assert loss == pytest.approx(expected_loss, rel=1e-12)
        assert np.max(np.abs(grads["p"] - expected)) < 1e-8 * np.max(np.abs(expected))

    def test_exact_matches_closed_form_two_steps(self):
        n, alpha = 4, 0.05
        A, C = sym(13, n), sym(14, n)
        rng = np.random.default_rng(15)
        b, d = rng.standard_normal((1, n)), rng.standard_normal((1, n))
        p = rng.standard_normal((1, n))
        params = ParameterVector({"p": p})

        _, grads = meta_gradient(
            params, [quadratic(A, b)] * 2, quadratic(C, d), inner_lr=alpha, order="exact"
        )
        step = np.eye(n) - alpha * A
        p1 = p - alpha * (p @ A + b)
        p2 = p1 - alpha * (p1 @ A + b)
        expected = (p2 @ C + d) @ step @ step
        assert np.max(np.abs(grads["p"] - expected)) < 1e-8 * np.max(np.abs(expected))

    def test_first_order_is_gradient_at_adapted(self):
        n, alpha = 5, 0.07
        A, C = sym(16, n), sym(17, n)
        rng = np.random.default_rng(18)
        b, d = rng.standard_normal((1, n)), rng.standard_normal((1, n))
        p = rng.standard_normal((1, n))
        params = ParameterVector({"p": p})

        _, grads = meta_gradient(
            params, [quadratic(A, b)], quadratic(C, d), inner_lr=alpha, order="first"
        )
        p1 = p - alpha * (p @ A + b)
        np.testing.assert_allclose(grads["p"], p1 @ C + d, rtol=1e-12)

    def test_orders_coincide_at_zero_steps(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(19))
        ds = tiny_dataset(20)
        test_fn = lambda blocks: teacher_forced_loss(list(ds.test), blocks, config)
        loss_f, g_f = meta_gradient(params, [], test_fn, order="first")
        loss_e, g_e = meta_gradient(params, [], test_fn, order="exact")
        assert loss_f == loss_e
        for name, block in g_f:
            assert np.max(np.abs(block - g_e[name])) < 1e-12

    def test_unknown_order_rejected(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(21))
        with pytest.raises(ValueError, match="order"):
            meta_gradient(params, [], lambda blocks: None, order="second")

    def test_exact_matches_finite_differences_on_lstm(self):
        # Full meta-objective J(p) = L_test(p - lr * grad L_train(p)) on a
        # tiny model, differentiated two ways.
        config = ModelConfig(embed_dim=2, hidden_dim=3, max_decode_len=10)
        params = init_params(config, np.random.default_rng(22))
        rng = np.random.default_rng(23)
        lang = sample_language(rng)
        ds = make_dataset(lang, rng, n_train=2, n_test=2, max_len=2)
        train, test = list(ds.train), list(ds.test)
        lr = 0.5

        _, grads = meta_gradient(
            params,
            [lambda blocks: teacher_forced_loss(train, blocks, config)],
            lambda blocks: teacher_forced_loss(test, blocks, config),
            inner_lr=lr, order="exact",
        )

        def objective(pv: ParameterVector) -> float:
            adapted = inner_adapt(pv, train, config, lr=lr, steps=1)
            return float(ad.value_of(teacher_forced_loss(test, adapted, config)))

        flat, g = params.flatten(), grads.flatten()
        fd = np.zeros_like(flat)
        h = 1e-5
        for i in range(flat.size):
            up, down = flat.copy(), flat.copy()
            up[i] += h
            down[i] -= h
            fd[i] = (objective(params.unflatten(up))
                     - objective(params.unflatten(down))) / (2 * h)
        rel = np.max(np.abs(g - fd) / (1e-6 + np.abs(g) + np.abs(fd)))
        assert rel < 1e-3


class TestMetaStep:
    def test_zero_meta_lr_leaves_m0_bit_identical(self):
        config = tiny_config()
        m0 = init_params(config, np.random.default_rng(24))
        state = MetaState(m0=m0, outer_opt=AdamState.init(m0, lr=0.0))
        episode = prepare_episode(m0, tiny_dataset(25), config)
        stepped = meta_step(state, episode, config)
        assert stepped.m0.equal(m0)
        assert stepped.languages_seen == 1

    def test_prepared_and_lazy_episodes_agree(self):
        config = tiny_config()
        m0 = init_params(config, np.random.default_rng(26))
        ds = tiny_dataset(27)
        state = MetaState(m0=m0, outer_opt=AdamState.init(m0, lr=0.01))
        a = meta_step(state, prepare_episode(m0, ds, config), config)
        b = meta_step(state, Episode(dataset=ds), config)
        assert a.m0.equal(b.m0)

    def test_exact_equals_first_order_at_zero_inner_steps(self):
        config = tiny_config()
        m0 = init_params(config, np.random.default_rng(28))
        ds = tiny_dataset(29)
        state = MetaState(m0=m0, outer_opt=AdamState.init(m0, lr=0.01))
        first = meta_step(state, prepare_episode(m0, ds, config, inner_steps=0),
                          config, order="first")
        exact = meta_step(state, Episode(dataset=ds, inner_steps=0), config,
                          order="exact")
        for name, block in first.m0:
            assert np.max(np.abs(block - exact.m0[name])) < 1e-12

    def test_exact_step_changes_m0(self):
        config = tiny_config()
        m0 = init_params(config, np.random.default_rng(30))
        state = MetaState(m0=m0, outer_opt=AdamState.init(m0, lr=0.01))
        stepped = meta_step(state, Episode(dataset=tiny_dataset(31)), config,
                            order="exact")
        assert not stepped.m0.equal(m0)


class TestKShotEval:
    def test_never_mutates_params(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(32))
        before = params.map(np.array)
        k_shot_eval(params, tiny_dataset(33), config, k=4)
        assert params.equal(before)

    def test_k_zero_evaluates_raw_init(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(34))
        ds = tiny_dataset(35)
        raw = exact_match_accuracy(list(ds.test), params, config)
        assert k_shot_eval(params, ds, config, k=0) == raw

    def test_k_beyond_train_rejected(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(36))
        ds = tiny_dataset(37)
        with pytest.raises(ValueError, match="exceeds"):
            k_shot_eval(params, ds, config, k=len(ds.train) + 1)

    def test_overfit_model_scores_one(self):
        # Overfit on train+test jointly; the k-shot inner step at a
        # near-zero-loss optimum barely moves, so accuracy stays 1.0.
        config = ModelConfig(embed_dim=6, hidden_dim=16)
        ds = tiny_dataset(38, n_train=4, n_test=3)
        pairs = list(ds.train) + list(ds.test)
        params = init_params(config, np.random.default_rng(39))
        state = AdamState.init(params, lr=0.01)
        for _ in range(800):
            loss, grads = loss_and_grads(pairs, params, config)
            params, state = adam_step(params, grads, state)
            if loss < 5e-4:
                break
        assert loss < 5e-3
        assert k_shot_eval(params, ds, config, k=4) == 1.0

    def test_holdout_accuracy_is_mean(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(40))
        sets = [tiny_dataset(41), tiny_dataset(42)]
        scores = [k_shot_eval(params, ds, config, k=4) for ds in sets]
        assert holdout_accuracy(params, sets, config, k=4) == pytest.approx(
            float(np.mean(scores)))
        assert holdout_accuracy(params, [], config) == 0.0


class TestMetaTrain:
    def test_smoke_run_and_log(self, tmp_path):
        config = tiny_config()
        log = tmp_path / "train.csv"
        result = meta_train(
            config, np.random.default_rng(43),
            n_languages=4, n_holdout=2, eval_every=2, patience=10,
            n_train=6, n_test=3, max_len=2, eval_k=6, log_path=log,
        )
        assert [n for n, _ in result.history] == [2, 4]
        assert result.state.languages_seen == 4
        assert not result.stopped_early
        text = log.read_text()
        assert text.startswith("languages_seen,holdout_accuracy\n")
        assert text == result.log_csv()

    def test_same_seed_same_run(self, tmp_path):
        config = tiny_config()
        kw = dict(n_languages=4, n_holdout=2, eval_every=2, patience=10,
                  n_train=6, n_test=3, max_len=2, eval_k=6)
        a = meta_train(config, np.random.default_rng(44),
                       log_path=tmp_path / "a.csv", **kw)
        b = meta_train(config, np.random.default_rng(44),
                       log_path=tmp_path / "b.csv", **kw)
        assert a.history == b.history
        assert a.m0.equal(b.m0)
        assert a.state.m0.equal(b.state.m0)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_patience_stops_after_flat_scores(self):
        # With meta_lr = 0 the model and its holdout score never change, so
        # the first evaluation sets the best and every later one is a
        # strike; patience 2 stops at the third evaluation.
        config = tiny_config()
        result = meta_train(
            config, np.random.default_rng(45),
            n_languages=50, n_holdout=1, eval_every=1, patience=2,
            n_train=6, n_test=3, max_len=2, eval_k=6, meta_lr=0.0,
        )
        assert result.stopped_early
        assert result.state.languages_seen == 3

    def test_multiple_passes_revisit_the_pool(self):
        config = tiny_config()
        kw = dict(n_holdout=1, eval_every=2, patience=10,
                  n_train=6, n_test=3, max_len=2, eval_k=6)
        result = meta_train(config, np.random.default_rng(46),
                            n_languages=3, n_passes=3, **kw)
        assert result.state.languages_seen == 9
        assert [n for n, _ in result.history] == [2, 4, 6, 8]

    def test_warmup_episodes_run_with_zero_inner_steps(self):
        # While the warmup lasts, inner_steps is irrelevant: a warmup-only
        # run must reproduce an inner_steps=0 run exactly.
        config = tiny_config()
        kw = dict(n_languages=3, n_holdout=1, eval_every=1, patience=10,
                  n_train=6, n_test=3, max_len=2, eval_k=6,
                  eval_inner_steps=1)
        warm = meta_train(config, np.random.default_rng(47),
                          inner_steps=4, warmup_episodes=3, **kw)
        plain = meta_train(config, np.random.default_rng(47),
                           inner_steps=0, **kw)
        assert warm.history == plain.history
        assert warm.state.m0.equal(plain.state.m0)

    def test_warmup_then_adaptation_diverges_from_plain(self):
        config = tiny_config()
        kw = dict(n_languages=4, n_holdout=1, eval_every=4, patience=10,
                  n_train=6, n_test=3, max_len=2, eval_k=6,
                  eval_inner_steps=1)
        warm = meta_train(config, np.random.default_rng(48),
                          inner_steps=2, warmup_episodes=2, **kw)
        plain = meta_train(config, np.random.default_rng(48),
                           inner_steps=0, **kw)
        assert not warm.state.m0.equal(plain.state.m0)
