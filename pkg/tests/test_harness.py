"""Tests for the analysis harness, aggregation, reporting, and config."""

import dataclasses

import numpy as np
import pytest

from metasyl.config import (
    EaseSettings,
    EvalSettings,
    ExperimentConfig,
    MetaSettings,
    PosSettings,
    load_config,
    save_config,
)
from metasyl.harness import (
    LanguageResult,
    _pos_datasets,
    consistency_analysis,
    constraint_set_analysis,
    correct_constraints,
    cset_label,
    ease_of_learning,
    eval_100shot,
    pos_analysis,
    summarize,
    train_to_convergence,
)
from metasyl.langspace import sample_language, template_of
from metasyl.phonology import ALL_SETS, CANONICAL_SET
from metasyl.reporting import (
    read_results,
    render_figures,
    write_report,
    write_results,
)
from metasyl.seq2seq import ModelConfig, init_params


def tiny_config() -> ModelConfig:
    return ModelConfig(embed_dim=4, hidden_dim=8, max_decode_len=12)


def tiny_ease(**kw) -> EaseSettings:
    defaults = dict(n_languages=1, cap=200, step=100, n_test=5, max_len=2,
                    plateau_tol=1e-4, plateau_window=3, epoch_cap=4,
                    check_every=2, target=0.95)
    defaults.update(kw)
    return EaseSettings(**defaults)


def ease_row(init, condition, value, analysis="constraint-set", lang="l"):
    return LanguageResult(analysis=analysis, init=init, condition=condition,
                          language_id=lang, metric="examples_to_criterion",
                          value=float(value))


class TestTrainToConvergence:
    def test_plateau_detected_on_constant_loss(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(0))
        pairs = [("ne", ".ne."), ("u", ".u.")]
        result = train_to_convergence(params, pairs, config, lr=0.0,
                                      plateau_tol=1e-4, plateau_window=5,
                                      epoch_cap=100)
        assert result.reason == "plateau"
        assert result.epochs == 6  # first comparable epoch is the second
        assert result.params.equal(params)

    def test_epoch_cap(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(1))
        result = train_to_convergence(params, [("ne", ".ne.")], config, lr=0.0,
                                      plateau_window=1000, epoch_cap=7)
        assert result.reason == "epoch-cap"
        assert result.epochs == 7

    def test_accuracy_early_exit(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(2))
        pairs = [("ne", ".ne.")]
        result = train_to_convergence(params, pairs, config, lr=0.0,
                                      plateau_window=1000, epoch_cap=50,
                                      eval_pairs=pairs, target=0.0,
                                      check_every=3)
        assert result.reason == "target-accuracy"
        assert result.epochs == 3

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            train_to_convergence(
                init_params(tiny_config(), np.random.default_rng(3)), [],
                tiny_config())


class TestEaseOfLearning:
    def test_meeting_target_at_first_rung_returns_step(self):
        # Monotone safety in its trivial form: an init that already meets
        # the criterion can never be charged more than the first rung.
        config = tiny_config()
        params = init_params(config, np.random.default_rng(4))
        lang = sample_language(np.random.default_rng(5))
        k, censored = ease_of_learning(params, lang, config,
                                       np.random.default_rng(6),
                                       tiny_ease(target=0.0))
        assert (k, censored) == (100, False)

    def test_unreachable_target_is_censored_at_cap(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(7))
        lang = sample_language(np.random.default_rng(8))
        k, censored = ease_of_learning(params, lang, config,
                                       np.random.default_rng(9),
                                       tiny_ease(target=1.01))
        assert (k, censored) == (200, True)

    def test_deterministic_given_seed(self):
        config = tiny_config()
        params = init_params(config, np.random.default_rng(10))
        lang = sample_language(np.random.default_rng(11))
        runs = [
            ease_of_learning(params, lang, config, np.random.default_rng(12),
                             tiny_ease())
            for _ in range(2)
        ]
        assert runs[0] == runs[1]


class TestCells:
    def test_cset_labels_and_overlap_counts(self):
        labels = [cset_label(c) for c in ALL_SETS]
        assert labels[0] == "Onset+NoCoda"
        assert len(set(labels)) == 4
        counts = sorted(correct_constraints(c) for c in ALL_SETS)
        assert counts == [0, 1, 1, 2]
        assert correct_constraints(CANONICAL_SET) == 2

    def test_constraint_set_analysis_rows_paired(self):
        config = tiny_config()
        rng = np.random.default_rng(13)
        inits = {
            "meta": init_params(config, np.random.default_rng(14)),
            "random": init_params(config, np.random.default_rng(15)),
        }
        rows = constraint_set_analysis(inits, config, rng, tiny_ease(target=0.0))
        assert len(rows) == 4 * 1 * 2  # cells x languages x inits
        by_init = {}
        for r in rows:
            by_init.setdefault(r.init, []).append((r.condition, r.language_id))
        assert by_init["meta"] == by_init["random"]  # identical languages
        assert {r.condition for r in rows} == {cset_label(c) for c in ALL_SETS}

    def test_consistency_analysis_kinds(self):
        config = tiny_config()
        inits = {"random": init_params(config, np.random.default_rng(16))}
        rows = consistency_analysis(inits, config, np.random.default_rng(17),
                                    tiny_ease(target=0.0), kind="ranking")
        assert {r.condition for r in rows} == {"consistent", "inconsistent-ranking"}
        assert all(r.analysis == "ranking-consistency" for r in rows)
        with pytest.raises(ValueError, match="consistency kind"):
            consistency_analysis(inits, config, np.random.default_rng(18),
                                 tiny_ease(), kind="colour")

    def test_consistency_analysis_deterministic(self):
        config = tiny_config()
        inits = {"random": init_params(config, np.random.default_rng(19))}
        a = consistency_analysis(inits, config, np.random.default_rng(20),
                                 tiny_ease(), kind="set")
        b = consistency_analysis(inits, config, np.random.default_rng(20),
                                 tiny_ease(), kind="set")
        assert a == b


class TestEval100Shot:
    def test_rows_shared_languages(self):
        config = tiny_config()
        inits = {
            "meta": init_params(config, np.random.default_rng(21)),
            "random": init_params(config, np.random.default_rng(22)),
        }
        settings = EvalSettings(n_languages=2, k=6, n_train=6, n_test=3, max_len=2)
        rows = eval_100shot(inits, config, np.random.default_rng(23), settings)
        assert len(rows) == 4
        ids = {r.init: [x.language_id for x in rows if x.init == r.init]
               for r in rows}
        assert ids["meta"] == ids["random"]
        assert all(r.metric == "accuracy" and 0.0 <= r.value <= 1.0 for r in rows)


class TestPosDatasets:
    def test_length_holdout_structure(self):
        settings = PosSettings(n_languages=1, k=10, n_train=20, n_test=10, max_len=4)
        lang, train, seen, holdout = _pos_datasets(
            "length-5", np.random.default_rng(24), settings)
        assert all(len(x) <= 4 for x, _ in train)
        assert all(len(x) <= 4 for x, _ in seen)
        assert all(len(x) == 5 for x, _ in holdout)
        assert not {x for x, _ in seen} & {x for x, _ in train}

    def test_new_phonemes_structure(self):
        settings = PosSettings(n_languages=1, k=10, n_train=20, n_test=10, max_len=3)
        lang, train, seen, holdout = _pos_datasets(
            "new-phonemes", np.random.default_rng(25), settings)
        old = set(lang.segments)
        assert all(set(x) <= old for x, _ in train)
        assert all(set(x) <= old for x, _ in seen)
        assert all(not (set(x) & old) for x, _ in holdout)

    def test_universals_structure(self):
        settings = PosSettings(n_languages=1, k=10, n_train=20, n_test=10)
        lang, train, seen, holdout = _pos_datasets(
            "universals", np.random.default_rng(26), settings)
        assert seen == train
        train_templates = {template_of(x) for x, _ in train}
        hold_templates = {template_of(x) for x, _ in holdout}
        assert len(train_templates) == 1 and len(hold_templates) == 1
        assert train_templates != hold_templates

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            _pos_datasets("upside-down", np.random.default_rng(27), PosSettings())

    def test_pos_analysis_rows(self):
        config = tiny_config()
        inits = {"random": init_params(config, np.random.default_rng(28))}
        settings = PosSettings(n_languages=2, k=6, n_train=6, n_test=4, max_len=2)
        rows = pos_analysis(inits, config, np.random.default_rng(29),
                            "new-phonemes", settings)
        assert len(rows) == 4  # languages x categories
        assert {r.condition for r in rows} == {"new-phonemes:seen",
                                               "new-phonemes:holdout"}
        assert all(r.analysis == "pos-new-phonemes" for r in rows)


class TestSummarize:
    def test_means_stds_and_constraint_ratios(self):
        rows = [
            ease_row("meta", "Onset+NoCoda", 100, lang="a"),
            ease_row("meta", "Onset+NoCoda", 200, lang="b"),
            ease_row("meta", "Onset+Coda", 300, lang="c"),
            ease_row("meta", "NoOnset+NoCoda", 500, lang="d"),
            ease_row("meta", "NoOnset+Coda", 400, lang="e"),
        ]
        report = summarize(rows)
        correct = [r for r in report.rows if r.condition == "Onset+NoCoda"][0]
        assert correct.n_languages == 2
        assert correct.mean == 150.0
        assert correct.std == 50.0
        ratios = {r.name: r.value for r in report.ratios}
        assert ratios["incorrect_over_correct"] == pytest.approx(400 / 150)
        assert ratios["zero_correct_over_one_correct"] == pytest.approx(1.0)

    def test_consistency_ratio(self):
        rows = [
            ease_row("meta", "consistent", 100, analysis="ranking-consistency", lang="a"),
            ease_row("meta", "consistent", 100, analysis="ranking-consistency", lang="b"),
            ease_row("meta", "inconsistent-ranking", 300,
                     analysis="ranking-consistency", lang="c"),
            ease_row("meta", "inconsistent-ranking", 500,
                     analysis="ranking-consistency", lang="d"),
        ]
        report = summarize(rows)
        assert report.ratios == tuple(
            [type(report.ratios[0])("ranking-consistency", "meta",
                                    "inconsistent_over_consistent", 4.0)]
        )

    def test_accuracy_rows_have_no_ratios(self):
        rows = [LanguageResult("eval-100shot", "meta", "standard", "a",
                               "accuracy", 0.5)]
        report = summarize(rows)
        assert report.ratios == ()
        assert report.rows[0].mean == 0.5


class TestReporting:
    def _rows(self):
        return [
            ease_row("meta", "Onset+NoCoda", 100, lang="a"),
            ease_row("random", "Onset+NoCoda", 400, lang="a"),
            LanguageResult("constraint-set", "meta", "NoOnset+Coda", "b",
                           "examples_to_criterion", 1600.0, censored=True),
        ]

    def test_results_round_trip(self, tmp_path):
        rows = self._rows()
        path = write_results(tmp_path / "results-x.csv", rows)
        assert read_results(path) == rows

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "results-bad.csv"
        path.write_text("nope,nope\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_results(path)

    def test_write_report_outputs(self, tmp_path):
        written = write_report(tmp_path, self._rows())
        names = {p.name for paths in written.values() for p in paths}
        assert names == {"summary.csv", "ratios.csv", "fig-constraint-set.svg"}
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == "analysis,init,condition,metric,n_languages,mean,std"
        assert len(summary) == 4  # header + three condition rows

    def test_figures_byte_deterministic(self, tmp_path):
        rows = self._rows()
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        a_dir.mkdir()
        b_dir.mkdir()
        (a_path,) = render_figures(a_dir, rows)
        (b_path,) = render_figures(b_dir, rows)
        assert a_path.read_bytes() == b_path.read_bytes()
        assert a_path.suffix == ".svg"


class TestExperimentConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(mode="ease", seed=9,
                               model=ModelConfig(embed_dim=3, hidden_dim=5,
                                                 max_decode_len=11),
                               meta=MetaSettings(n_languages=10),
                               ease=EaseSettings(cap=400))
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_partial_dict_keeps_defaults(self):
        cfg = ExperimentConfig.from_dict({"model": {"hidden_dim": 16}})
        assert cfg.model.hidden_dim == 16
        assert cfg.model.embed_dim == 10
        assert cfg.meta == MetaSettings()

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown ExperimentConfig keys"):
            ExperimentConfig.from_dict({"modell": "x"})
        with pytest.raises(ValueError, match="unknown MetaSettings keys"):
            ExperimentConfig.from_dict({"meta": {"n_langs": 3}})

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="unknown mode"):
            ExperimentConfig(mode="training-montage")

    def test_file_round_trip(self, tmp_path):
        cfg = ExperimentConfig(seed=123, out="elsewhere",
                               pos=PosSettings(n_languages=7))
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_replace_is_compatible(self):
        cfg = dataclasses.replace(ExperimentConfig(), seed=42)
        assert cfg.seed == 42
