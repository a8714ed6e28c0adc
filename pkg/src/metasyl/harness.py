"""Analysis harness: what inductive biases did meta-training install?

Three families of measurements, each run over freshly sampled languages
with every initialization under test seeing identical data:

* ease of learning — the smallest multiple of 100 training examples with
  which a freshly trained model reaches 95% test accuracy (censored at a
  cap), compared across constraint-set and consistency conditions;
* 100-shot evaluation — exact-match accuracy after adapting to 100 pairs;
* poverty-of-the-stimulus probes — adapt on one category of examples and
  test on a withheld category (new phonemes, longer inputs, or the
  conclusion side of an implicational universal).

Per-language rows go into `LanguageResult` records; `summarize` collapses
them into an `EvalReport` of per-condition means/stds plus the derived
ratios, and every ratio is recomputable from the persisted rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .autodiff import ParameterVector
from .config import EaseSettings, EvalSettings, PosSettings
from .langspace import (
    GenerationError,
    Language,
    REJECTION_CAP,
    _sample_distinct,
    enumerate_universals,
    make_dataset,
    sample_input,
    sample_language,
)
from .metalearn import inner_adapt
from .phonology import ALL_SETS, CANONICAL_SET, Constraint
from .seq2seq import ModelConfig, exact_match_accuracy, loss_and_grads, sgd_step

EASE_METRIC = "examples_to_criterion"
ACCURACY_METRIC = "accuracy"


@dataclass(frozen=True)
class LanguageResult:
    """One measurement on one language under one initialization."""

    analysis: str
    init: str
    condition: str
    language_id: str
    metric: str
    value: float
    censored: bool = False


@dataclass(frozen=True)
class ConditionSummary:
    analysis: str
    init: str
    condition: str
    metric: str
    n_languages: int
    mean: float
    std: float


@dataclass(frozen=True)
class RatioRow:
    analysis: str
    init: str
    name: str
    value: float


@dataclass(frozen=True)
class EvalReport:
    """Per-condition aggregates plus derived ratios, both recomputable from
    the underlying per-language rows."""

    rows: tuple[ConditionSummary, ...]
    ratios: tuple[RatioRow, ...]


# ---------------------------------------------------------------------------
# Training to convergence and ease of learning.

@dataclass(frozen=True)
class TrainResult:
    params: ParameterVector
    epochs: int
    final_loss: float
    reason: str  # "plateau" | "epoch-cap" | "target-accuracy"


def train_to_convergence(
    params: ParameterVector,
    pairs: Sequence[tuple[str, str]],
    config: ModelConfig,
    *,
    lr: float = 1.0,
    batch_size: int = 100,
    plateau_tol: float = 1e-4,
    plateau_window: int = 50,
    epoch_cap: int = 5000,
    eval_pairs: Sequence[tuple[str, str]] | None = None,
    target: float | None = None,
    check_every: int = 25,
) -> TrainResult:
    """Full-batch-sweep SGD until the train loss plateaus: `plateau_window`
    consecutive epochs whose relative improvement over the previous epoch
    is below `plateau_tol`, or the epoch cap.  When `eval_pairs` and
    `target` are given, training also stops as soon as a periodic accuracy
    check meets the target (the caller was going to stop at this point
    anyway, so the answer is unchanged)."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("train_to_convergence needs a nonempty train set")
    batches = [pairs[i:i + batch_size] for i in range(0, len(pairs), batch_size)]
    prev = None
    streak = 0
    epoch_loss = float("nan")
    for epoch in range(1, epoch_cap + 1):
        losses = []
        for batch in batches:
            loss, grads = loss_and_grads(batch, params, config)
            params = sgd_step(params, grads, lr)
            losses.append(loss)
        epoch_loss = float(np.mean(losses))
        if prev is not None:
            improvement = (prev - epoch_loss) / max(abs(prev), 1e-12)
            streak = streak + 1 if improvement < plateau_tol else 0
            if streak >= plateau_window:
                return TrainResult(params, epoch, epoch_loss, "plateau")
        prev = epoch_loss
        if eval_pairs is not None and target is not None and epoch % check_every == 0:
            if exact_match_accuracy(eval_pairs, params, config) >= target:
                return TrainResult(params, epoch, epoch_loss, "target-accuracy")
    return TrainResult(params, epoch_cap, epoch_loss, "epoch-cap")


def ease_of_learning(
    params: ParameterVector,
    lang: Language,
    config: ModelConfig,
    rng: np.random.Generator,
    settings: EaseSettings = EaseSettings(),
) -> tuple[int, bool]:
    """Smallest k in {step, 2*step, ...} such that training from `params`
    on k sampled examples reaches the target test accuracy; (cap, True)
    when even the cap fails.  Training examples are drawn i.i.d. (repeats
    allowed — languages with small inventories have fewer distinct inputs
    than the cap) and never overlap the held-out test inputs."""
    surface: dict[str, str] = {}

    def pair_of(x: str) -> tuple[str, str]:
        if x not in surface:
            surface[x] = lang.apply(x)
        return x, surface[x]

    test_inputs = _sample_distinct(
        lambda: sample_input(lang, rng, 1, settings.max_len), settings.n_test, set()
    )
    test_pairs = [pair_of(x) for x in test_inputs]
    excluded = set(test_inputs)

    for k in range(settings.step, settings.cap + 1, settings.step):
        train: list[tuple[str, str]] = []
        misses = 0
        while len(train) < k:
            x = sample_input(lang, rng, 1, settings.max_len)
            if x in excluded:
                misses += 1
                if misses >= REJECTION_CAP:
                    raise GenerationError("cannot draw train inputs distinct from test")
                continue
            misses = 0
            train.append(pair_of(x))
        result = train_to_convergence(
            params, train, config,
            lr=settings.lr, batch_size=settings.batch_size,
            plateau_tol=settings.plateau_tol, plateau_window=settings.plateau_window,
            epoch_cap=settings.epoch_cap, eval_pairs=test_pairs,
            target=settings.target, check_every=settings.check_every,
        )
        if exact_match_accuracy(test_pairs, result.params, config) >= settings.target:
            return k, False
    return settings.cap, True


# ---------------------------------------------------------------------------
# Condition cells.

def cset_label(cset: tuple[Constraint, ...]) -> str:
    return f"{cset[0].value}+{cset[1].value}"


def correct_constraints(cset: tuple[Constraint, ...]) -> int:
    """How many of the canonical structural constraints the set shares."""
    return int(cset[0] is Constraint.ONSET) + int(cset[1] is Constraint.NO_CODA)


def _child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _ease_rows(
    inits: Mapping[str, ParameterVector],
    analysis: str,
    cells: Sequence[tuple[str, dict]],
    config: ModelConfig,
    rng: np.random.Generator,
    settings: EaseSettings,
) -> list[LanguageResult]:
    """Run ease_of_learning over `cells` of sampled languages; every init
    sees the same languages and the same sampled train/test data."""
    results: list[LanguageResult] = []
    for condition, sample_kw in cells:
        for _ in range(settings.n_languages):
            lang = sample_language(rng, **sample_kw)
            data_seed = _child_seed(rng)
            for name, params in inits.items():
                k, censored = ease_of_learning(
                    params, lang, config,
                    np.random.default_rng(data_seed), settings,
                )
                results.append(LanguageResult(
                    analysis=analysis, init=name, condition=condition,
                    language_id=lang.id, metric=EASE_METRIC,
                    value=float(k), censored=censored,
                ))
    return results


def constraint_set_analysis(
    inits: Mapping[str, ParameterVector],
    config: ModelConfig,
    rng: np.random.Generator,
    settings: EaseSettings = EaseSettings(),
) -> list[LanguageResult]:
    """Ease of learning across the four constraint sets (the canonical
    Onset+NoCoda set vs the three alternates)."""
    cells = [(cset_label(cset), {"cset": cset}) for cset in ALL_SETS]
    return _ease_rows(inits, "constraint-set", cells, config, rng, settings)


def consistency_analysis(
    inits: Mapping[str, ParameterVector],
    config: ModelConfig,
    rng: np.random.Generator,
    settings: EaseSettings = EaseSettings(),
    kind: str = "ranking",
) -> list[LanguageResult]:
    """Ease of learning for languages with one consistent grammar vs
    per-template inconsistent ones (kind 'ranking' redraws the ranking per
    template, kind 'set' redraws the constraint set as well)."""
    if kind not in ("ranking", "set"):
        raise ValueError(f"unknown consistency kind {kind!r}")
    inconsistent = f"inconsistent-{kind}"
    cells = [
        ("consistent", {"kind": "consistent"}),
        (inconsistent, {"kind": inconsistent}),
    ]
    return _ease_rows(inits, f"{kind}-consistency", cells, config, rng, settings)


# ---------------------------------------------------------------------------
# 100-shot evaluation over fresh languages.

def eval_100shot(
    inits: Mapping[str, ParameterVector],
    config: ModelConfig,
    rng: np.random.Generator,
    settings: EvalSettings = EvalSettings(),
) -> list[LanguageResult]:
    """k-shot exact-match accuracy per init over one shared set of fresh
    languages and datasets."""
    results: list[LanguageResult] = []
    for _ in range(settings.n_languages):
        lang = sample_language(rng, kind=settings.kind)
        ds = make_dataset(lang, rng, n_train=settings.n_train,
                          n_test=settings.n_test, max_len=settings.max_len)
        train = list(ds.train)[: settings.k]
        for name, params in inits.items():
            adapted = params if settings.inner_steps == 0 else inner_adapt(
                params, train, config, lr=settings.inner_lr,
                steps=settings.inner_steps, batch_size=settings.batch_size,
            )
            acc = exact_match_accuracy(list(ds.test), adapted, config)
            results.append(LanguageResult(
                analysis="eval-100shot", init=name, condition="standard",
                language_id=lang.id, metric=ACCURACY_METRIC, value=acc,
            ))
    return results


# ---------------------------------------------------------------------------
# Poverty-of-the-stimulus probes.

POS_KINDS = ("new-phonemes", "length-5", "length-6", "universals")


def _fresh_pairs(
    lang: Language,
    rng: np.random.Generator,
    n: int,
    min_len: int,
    max_len: int,
    exclude: set[str],
) -> list[tuple[str, str]]:
    inputs = _sample_distinct(
        lambda: sample_input(lang, rng, min_len, max_len), n, set(exclude)
    )
    return [(x, lang.apply(x)) for x in inputs]


def _pos_datasets(kind: str, rng: np.random.Generator, settings: PosSettings):
    """One language's adaptation set plus its seen-category and
    held-out-category test sets for the given probe kind."""
    if kind == "new-phonemes":
        # Languages that map (almost) every input to the empty string have
        # no usable new-phoneme test items; redraw until one does.
        for _ in range(REJECTION_CAP):
            lang = sample_language(rng)
            try:
                ds = make_dataset(lang, rng, n_train=settings.n_train,
                                  n_test=settings.n_test, condition="new-phonemes",
                                  max_len=settings.max_len)
            except GenerationError:
                continue
            seen = _fresh_pairs(lang, rng, settings.n_test, 1, settings.max_len,
                                {x for x, _ in ds.train})
            return lang, list(ds.train), seen, list(ds.test)
        raise GenerationError("no language with usable new-phoneme test items")
    if kind in ("length-5", "length-6"):
        holdout_length = int(kind.split("-")[1])
        lang = sample_language(rng)
        ds = make_dataset(lang, rng, n_train=settings.n_train,
                          n_test=settings.n_test, condition="length-holdout",
                          holdout_length=holdout_length)
        taken = {x for x, _ in ds.train} | {x for x, _ in ds.test}
        seen = _fresh_pairs(lang, rng, settings.n_test, 1, holdout_length - 1, taken)
        return lang, list(ds.train), seen, list(ds.test)
    if kind == "universals":
        universals = enumerate_universals()
        u = universals[int(rng.integers(len(universals)))]
        for _ in range(REJECTION_CAP):
            lang = sample_language(rng)
            if lang.default[1] in u.premise_classes:
                break
        else:
            raise GenerationError("no language matching the universal's premise")
        ds = make_dataset(lang, rng, n_train=settings.n_train,
                          n_test=settings.n_test, condition="universal",
                          premise_template=u.premise_template,
                          conclusion_template=u.conclusion_template)
        # Seen-category accuracy for universals is resubstitution on the
        # premise items: the premise universe is tiny, so a disjoint
        # same-category test set generally does not exist.
        return lang, list(ds.train), list(ds.train), list(ds.test)
    raise ValueError(f"unknown poverty-of-the-stimulus kind {kind!r}")


def pos_analysis(
    inits: Mapping[str, ParameterVector],
    config: ModelConfig,
    rng: np.random.Generator,
    kind: str,
    settings: PosSettings = PosSettings(),
) -> list[LanguageResult]:
    """Adapt each init on one category of a language's examples and report
    accuracy on the seen category and the withheld category separately."""
    results: list[LanguageResult] = []
    for _ in range(settings.n_languages):
        lang, train, seen_pairs, holdout_pairs = _pos_datasets(kind, rng, settings)
        train = train[: settings.k]
        for name, params in inits.items():
            adapted = params if settings.inner_steps == 0 else inner_adapt(
                params, train, config, lr=settings.inner_lr,
                steps=settings.inner_steps, batch_size=settings.batch_size,
            )
            for category, pairs in (("seen", seen_pairs), ("holdout", holdout_pairs)):
                results.append(LanguageResult(
                    analysis=f"pos-{kind}", init=name,
                    condition=f"{kind}:{category}", language_id=lang.id,
                    metric=ACCURACY_METRIC,
                    value=exact_match_accuracy(pairs, adapted, config),
                ))
    return results


# ---------------------------------------------------------------------------
# Aggregation.

def summarize(results: Sequence[LanguageResult]) -> EvalReport:
    """Collapse per-language rows into per-condition means/stds and the
    derived ratios (mean of the inconsistent-or-incorrect cells over the
    mean of the consistent-or-correct cell, per init)."""
    groups: dict[tuple[str, str, str, str], list[float]] = {}
    for r in results:
        groups.setdefault((r.analysis, r.init, r.condition, r.metric), []).append(r.value)
    rows = tuple(
        ConditionSummary(analysis, init, condition, metric, len(vals),
                         float(np.mean(vals)), float(np.std(vals)))
        for (analysis, init, condition, metric), vals in sorted(groups.items())
    )

    def cell(analysis: str, init: str, *conditions: str) -> list[float]:
        pooled: list[float] = []
        for condition in conditions:
            for key, vals in groups.items():
                if key[0] == analysis and key[1] == init and key[2] == condition:
                    pooled.extend(vals)
        return pooled

    ratios: list[RatioRow] = []
    inits = sorted({r.init for r in results})
    analyses = {r.analysis for r in results}

    if "constraint-set" in analyses:
        correct = cset_label(CANONICAL_SET)
        others = [cset_label(c) for c in ALL_SETS if cset_label(c) != correct]
        one = [cset_label(c) for c in ALL_SETS if correct_constraints(c) == 1]
        zero = [cset_label(c) for c in ALL_SETS if correct_constraints(c) == 0]
        for init in inits:
            base = cell("constraint-set", init, correct)
            rest = cell("constraint-set", init, *others)
            if base and rest:
                ratios.append(RatioRow("constraint-set", init,
                                       "incorrect_over_correct",
                                       float(np.mean(rest) / np.mean(base))))
            one_vals = cell("constraint-set", init, *one)
            zero_vals = cell("constraint-set", init, *zero)
            if one_vals and zero_vals:
                ratios.append(RatioRow("constraint-set", init,
                                       "zero_correct_over_one_correct",
                                       float(np.mean(zero_vals) / np.mean(one_vals))))

    for kind in ("ranking", "set"):
        analysis = f"{kind}-consistency"
        if analysis in analyses:
            for init in inits:
                base = cell(analysis, init, "consistent")
                rest = cell(analysis, init, f"inconsistent-{kind}")
                if base and rest:
                    ratios.append(RatioRow(analysis, init,
                                           "inconsistent_over_consistent",
                                           float(np.mean(rest) / np.mean(base))))
    return EvalReport(rows=rows, ratios=tuple(ratios))
