"""Episodic meta-learning (MAML) of the LSTM initialization.

One episode = one sampled language: adapt a copy of the shared
initialization M0 to the language's train set with plain SGD (the inner
loop), measure the adapted model's loss on the language's test set, and
update M0 with one Adam step on the meta-gradient (the outer loop).  The
outer gradient is either first-order (treat the adapted parameters as
constants of M0) or exact (differentiate through the inner SGD steps,
which needs the autodiff engine's double-backward support).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterVector
from .langspace import Dataset, make_dataset, sample_language
from .phonology import CANONICAL_SET
from .seq2seq import (
    AdamState,
    ModelConfig,
    adam_step,
    exact_match_accuracy,
    init_params,
    leaf_nodes,
    loss_and_grads,
    sgd_step,
    teacher_forced_loss,
)

INNER_LR = 1.0
INNER_BATCH = 100
META_LR = 0.001


@dataclass(frozen=True)
class Episode:
    """One language's train/test split plus the inner-loop recipe; `adapted`
    caches the inner-trained parameters when prepared ahead of time."""

    dataset: Dataset
    inner_steps: int = 1
    inner_lr: float = INNER_LR
    adapted: ParameterVector | None = None


@dataclass(frozen=True)
class MetaState:
    m0: ParameterVector
    outer_opt: AdamState
    best_score: float = -math.inf
    evals_without_improvement: int = 0
    languages_seen: int = 0


def _batch_for_step(pairs: list, batch_size: int, step: int) -> list:
    """Full batch when it fits; otherwise a deterministic wrap-around slice
    of `batch_size` pairs starting where the previous step left off."""
    n = len(pairs)
    if n <= batch_size:
        return pairs
    start = (step * batch_size) % n
    return [pairs[(start + i) % n] for i in range(batch_size)]


def inner_adapt(
    params: ParameterVector,
    train_pairs,
    config: ModelConfig,
    *,
    lr: float = INNER_LR,
    steps: int = 1,
    batch_size: int = INNER_BATCH,
) -> ParameterVector:
    """`steps` SGD steps on batches of min(batch_size, |train|) pairs; the
    argument parameters are never mutated."""
    train = list(train_pairs)
    if not train:
        raise ValueError("inner_adapt needs a nonempty train set")
    for step in range(steps):
        batch = _batch_for_step(train, batch_size, step)
        _, grads = loss_and_grads(batch, params, config)
        params = sgd_step(params, grads, lr)
    return params


def prepare_episode(
    m0: ParameterVector,
    dataset: Dataset,
    config: ModelConfig,
    *,
    inner_steps: int = 1,
    inner_lr: float = INNER_LR,
    batch_size: int = INNER_BATCH,
) -> Episode:
    adapted = m0 if inner_steps == 0 else inner_adapt(
        m0, dataset.train, config, lr=inner_lr, steps=inner_steps, batch_size=batch_size
    )
    return Episode(dataset=dataset, inner_steps=inner_steps, inner_lr=inner_lr,
                   adapted=adapted)


def meta_gradient(
    params: ParameterVector,
    train_fns: Sequence[Callable],
    test_fn: Callable,
    *,
    inner_lr: float = INNER_LR,
    order: str = "first",
) -> tuple[float, ParameterVector]:
    """Gradient of test loss after len(train_fns) inner SGD steps, taken at
    `params`.

    Each loss function maps a name->block mapping (Node or ndarray blocks)
    to a scalar.  'first' treats the adapted parameters as constants;
    'exact' differentiates through the inner steps, Hessian terms included.
    """
    names = params.names()
    if order == "first":
        current = params
        for fn in train_fns:
            leaves = leaf_nodes(current)
            loss = fn(leaves)
            grads = ad.backward(loss, [leaves[k] for k in names])
            current = current.sub(
                ParameterVector(dict(zip(names, grads))).scale(inner_lr)
            )
        leaves = leaf_nodes(current)
        test_loss = test_fn(leaves)
        grads = ad.backward(test_loss, [leaves[k] for k in names])
        return float(test_loss.value), ParameterVector(dict(zip(names, grads)))
    if order != "exact":
        raise ValueError(f"unknown meta-gradient order {order!r}")
    leaves = leaf_nodes(params)
    adapted = dict(leaves)
    for fn in train_fns:
        loss = fn(adapted)
        grad_nodes = ad.backward(loss, [adapted[k] for k in names], graph=True)
        adapted = {
            k: ad.sub(adapted[k], ad.mul(g, inner_lr))
            for k, g in zip(names, grad_nodes)
        }
    test_loss = test_fn(adapted)
    grads = ad.backward(test_loss, [leaves[k] for k in names])
    return float(ad.value_of(test_loss)), ParameterVector(dict(zip(names, grads)))


def meta_step(
    state: MetaState,
    episode: Episode,
    config: ModelConfig,
    *,
    order: str = "first",
    batch_size: int = INNER_BATCH,
) -> MetaState:
    """One outer Adam step of M0 against one episode; the adapted
    parameters are discarded afterwards."""
    test = list(episode.dataset.test)
    if order == "first" and episode.adapted is not None:
        _, grads = loss_and_grads(test, episode.adapted, config)
    else:
        train = list(episode.dataset.train)
        train_fns = [
            (lambda blocks, b=_batch_for_step(train, batch_size, s):
             teacher_forced_loss(b, blocks, config))
            for s in range(episode.inner_steps)
        ]
        _, grads = meta_gradient(
            state.m0, train_fns,
            lambda blocks: teacher_forced_loss(test, blocks, config),
            inner_lr=episode.inner_lr, order=order,
        )
    m0, outer_opt = adam_step(state.m0, grads, state.outer_opt)
    return replace(state, m0=m0, outer_opt=outer_opt,
                   languages_seen=state.languages_seen + 1)


def k_shot_eval(
    params: ParameterVector,
    dataset: Dataset,
    config: ModelConfig,
    *,
    k: int = 100,
    inner_lr: float = INNER_LR,
    inner_steps: int = 1,
    batch_size: int = INNER_BATCH,
) -> float:
    """Adapt on the first k train examples, then the exact-match fraction on
    the test set; k=0 or inner_steps=0 evaluates the raw initialization."""
    train = list(dataset.train)
    if k > len(train):
        raise ValueError(f"k={k} exceeds the {len(train)}-pair train set")
    if k == 0 or inner_steps == 0:
        adapted = params
    else:
        adapted = inner_adapt(params, train[:k], config, lr=inner_lr,
                              steps=inner_steps, batch_size=batch_size)
    return exact_match_accuracy(list(dataset.test), adapted, config)


def holdout_accuracy(
    params: ParameterVector,
    datasets: Sequence[Dataset],
    config: ModelConfig,
    *,
    k: int = 100,
    inner_lr: float = INNER_LR,
    inner_steps: int = 1,
    batch_size: int = INNER_BATCH,
) -> float:
    """Mean k-shot exact-match accuracy over a collection of languages."""
    scores = [
        k_shot_eval(params, ds, config, k=k, inner_lr=inner_lr,
                    inner_steps=inner_steps, batch_size=batch_size)
        for ds in datasets
    ]
    return float(np.mean(scores)) if scores else 0.0


@dataclass(frozen=True)
class MetaResult:
    """Outcome of a meta-training run: the best-scoring initialization, the
    final loop state, and the (languages_seen, holdout_accuracy) history."""

    m0: ParameterVector
    state: MetaState
    history: tuple[tuple[int, float], ...] = field(default_factory=tuple)
    stopped_early: bool = False

    def log_csv(self) -> str:
        lines = ["languages_seen,holdout_accuracy"]
        lines += [f"{n},{acc!r}" for n, acc in self.history]
        return "\n".join(lines) + "\n"


def meta_train(
    config: ModelConfig,
    rng: np.random.Generator,
    *,
    n_languages: int = 2000,
    n_passes: int = 1,
    warmup_episodes: int = 0,
    n_holdout: int = 100,
    eval_every: int = 100,
    patience: int = 10,
    n_train: int = 100,
    n_test: int = 100,
    inner_lr: float = INNER_LR,
    inner_steps: int = 1,
    meta_lr: float = META_LR,
    order: str = "first",
    eval_k: int = 100,
    eval_inner_steps: int | None = None,
    cset=CANONICAL_SET,
    kind: str = "consistent",
    max_len: int = 5,
    batch_size: int = INNER_BATCH,
    log_path=None,
    progress: Callable[[int, float], None] | None = None,
) -> MetaResult:
    """Meta-train an initialization over a pool of `n_languages` languages.

    The first pass streams through the pool in sampling order; each later
    pass (up to `n_passes`) revisits it in a freshly shuffled order, and
    every episode draws a fresh train/test dataset from its language.
    The first `warmup_episodes` episodes run with zero inner steps (plain
    multi-task training on the episodes' test losses), which trains the
    input-copying machinery far faster than adapted episodes; remaining
    episodes use `inner_steps`.  Every `eval_every` episodes the current
    M0 is scored by mean `eval_k`-shot accuracy on a fixed set of
    held-out languages; training stops after `patience` consecutive
    evaluations with no strictly higher score, and the best-scoring M0 is
    returned.  The whole run is a pure function of (config, rng state,
    keyword settings).
    """
    if eval_inner_steps is None:
        eval_inner_steps = max(inner_steps, 1)
    m0 = init_params(config, rng)
    holdout = tuple(
        make_dataset(sample_language(rng, cset=cset, kind=kind), rng,
                     n_train=n_train, n_test=n_test, max_len=max_len)
        for _ in range(n_holdout)
    )
    state = MetaState(m0=m0, outer_opt=AdamState.init(m0, lr=meta_lr))
    best_m0 = m0
    history: list[tuple[int, float]] = []
    stopped_early = False
    pool: list = []
    episodes = 0
    log_file = open(log_path, "w") if log_path is not None else None
    try:
        if log_file:
            log_file.write("languages_seen,holdout_accuracy\n")
        for pass_idx in range(n_passes):
            if pass_idx == 0:
                indices = list(range(n_languages))
            else:
                indices = [int(j) for j in rng.permutation(n_languages)]
            for j in indices:
                if pass_idx == 0:
                    pool.append(sample_language(rng, cset=cset, kind=kind))
                lang = pool[j]
                ds = make_dataset(lang, rng, n_train=n_train, n_test=n_test,
                                  condition="standard", max_len=max_len)
                steps = 0 if episodes < warmup_episodes else inner_steps
                if order == "first":
                    episode = prepare_episode(state.m0, ds, config,
                                              inner_steps=steps,
                                              inner_lr=inner_lr, batch_size=batch_size)
                else:
                    episode = Episode(dataset=ds, inner_steps=steps,
                                      inner_lr=inner_lr)
                state = meta_step(state, episode, config, order=order,
                                  batch_size=batch_size)
                episodes += 1
                if episodes % eval_every == 0:
                    score = holdout_accuracy(state.m0, holdout, config, k=eval_k,
                                             inner_lr=inner_lr,
                                             inner_steps=eval_inner_steps,
                                             batch_size=batch_size)
                    history.append((episodes, score))
                    if log_file:
                        log_file.write(f"{episodes},{score!r}\n")
                        log_file.flush()
                    if progress:
                        progress(episodes, score)
                    if score > state.best_score:
                        best_m0 = state.m0
                        state = replace(state, best_score=score,
                                        evals_without_improvement=0)
                    else:
                        state = replace(
                            state,
                            evals_without_improvement=state.evals_without_improvement + 1,
                        )
                        if state.evals_without_improvement >= patience:
                            stopped_early = True
                            break
            if stopped_early:
                break
    finally:
        if log_file:
            log_file.close()
    return MetaResult(m0=best_m0, state=state, history=tuple(history),
                      stopped_early=stopped_early)
