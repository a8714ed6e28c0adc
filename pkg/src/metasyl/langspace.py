"""The space of languages: sampling, dataset construction, serialization.

A Language couples phoneme inventories and epenthetic segments with a
behavior specification: either one (constraint set, behavior class)
assignment governing every input, or — for deliberately inconsistent
languages — an assignment per input template (the C/V skeleton).  Datasets
pair sampled inputs with the language's outputs under one of the
experimental conditions; implicational universals over short templates are
enumerated from the factorial typology.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .phonology import (
    ALL_SETS,
    CANONICAL_SET,
    CONSONANTS,
    VOWELS,
    Candidate,
    Constraint,
    Grammar,
    constraint_set,
    is_vowel,
    optimal_candidate,
    optimize,
    typology,
)


class GenerationError(RuntimeError):
    """Raised when a dataset cannot be built under its constraints."""


Assignment = tuple[tuple[Constraint, ...], int]  # (constraint set, class index)

REJECTION_CAP = 1000  # consecutive failed draws before giving up


def template_of(input_str: str) -> str:
    """The C/V skeleton of an input, e.g. 'nezu' -> 'CVCV'."""
    return "".join("V" if is_vowel(ch) else "C" for ch in input_str)


def all_templates(max_len: int) -> tuple[str, ...]:
    out: list[str] = []
    for length in range(1, max_len + 1):
        out.extend("".join(t) for t in itertools.product("CV", repeat=length))
    return tuple(out)


@dataclass(frozen=True)
class Language:
    """A sampled language: inventories, epenthetic segments, behavior.

    `default` governs every input of a consistent language; inconsistent
    languages leave it None and list one assignment per template instead.
    """

    consonants: tuple[str, ...]
    vowels: tuple[str, ...]
    epen_c: str
    epen_v: str
    default: Assignment | None
    per_template: tuple[tuple[str, Assignment], ...] = ()

    def __post_init__(self) -> None:
        if self.epen_c not in self.consonants or self.epen_v not in self.vowels:
            raise ValueError("epenthetic segments must come from the language's inventories")
        if self.default is None and not self.per_template:
            raise ValueError("language needs a default or per-template behavior")

    @property
    def segments(self) -> tuple[str, ...]:
        return self.consonants + self.vowels

    def assignment_for(self, template: str) -> Assignment:
        for tmpl, asg in self.per_template:
            if tmpl == template:
                return asg
        if self.default is None:
            raise GenerationError(f"no behavior assigned for template {template!r}")
        return self.default

    def grammar_for(self, template: str) -> Grammar:
        cset, class_index = self.assignment_for(template)
        ranking = typology(cset)[class_index].representative
        return Grammar(ranking, self.epen_c, self.epen_v)

    def apply(self, input_str: str) -> str:
        """The language's ground-truth output for an input."""
        return optimize(input_str, self.grammar_for(template_of(input_str)))

    def to_dict(self) -> dict:
        def asg_dict(asg: Assignment) -> dict:
            cset, k = asg
            return {"constraints": [c.value for c in cset], "class": k}

        return {
            "consonants": list(self.consonants),
            "vowels": list(self.vowels),
            "epen_c": self.epen_c,
            "epen_v": self.epen_v,
            "default": None if self.default is None else asg_dict(self.default),
            "per_template": {t: asg_dict(a) for t, a in self.per_template},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Language":
        by_value = {c.value: c for c in Constraint}

        def asg(obj: dict) -> Assignment:
            return (tuple(by_value[name] for name in obj["constraints"]), int(obj["class"]))

        return cls(
            consonants=tuple(d["consonants"]),
            vowels=tuple(d["vowels"]),
            epen_c=d["epen_c"],
            epen_v=d["epen_v"],
            default=None if d["default"] is None else asg(d["default"]),
            per_template=tuple(sorted((t, asg(a)) for t, a in d["per_template"].items())),
        )

    @property
    def id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]


def sample_language(
    rng: np.random.Generator,
    cset: tuple[Constraint, ...] = CANONICAL_SET,
    kind: str = "consistent",
    template_max_len: int = 5,
    consonant_pool: tuple[str, ...] = CONSONANTS,
    vowel_pool: tuple[str, ...] = VOWELS,
) -> Language:
    """Draw a language: behavior class uniform over the set's typology,
    inventory sizes uniform over {2,3,4}, members uniform without
    replacement, epenthetic segments uniform over the inventories.

    kind='inconsistent-ranking' draws an independent class per template;
    kind='inconsistent-set' additionally draws the constraint set per
    template.
    """
    n_c = int(rng.integers(2, 5))
    n_v = int(rng.integers(2, 5))
    consonants = tuple(sorted(str(s) for s in rng.choice(consonant_pool, n_c, replace=False)))
    vowels = tuple(sorted(str(s) for s in rng.choice(vowel_pool, n_v, replace=False)))
    epen_c = str(consonants[rng.integers(n_c)])
    epen_v = str(vowels[rng.integers(n_v)])

    def draw_assignment(in_set: tuple[Constraint, ...]) -> Assignment:
        return (in_set, int(rng.integers(len(typology(in_set)))))

    if kind == "consistent":
        return Language(consonants, vowels, epen_c, epen_v, draw_assignment(cset))
    if kind == "inconsistent-ranking":
        per = tuple((t, draw_assignment(cset)) for t in all_templates(template_max_len))
        return Language(consonants, vowels, epen_c, epen_v, None, per)
    if kind == "inconsistent-set":
        per = tuple(
            (t, draw_assignment(ALL_SETS[rng.integers(len(ALL_SETS))]))
            for t in all_templates(template_max_len)
        )
        return Language(consonants, vowels, epen_c, epen_v, None, per)
    raise ValueError(f"unknown language kind: {kind!r}")


def resample_inventories(
    lang: Language,
    rng: np.random.Generator,
    consonant_pool: tuple[str, ...] = CONSONANTS,
    vowel_pool: tuple[str, ...] = VOWELS,
) -> Language:
    """The same behavior assignment over fresh inventories disjoint from
    lang's (same sizes); epenthetic segments drawn from the fresh
    inventories."""
    c_pool = tuple(s for s in consonant_pool if s not in lang.consonants)
    v_pool = tuple(s for s in vowel_pool if s not in lang.vowels)
    if len(c_pool) < len(lang.consonants) or len(v_pool) < len(lang.vowels):
        raise GenerationError("pools too small for a disjoint inventory")
    consonants = tuple(sorted(str(s) for s in rng.choice(c_pool, len(lang.consonants), replace=False)))
    vowels = tuple(sorted(str(s) for s in rng.choice(v_pool, len(lang.vowels), replace=False)))
    return Language(
        consonants,
        vowels,
        str(consonants[rng.integers(len(consonants))]),
        str(vowels[rng.integers(len(vowels))]),
        lang.default,
        lang.per_template,
    )


def sample_input(
    lang: Language,
    rng: np.random.Generator,
    min_len: int = 1,
    max_len: int = 5,
) -> str:
    """Length uniform in [min_len, max_len]; each segment uniform over the
    union of the language's inventories."""
    if not 1 <= min_len <= max_len:
        raise ValueError(f"bad length bounds [{min_len}, {max_len}]")
    length = int(rng.integers(min_len, max_len + 1))
    segs = lang.segments
    return "".join(segs[rng.integers(len(segs))] for _ in range(length))


def instantiate_template(template: str, lang: Language, rng: np.random.Generator) -> str:
    return "".join(
        lang.vowels[rng.integers(len(lang.vowels))]
        if slot == "V"
        else lang.consonants[rng.integers(len(lang.consonants))]
        for slot in template
    )


def _sample_distinct(draw, n: int, taken: set[str], accept=None) -> list[str]:
    """n distinct strings not in `taken` (and passing `accept`, when given),
    by rejection with a retry cap."""
    out: list[str] = []
    misses = 0
    while len(out) < n:
        x = draw()
        if x in taken or (accept is not None and not accept(x)):
            misses += 1
            if misses >= REJECTION_CAP:
                raise GenerationError(
                    f"could not draw {n} distinct inputs ({len(out)} found)"
                )
            continue
        misses = 0
        taken.add(x)
        out.append(x)
    return out


CONDITIONS = (
    "standard",
    "inconsistent-ranking",
    "inconsistent-set",
    "new-phonemes",
    "length-holdout",
    "universal",
)


@dataclass(frozen=True)
class Dataset:
    """Train/test pairs for one language under one condition."""

    language: Language
    condition: str
    train: tuple[tuple[str, str], ...]
    test: tuple[tuple[str, str], ...]
    test_language: Language | None = None   # new-phonemes only
    holdout_length: int | None = None       # length-holdout only
    premise_template: str | None = None     # universal only
    conclusion_template: str | None = None  # universal only


def make_dataset(
    lang: Language,
    rng: np.random.Generator,
    n_train: int = 100,
    n_test: int = 100,
    condition: str = "standard",
    max_len: int = 5,
    holdout_length: int | None = None,
    premise_template: str | None = None,
    conclusion_template: str | None = None,
) -> Dataset:
    """Build a dataset for one condition.

    standard / inconsistent-* : inputs sampled from the language (the
    behavioral inconsistency lives in the Language itself); new-phonemes:
    test half drawn from a disjoint-inventory twin of the language;
    length-holdout(k): train lengths <= k-1, test lengths == k;
    universal: train instantiates the premise template (repeats allowed,
    few instantiations exist), test covers the conclusion template.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")

    test_language: Language | None = None
    taken: set[str] = set()

    if condition == "universal":
        if not premise_template or not conclusion_template:
            raise ValueError("universal condition needs premise and conclusion templates")
        if premise_template == conclusion_template:
            raise ValueError("premise and conclusion templates must differ")
        train_inputs = [
            instantiate_template(premise_template, lang, rng) for _ in range(n_train)
        ]
        pools = [
            lang.vowels if slot == "V" else lang.consonants
            for slot in conclusion_template
        ]
        universe = ["".join(p) for p in itertools.product(*pools)]
        if len(universe) > n_test:
            picks = rng.choice(len(universe), n_test, replace=False)
            test_inputs = [universe[i] for i in sorted(picks)]
        else:
            test_inputs = universe
        out_lang = lang
    elif condition == "length-holdout":
        if holdout_length is None or holdout_length < 2:
            raise ValueError("length-holdout needs holdout_length >= 2")
        train_inputs = _sample_distinct(
            lambda: sample_input(lang, rng, 1, holdout_length - 1), n_train, taken
        )
        test_inputs = _sample_distinct(
            lambda: sample_input(lang, rng, holdout_length, holdout_length), n_test, taken
        )
        out_lang = lang
    elif condition == "new-phonemes":
        train_inputs = _sample_distinct(
            lambda: sample_input(lang, rng, 1, max_len), n_train, taken
        )
        test_language = resample_inventories(lang, rng)
        # An empty target is producible without ever emitting an unseen
        # symbol, so such items carry no signal for this probe; test inputs
        # are restricted to those with non-empty surfaces.  Languages that
        # map every input to the empty string have no valid test items and
        # fail with a generation error.
        test_inputs = _sample_distinct(
            lambda: sample_input(test_language, rng, 1, max_len), n_test, taken,
            accept=lambda x: test_language.apply(x) != "",
        )
        out_lang = test_language
    else:  # standard, inconsistent-ranking, inconsistent-set
        train_inputs = _sample_distinct(
            lambda: sample_input(lang, rng, 1, max_len), n_train, taken
        )
        test_inputs = _sample_distinct(
            lambda: sample_input(lang, rng, 1, max_len), n_test, taken
        )
        out_lang = lang

    train = tuple((x, lang.apply(x)) for x in train_inputs)
    test = tuple((x, out_lang.apply(x)) for x in test_inputs)
    if set(x for x, _ in train) & set(x for x, _ in test):
        raise GenerationError("train/test inputs overlap")
    return Dataset(
        language=lang,
        condition=condition,
        train=train,
        test=test,
        test_language=test_language,
        holdout_length=holdout_length,
        premise_template=premise_template,
        conclusion_template=conclusion_template,
    )


# ---------------------------------------------------------------------------
# Serialization: one JSON object per line per split + sidecar metadata.

def save_dataset(ds: Dataset, stem: str | Path, seed: int | None = None) -> list[Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for split, pairs in (("train", ds.train), ("test", ds.test)):
        path = stem.with_name(stem.name + f".{split}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for inp, out in pairs:
                fh.write(json.dumps({"input": inp, "output": out}, ensure_ascii=False) + "\n")
        paths.append(path)
    meta = {
        "language_id": ds.language.id,
        "condition": ds.condition,
        "language": ds.language.to_dict(),
        "test_language": None if ds.test_language is None else ds.test_language.to_dict(),
        "holdout_length": ds.holdout_length,
        "premise_template": ds.premise_template,
        "conclusion_template": ds.conclusion_template,
        "n_train": len(ds.train),
        "n_test": len(ds.test),
        "seed": seed,
    }
    meta_path = stem.with_name(stem.name + ".meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    paths.append(meta_path)
    return paths


def load_dataset(stem: str | Path) -> Dataset:
    stem = Path(stem)

    def read_pairs(split: str) -> tuple[tuple[str, str], ...]:
        path = stem.with_name(stem.name + f".{split}.jsonl")
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                pairs.append((obj["input"], obj["output"]))
        return tuple(pairs)

    with open(stem.with_name(stem.name + ".meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    return Dataset(
        language=Language.from_dict(meta["language"]),
        condition=meta["condition"],
        train=read_pairs("train"),
        test=read_pairs("test"),
        test_language=(
            None if meta["test_language"] is None
            else Language.from_dict(meta["test_language"])
        ),
        holdout_length=meta["holdout_length"],
        premise_template=meta["premise_template"],
        conclusion_template=meta["conclusion_template"],
    )


# ---------------------------------------------------------------------------
# Implicational universals over short templates.

TEMPLATE_UNIVERSE = ("C", "V", "CC", "CV", "VC", "VV")

# Two symbol pools per instantiation pass, chosen so every symbol is unique
# within an input and distinct from the probe epenthetics (z, e); each pool
# is in alphabetical order so surface tie-breaking behaves identically.
_INSTANTIATIONS = (
    (("n", "x"), ("i", "u")),
    (("p", "t"), ("a", "o")),
)


def _instantiate(template: str, c_syms: tuple[str, ...], v_syms: tuple[str, ...]) -> str:
    ci = vi = 0
    out = []
    for slot in template:
        if slot == "V":
            out.append(v_syms[vi])
            vi += 1
        else:
            out.append(c_syms[ci])
            ci += 1
    return "".join(out)


def _structure(cand: Candidate) -> tuple:
    """Symbol-free parse structure: per syllable, each slot is ('in', source
    index), ('ep',) for epenthetic, or None for empty."""

    def tag(char, src):
        if char is None:
            return None
        return ("in", src) if src is not None else ("ep",)

    return tuple(
        (tag(s.onset, s.onset_src), tag(s.nucleus, s.nucleus_src), tag(s.coda, s.coda_src))
        for s in cand.syllables
    )


def template_outcome(template: str, ranking: tuple[Constraint, ...]) -> tuple:
    """The parse structure a ranking assigns to a template, instantiated with
    distinct symbols; raises if the structure depends on the symbols."""
    outcomes = []
    for c_syms, v_syms in _INSTANTIATIONS:
        inp = _instantiate(template, c_syms, v_syms)
        cand = optimal_candidate(inp, Grammar(ranking, "z", "e"))
        outcomes.append(_structure(cand))
    if outcomes[0] != outcomes[1]:
        raise RuntimeError(
            f"outcome of {template} under {ranking} depends on instantiation symbols"
        )
    return outcomes[0]


def outcome_display(template: str, structure: tuple) -> str:
    """Render a parse structure in C/V notation, e.g. '.CVC.'."""
    if not structure:
        return '""'
    parts = []
    for onset, nucleus, coda in structure:
        s = ""
        if onset is not None:
            s += "C"
        s += "V"
        if coda is not None:
            s += "C"
        parts.append(s)
    return "." + ".".join(parts) + "."


@dataclass(frozen=True)
class Universal:
    """premise mapping present in a language => conclusion mapping present."""

    premise_template: str
    premise_outcome: tuple
    conclusion_template: str
    conclusion_outcome: tuple
    premise_classes: tuple[int, ...]
    conclusion_classes: tuple[int, ...]

    def display(self) -> str:
        return (
            f"{self.premise_template} -> "
            f"{outcome_display(self.premise_template, self.premise_outcome)}"
            f"  implies  {self.conclusion_template} -> "
            f"{outcome_display(self.conclusion_template, self.conclusion_outcome)}"
        )


def class_outcomes(
    templates: tuple[str, ...] = TEMPLATE_UNIVERSE,
) -> dict[str, dict[int, tuple]]:
    """outcome structure per (template, canonical behavior class); validated
    to be identical across every ranking within each class."""
    out: dict[str, dict[int, tuple]] = {}
    for template in templates:
        per_class: dict[int, tuple] = {}
        for cls in typology(CANONICAL_SET):
            seen = {template_outcome(template, r) for r in cls.rankings}
            if len(seen) != 1:
                raise RuntimeError(
                    f"class {cls.index} is not outcome-consistent on {template}"
                )
            per_class[cls.index] = seen.pop()
        out[template] = per_class
    return out


def enumerate_universals(
    templates: tuple[str, ...] = TEMPLATE_UNIVERSE,
    include_empty: bool = False,
) -> list[Universal]:
    """All dependencies (t1 -> o1) => (t2 -> o2) over the template universe:
    every behavior class showing the premise mapping also shows the
    conclusion mapping, the pair is not the same mapping, and the conclusion
    is not universally true (present in every class).

    Mappings whose output is the empty string (complete deletion) are
    degenerate and excluded from both sides by default; with the default
    template universe this yields the 24 substantive dependencies.
    """
    outcomes = class_outcomes(templates)
    n_classes = len(typology(CANONICAL_SET))
    all_classes = frozenset(range(n_classes))

    support: dict[tuple[str, tuple], frozenset[int]] = {}
    for template, per_class in outcomes.items():
        for k, structure in per_class.items():
            key = (template, structure)
            support[key] = support.get(key, frozenset()) | {k}

    def admissible(outcome: tuple) -> bool:
        return include_empty or outcome != ()

    found: list[Universal] = []
    for (t1, o1), s1 in support.items():
        if not admissible(o1):
            continue
        for (t2, o2), s2 in support.items():
            if (t1, o1) == (t2, o2) or s2 == all_classes or not admissible(o2):
                continue
            if s1 <= s2:
                found.append(
                    Universal(t1, o1, t2, o2, tuple(sorted(s1)), tuple(sorted(s2)))
                )
    found.sort(
        key=lambda u: (
            u.premise_template,
            outcome_display(u.premise_template, u.premise_outcome),
            u.conclusion_template,
            outcome_display(u.conclusion_template, u.conclusion_outcome),
        )
    )
    return found
