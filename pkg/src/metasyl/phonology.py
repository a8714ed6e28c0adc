"""Optimality-Theory engine for basic CV syllable structure.

A word's underlying form (a string of consonants and vowels) is mapped to a
syllabified surface form by generating every licit parse (GEN), counting
constraint violations per parse, and picking the parse whose violation
profile is lexicographically minimal under a language's constraint ranking
(EVAL).  Syllables follow the (C)V(C) template; the available repairs are
deletion of input segments and insertion (epenthesis) of a designated
consonant or vowel.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

log = logging.getLogger(__name__)

# Global segment inventory: 20 consonants, 10 vowels, all single characters.
CONSONANTS = tuple("bcdfghjklmnpqrstvwxz")
VOWELS = tuple("aeiouyäëïö")
ALPHABET = frozenset(CONSONANTS) | frozenset(VOWELS)

MAX_INPUT_LEN = 8


def is_vowel(ch: str) -> bool:
    return ch in VOWELS


def is_consonant(ch: str) -> bool:
    return ch in CONSONANTS


class InvalidInputError(ValueError):
    """Raised for input strings outside the alphabet or over the length cap."""


class Constraint(Enum):
    ONSET = "Onset"            # violated by a syllable lacking an onset
    NO_CODA = "NoCoda"         # violated by a syllable with a coda
    NO_INSERTION = "NoInsertion"
    NO_DELETION = "NoDeletion"
    NO_ONSET = "NoOnset"       # violated by a syllable with an onset
    CODA = "Coda"              # violated by a syllable lacking a coda

    def __repr__(self) -> str:
        return self.value


ONSET_PAIR = (Constraint.ONSET, Constraint.NO_ONSET)
CODA_PAIR = (Constraint.NO_CODA, Constraint.CODA)


def constraint_set(onset_like: Constraint, coda_like: Constraint) -> tuple[Constraint, ...]:
    """A constraint set: one onset-pair member, one coda-pair member, plus
    the two faithfulness constraints."""
    if onset_like not in ONSET_PAIR or coda_like not in CODA_PAIR:
        raise ValueError(f"bad margin constraints: {onset_like}, {coda_like}")
    return (onset_like, coda_like, Constraint.NO_INSERTION, Constraint.NO_DELETION)


CANONICAL_SET = constraint_set(Constraint.ONSET, Constraint.NO_CODA)
ALL_SETS = tuple(constraint_set(o, c) for o in ONSET_PAIR for c in CODA_PAIR)


def all_rankings(cset: tuple[Constraint, ...]) -> list[tuple[Constraint, ...]]:
    return [tuple(p) for p in itertools.permutations(cset)]


@dataclass(frozen=True, slots=True)
class Syllable:
    """One (C)V(C) syllable of a parse.

    Slot characters are None when the slot is empty; a filled slot is
    epenthetic when its source index is None.
    """

    onset: str | None
    nucleus: str
    coda: str | None
    onset_src: int | None
    nucleus_src: int | None
    coda_src: int | None

    @property
    def text(self) -> str:
        return (self.onset or "") + self.nucleus + (self.coda or "")

    @property
    def epenthetic_slots(self) -> int:
        n = 0
        if self.onset is not None and self.onset_src is None:
            n += 1
        if self.nucleus_src is None:
            n += 1
        return n


@dataclass(frozen=True, slots=True)
class Candidate:
    """A full parse of an input: syllables plus the set of deleted indices."""

    input: str
    syllables: tuple[Syllable, ...]
    deleted: tuple[int, ...]

    @property
    def surface(self) -> str:
        if not self.syllables:
            return ""
        return "." + ".".join(s.text for s in self.syllables) + "."

    @property
    def insertions(self) -> int:
        return sum(s.epenthetic_slots for s in self.syllables)


@dataclass(frozen=True, slots=True)
class Grammar:
    """Everything EVAL needs: a ranking over one constraint set plus the
    language's designated epenthetic segments."""

    ranking: tuple[Constraint, ...]
    epen_c: str
    epen_v: str

    def __post_init__(self) -> None:
        if not is_consonant(self.epen_c):
            raise ValueError(f"epenthetic consonant {self.epen_c!r} is not a consonant")
        if not is_vowel(self.epen_v):
            raise ValueError(f"epenthetic vowel {self.epen_v!r} is not a vowel")
        if len(self.ranking) != 4 or set(self.ranking) not in [set(s) for s in ALL_SETS]:
            raise ValueError(f"not a ranking of a well-formed constraint set: {self.ranking}")

    @property
    def cset(self) -> tuple[Constraint, ...]:
        onset_like = next(c for c in self.ranking if c in ONSET_PAIR)
        coda_like = next(c for c in self.ranking if c in CODA_PAIR)
        return constraint_set(onset_like, coda_like)


def _check_input(input_str: str, max_len: int = MAX_INPUT_LEN) -> None:
    if len(input_str) > max_len:
        raise InvalidInputError(f"input longer than {max_len}: {input_str!r}")
    for ch in input_str:
        if ch not in ALPHABET:
            raise InvalidInputError(f"symbol {ch!r} not in the alphabet")


def gen_candidates(
    input_str: str, epen_c: str, epen_v: str, max_len: int = MAX_INPUT_LEN
) -> list[Candidate]:
    """Enumerate every licit parse of the input (GEN).

    Each input segment is either deleted or parsed, in order, into (C)V(C)
    syllables.  Epenthesis is limited to the designated consonant as an
    onset for an input vowel and the designated vowel as a nucleus adjacent
    to an input consonant; no syllable is fully epenthetic.
    """
    return list(_gen_cached(input_str, epen_c, epen_v, max_len))


@lru_cache(maxsize=4096)
def _gen_cached(
    input_str: str, epen_c: str, epen_v: str, max_len: int
) -> tuple[Candidate, ...]:
    _check_input(input_str, max_len)
    if not is_consonant(epen_c) or not is_vowel(epen_v):
        raise InvalidInputError("epenthetic segments must be a consonant and a vowel")

    n = len(input_str)
    out: list[Candidate] = []
    for kept_mask in itertools.product((True, False), repeat=n):
        kept = tuple(i for i in range(n) if kept_mask[i])
        deleted = tuple(i for i in range(n) if not kept_mask[i])
        for syls in _parses(input_str, kept, epen_c, epen_v):
            out.append(Candidate(input_str, syls, deleted))
    return tuple(out)


def _parses(
    s: str, kept: tuple[int, ...], epen_c: str, epen_v: str
) -> list[tuple[Syllable, ...]]:
    """All ways to parse the kept segments, in order, into syllables."""
    if not kept:
        return [()]
    i = kept[0]
    x = s[i]
    rest1 = kept[1:]
    results: list[tuple[Syllable, ...]] = []

    def extend(syl: Syllable, remainder: tuple[int, ...]) -> None:
        for tail in _parses(s, remainder, epen_c, epen_v):
            results.append((syl,) + tail)

    if is_vowel(x):
        extend(Syllable(None, x, None, None, i, None), rest1)
        extend(Syllable(epen_c, x, None, None, i, None), rest1)
        if rest1 and is_consonant(s[rest1[0]]):
            j = rest1[0]
            extend(Syllable(None, x, s[j], None, i, j), rest1[1:])
            extend(Syllable(epen_c, x, s[j], None, i, j), rest1[1:])
    else:
        if rest1 and is_vowel(s[rest1[0]]):
            j = rest1[0]
            rest2 = rest1[1:]
            extend(Syllable(x, s[j], None, i, j, None), rest2)
            if rest2 and is_consonant(s[rest2[0]]):
                k = rest2[0]
                extend(Syllable(x, s[j], s[k], i, j, k), rest2[1:])
        extend(Syllable(x, epen_v, None, i, None, None), rest1)
        extend(Syllable(None, epen_v, x, None, None, i), rest1)
        if rest1 and is_consonant(s[rest1[0]]):
            j = rest1[0]
            extend(Syllable(x, epen_v, s[j], i, None, j), rest1[1:])
    return results


def violations(cand: Candidate, cset: tuple[Constraint, ...]) -> dict[Constraint, int]:
    """Count this candidate's violations of each constraint in the set."""
    onsetless = sum(1 for s in cand.syllables if s.onset is None)
    codas = sum(1 for s in cand.syllables if s.coda is not None)
    counts = {
        Constraint.ONSET: onsetless,
        Constraint.NO_ONSET: len(cand.syllables) - onsetless,
        Constraint.NO_CODA: codas,
        Constraint.CODA: len(cand.syllables) - codas,
        Constraint.NO_INSERTION: cand.insertions,
        Constraint.NO_DELETION: len(cand.deleted),
    }
    return {c: counts[c] for c in cset}


def _profile_key(cand: Candidate, ranking: tuple[Constraint, ...]):
    """(ranked violations, deletions, insertions) — everything but the
    final surface-string tie-break."""
    prof = violations(cand, ranking)
    return tuple(prof[c] for c in ranking), len(cand.deleted), cand.insertions


def _eval_key(cand: Candidate, ranking: tuple[Constraint, ...]):
    return _profile_key(cand, ranking) + (cand.surface,)


def optimal_candidate(
    input_str: str, grammar: Grammar, max_len: int = MAX_INPUT_LEN
) -> Candidate:
    """EVAL by exhaustive enumeration: the candidate whose violation profile
    is lexicographically minimal under the ranking; ties broken by fewer
    deletions, fewer insertions, then smallest surface string."""
    cands = _gen_cached(input_str, grammar.epen_c, grammar.epen_v, max_len)
    # Surface strings are only needed to break full profile ties, so the
    # comparison runs on the cheap key components first.
    keyed = [(_profile_key(c, grammar.ranking), c) for c in cands]
    best_key = min(k for k, _ in keyed)
    pool = [c for k, c in keyed if k == best_key]
    best = min(pool, key=lambda c: c.surface)
    if len(pool) > 1 and len({c.surface for c in pool}) > 1:
        log.debug(
            "surface tie for %r under %s: %s",
            input_str, grammar.ranking, sorted({c.surface for c in pool}),
        )
    return best


def oracle_optimize(input_str: str, grammar: Grammar, max_len: int = MAX_INPUT_LEN) -> str:
    """Brute-force reference for optimize(); must agree with it everywhere."""
    return optimal_candidate(input_str, grammar, max_len).surface


def optimize(input_str: str, grammar: Grammar, max_len: int = MAX_INPUT_LEN) -> str:
    """EVAL by dynamic programming over input positions.

    Scans left to right keeping at most one open syllable.  The value of a
    suffix is the minimal (ranked violations, deletions, insertions,
    emitted text) tuple; prepending a fixed transition cost and emission
    preserves that order, so combining each transition with the best value
    of its successor state yields the global optimum.
    """
    _check_input(input_str, max_len)
    ranking = grammar.ranking
    idx = {c: j for j, c in enumerate(ranking)}
    onset_like = next(c for c in ranking if c in ONSET_PAIR)
    coda_like = next(c for c in ranking if c in CODA_PAIR)
    i_ons, i_cod = idx[onset_like], idx[coda_like]
    i_ins, i_del = idx[Constraint.NO_INSERTION], idx[Constraint.NO_DELETION]
    onset_required = onset_like is Constraint.ONSET
    coda_banned = coda_like is Constraint.NO_CODA
    epen_c, epen_v = grammar.epen_c, grammar.epen_v
    n = len(input_str)

    def close_delta(has_onset: bool, has_coda: bool, n_epen: int, text: str) -> list:
        d = [0, 0, 0, 0, 0, n_epen, text]
        if has_onset != onset_required:
            d[i_ons] += 1
        if has_coda == coda_banned:
            d[i_cod] += 1
        d[i_ins] += n_epen
        return d

    def delete_delta() -> list:
        d = [0, 0, 0, 0, 1, 0, ""]
        d[i_del] += 1
        return d

    def insert_delta() -> list:
        d = [0, 0, 0, 0, 0, 1, ""]
        d[i_ins] += 1
        return d

    def plus(d: list, tail: tuple) -> tuple:
        return (
            d[0] + tail[0], d[1] + tail[1], d[2] + tail[2], d[3] + tail[3],
            d[4] + tail[4], d[5] + tail[5], d[6] + tail[6],
        )

    memo: dict[tuple, tuple] = {}

    # States: ("S",) between syllables; ("O", c) after taking consonant c as
    # a pending onset; ("N", onset_or_None, v) inside an open syllable whose
    # nucleus is v.  Epenthetic-onset cost is paid when the syllable opens,
    # so the "N" state needs no epenthesis flag.
    def best(state: tuple, i: int) -> tuple:
        key = (state, i)
        got = memo.get(key)
        if got is not None:
            return got
        kind = state[0]
        options: list[tuple] = []
        if kind == "S":
            if i == n:
                value = (0, 0, 0, 0, 0, 0, "")
                memo[key] = value
                return value
            x = input_str[i]
            options.append(plus(delete_delta(), best(("S",), i + 1)))
            if is_consonant(x):
                options.append(best(("O", x), i + 1))
                d = close_delta(False, True, 1, epen_v + x + ".")  # .Vx.
                options.append(plus(d, best(("S",), i + 1)))
            else:
                options.append(best(("N", None, x), i + 1))
                options.append(plus(insert_delta(), best(("N", epen_c, x), i + 1)))
        elif kind == "O":
            c = state[1]
            d = close_delta(True, False, 1, c + epen_v + ".")  # .cV.
            options.append(plus(d, best(("S",), i)))
            if i < n:
                x = input_str[i]
                options.append(plus(delete_delta(), best(("O", c), i + 1)))
                if is_vowel(x):
                    options.append(best(("N", c, x), i + 1))
                else:
                    d = close_delta(True, True, 1, c + epen_v + x + ".")  # .cVx.
                    options.append(plus(d, best(("S",), i + 1)))
        else:  # "N"
            o, v = state[1], state[2]
            d = close_delta(o is not None, False, 0, (o or "") + v + ".")
            options.append(plus(d, best(("S",), i)))
            if i < n:
                x = input_str[i]
                options.append(plus(delete_delta(), best(("N", o, v), i + 1)))
                if is_consonant(x):
                    d = close_delta(o is not None, True, 0, (o or "") + v + x + ".")
                    options.append(plus(d, best(("S",), i + 1)))
        value = min(options)
        memo[key] = value
        return value

    text = best(("S",), 0)[6]
    return "." + text if text else ""


# ---------------------------------------------------------------------------
# Factorial typology: group rankings by input/output behavior.

PROBE_CONSONANTS = ("n", "x", "z")
PROBE_VOWELS = ("e", "u")
PROBE_EPEN_C = "z"
PROBE_EPEN_V = "e"
PROBE_MAX_LEN = 4


def _probe_inputs() -> tuple[str, ...]:
    symbols = tuple(sorted(PROBE_CONSONANTS + PROBE_VOWELS))
    probes: list[str] = []
    for length in range(1, PROBE_MAX_LEN + 1):
        probes.extend("".join(p) for p in itertools.product(symbols, repeat=length))
    return tuple(probes)


PROBES = _probe_inputs()


@dataclass(frozen=True, slots=True)
class BehaviorClass:
    """A set of rankings that map every probe input to the same output."""

    index: int
    rankings: tuple[tuple[Constraint, ...], ...]
    signature: tuple[str, ...]  # outputs, parallel to PROBES

    @property
    def representative(self) -> tuple[Constraint, ...]:
        return self.rankings[0]


@lru_cache(maxsize=None)
def typology(cset: tuple[Constraint, ...] = CANONICAL_SET) -> tuple[BehaviorClass, ...]:
    """Partition the 24 rankings of a constraint set into behavior classes.

    Two rankings land in the same class iff they produce identical outputs
    on every probe input (all strings up to length 4 over a fixed 3C+2V
    alphabet).  The result is deterministic: classes are ordered by their
    output signature, rankings within a class by constraint name.
    """
    groups: dict[tuple[str, ...], list[tuple[Constraint, ...]]] = {}
    for ranking in all_rankings(cset):
        g = Grammar(ranking, PROBE_EPEN_C, PROBE_EPEN_V)
        sig = tuple(optimize(p, g) for p in PROBES)
        groups.setdefault(sig, []).append(ranking)
    classes: list[BehaviorClass] = []
    for sig in sorted(groups):
        rankings = tuple(sorted(groups[sig], key=lambda r: tuple(c.value for c in r)))
        classes.append(BehaviorClass(len(classes), rankings, sig))
    return tuple(classes)


def behavior_class_index(ranking: tuple[Constraint, ...]) -> int:
    """The index of the behavior class a ranking belongs to (within its own
    constraint set's typology)."""
    onset_like = next(c for c in ranking if c in ONSET_PAIR)
    coda_like = next(c for c in ranking if c in CODA_PAIR)
    for cls in typology(constraint_set(onset_like, coda_like)):
        if ranking in cls.rankings:
            return cls.index
    raise ValueError(f"not a valid ranking: {ranking}")
