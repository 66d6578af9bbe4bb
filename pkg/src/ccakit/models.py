"""Crediting next-token predictors and exact enumeration of their rollouts.

A predictor maps (dataset bitmask, prompt string) to an exact distribution
over (token, credit bitmask) pairs. Rollouts are enumerated depth-first over
all traces, so the resulting output distributions are exact rational objects.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator

from .dist import FiniteDist

# End-of-sequence marker; a member of every alphabet.
EOS = "$"

Kernel = Callable[[int, str], FiniteDist]


class NonTerminatingModelError(RuntimeError):
    """A rollout can still emit non-EOS tokens past the declared horizon."""

    def __init__(self, prompt: str):
        super().__init__(f"non-terminating model at prompt {prompt!r}: "
                         f"non-{EOS!r} mass past the horizon")
        self.prompt = prompt


class CreditViolationError(ValueError):
    """A kernel emitted a credit set that is not a subset of the dataset."""


@dataclass(frozen=True)
class DataUniverse:
    """Ordered finite list of document identifiers; datasets are bitmasks."""

    documents: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.documents)) != len(self.documents):
            raise ValueError("document identifiers must be distinct")

    @property
    def size(self) -> int:
        return len(self.documents)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.documents)) - 1

    def document_bit(self, name: str) -> int:
        return 1 << self.documents.index(name)

    def mask_of(self, names: Iterable[str]) -> int:
        mask = 0
        for name in names:
            mask |= self.document_bit(name)
        return mask

    def names_of(self, mask: int) -> tuple[str, ...]:
        return tuple(d for i, d in enumerate(self.documents) if mask >> i & 1)

    def subsets(self) -> Iterator[int]:
        return iter(range(1 << len(self.documents)))


@dataclass(frozen=True, eq=False)
class CreditingPredictor:
    """Next-token predictor returning (token, credit bitmask) distributions.

    The kernel may be a table lookup or arbitrary code; it is consulted only
    through `step`, which enforces the EOS-absorbing rule and validates that
    credit sets are subsets of the dataset. ``horizon`` bounds the length of
    any generated string: enumeration hard-fails if non-EOS mass remains once
    the string exceeds it.
    """

    alphabet: tuple[str, ...]
    universe: DataUniverse
    horizon: int
    kernel: Kernel
    name: str = ""

    def __post_init__(self):
        if EOS not in self.alphabet:
            raise ValueError(f"alphabet must contain the end marker {EOS!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def step(self, dataset: int, prompt: str) -> FiniteDist:
        """Next-token distribution at (dataset, prompt), EOS-absorbing."""
        if EOS in prompt:
            return FiniteDist.point((EOS, 0))
        dist = self.kernel(dataset, prompt)
        for (token, credit), _ in dist.items():
            if token not in self.alphabet:
                raise ValueError(f"kernel emitted unknown token {token!r}")
            if credit & ~dataset:
                raise CreditViolationError(
                    f"credit mask {credit:b} not a subset of dataset {dataset:b} "
                    f"at prompt {prompt!r}")
        return dist

    def tokens(self) -> tuple[str, ...]:
        """Alphabet without the EOS marker."""
        return tuple(t for t in self.alphabet if t != EOS)


def iter_prompts(tokens: Iterable[str], max_len: int) -> Iterator[str]:
    """All strings over ``tokens`` of length <= max_len, shortest first."""
    for n in range(max_len + 1):
        for combo in itertools.product(tuple(tokens), repeat=n):
            yield "".join(combo)


def _strip_trailing_eos(s: str) -> str:
    while s.endswith(EOS):
        s = s[:-1]
    return s


def crediting_rollout_distribution(M: CreditingPredictor, dataset: int,
                                   prompt: str) -> FiniteDist:
    """Exact distribution over (output string, credit union) of the rollout.

    The output string includes the prompt as a prefix; the trailing EOS is
    stripped but the EOS-emitting step still contributes its credit set.
    """
    memo: dict[str, dict] = {}

    def go(cur: str) -> dict:
        cached = memo.get(cur)
        if cached is not None:
            return cached
        over = len(cur) > M.horizon
        out: dict = {}
        for (token, credit), mass in M.step(dataset, cur).items():
            if token == EOS:
                key = ("", credit)
                out[key] = out.get(key, Fraction(0)) + mass
                continue
            if over:
                raise NonTerminatingModelError(cur)
            for (suffix, union), tail_mass in go(cur + token).items():
                key = (token + suffix, credit | union)
                out[key] = out.get(key, Fraction(0)) + mass * tail_mass
        memo[cur] = out
        return out

    return FiniteDist({(_strip_trailing_eos(prompt + suffix), union): mass
                       for (suffix, union), mass in go(prompt).items()})


def trace_distribution(M: CreditingPredictor, dataset: int,
                       prompt: str) -> FiniteDist:
    """Exact distribution over full traces: tuples of (token, credit) steps.

    The last step of every trace emits EOS; no earlier step does.
    """
    memo: dict[str, dict] = {}

    def go(cur: str) -> dict:
        cached = memo.get(cur)
        if cached is not None:
            return cached
        over = len(cur) > M.horizon
        out: dict = {}
        for (token, credit), mass in M.step(dataset, cur).items():
            if token == EOS:
                key = ((token, credit),)
                out[key] = out.get(key, Fraction(0)) + mass
                continue
            if over:
                raise NonTerminatingModelError(cur)
            for tail, tail_mass in go(cur + token).items():
                key = ((token, credit),) + tail
                out[key] = out.get(key, Fraction(0)) + mass * tail_mass
        memo[cur] = out
        return out

    return FiniteDist(go(prompt))


def rollout_distribution(M: CreditingPredictor, dataset: int,
                         prompt: str) -> FiniteDist:
    """Credit-ignoring rollout: the string marginal of the crediting rollout."""
    return crediting_rollout_distribution(M, dataset, prompt).marginal(lambda oc: oc[0])


def build_counterexample(p) -> CreditingPredictor:
    """Two-token predictor whose next-token credit attribution is exact but
    whose rollout is not, for any ratio bound.

    Over alphabet {a, b} and a single document: the empty prompt emits a with
    probability p crediting nothing; prompt a (with the document present)
    emits (a, credited) or (b, uncredited) each with probability 1/2; prompt
    b always emits a, credited iff the document is present.
    """
    p = Fraction(p)
    if not 0 < p < 1:
        raise ValueError(f"p must be in (0, 1), got {p}")
    universe = DataUniverse(("s1",))
    half = Fraction(1, 2)

    def kernel(dataset: int, prompt: str) -> FiniteDist:
        if prompt == "":
            return FiniteDist({("a", 0): p, ("b", 0): 1 - p})
        if prompt == "a":
            if dataset:
                return FiniteDist({("a", 1): half, ("b", 0): half})
            return FiniteDist.point(("b", 0))
        if prompt == "b":
            return FiniteDist.point(("a", 1 if dataset else 0))
        return FiniteDist.point((EOS, 0))

    return CreditingPredictor(alphabet=("a", "b", EOS), universe=universe,
                              horizon=2, kernel=kernel, name=f"counterexample(p={p})")


def build_hard_model(z: str, gamma, rho) -> CreditingPredictor:
    """Non-crediting bit predictor with one biased prompt hidden at ``z``.

    Emits uniform bits on every prompt in {0,1}^{<=len(z)} except at the
    hidden prompt z with a nonempty dataset, where the next bit is 1 with
    probability 1/2 + bias, bias = (1 - (1/rho)*(1-gamma))/2. All other
    prompts are absorbing. Credit sets are always empty; this is the input
    to retrofitting, not a crediting model.
    """
    gamma = Fraction(gamma)
    rho = Fraction(rho)
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    if not z or any(c not in "01" for c in z):
        raise ValueError(f"z must be a nonempty bit string, got {z!r}")
    ell = len(z)
    bias = (1 - (1 - gamma) / rho) / 2
    half = Fraction(1, 2)
    uniform = FiniteDist({("0", 0): half, ("1", 0): half})
    biased = FiniteDist({("1", 0): half + bias, ("0", 0): half - bias})
    universe = DataUniverse(("s1",))

    def kernel(dataset: int, prompt: str) -> FiniteDist:
        if len(prompt) > ell or any(c not in "01" for c in prompt):
            return FiniteDist.point((EOS, 0))
        if dataset and prompt == z:
            return biased
        return uniform

    return CreditingPredictor(alphabet=("0", "1", EOS), universe=universe,
                              horizon=ell + 1, kernel=kernel,
                              name=f"hard(z={z},gamma={gamma},rho={rho})")
