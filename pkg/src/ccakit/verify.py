"""Deciding and quantifying counterfactual credit attribution.

A crediting algorithm passes at (rho, delta) if, for every dataset, document
and prompt, either the document is always credited, or the output law
conditioned on not crediting it is (rho, delta)-close to the law with the
document removed. Checks run at the next-token level (single kernel step) or
the rollout level (full generated string plus credit union).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Optional

from .dist import (INFINITY, ClosenessVerdict, FiniteDist, epsilon_from_rho,
                   min_ratio, ratio_close)
from .models import (CreditingPredictor, crediting_rollout_distribution,
                     iter_prompts)

NEXT_TOKEN = "next-token"
ROLLOUT = "rollout"
LEVELS = (NEXT_TOKEN, ROLLOUT)


def output_distribution(M: CreditingPredictor, dataset: int, prompt: str,
                        level: str) -> FiniteDist:
    """Joint (outcome, credit bitmask) law at the requested level."""
    if level == NEXT_TOKEN:
        return M.step(dataset, prompt)
    if level == ROLLOUT:
        return crediting_rollout_distribution(M, dataset, prompt)
    raise ValueError(f"level must be one of {LEVELS}, got {level!r}")


def credit_probability(joint: FiniteDist, doc_bit: int) -> Fraction:
    """Probability that the credit bitmask includes ``doc_bit``."""
    return sum((mass for (_, credit), mass in joint.items() if credit & doc_bit),
               Fraction(0))


def condition_not_credited(joint: FiniteDist, doc_bit: int) -> FiniteDist:
    """Renormalized restriction of a joint law to outcomes not crediting the doc."""
    keep = {o: m for o, m in joint.items() if not o[1] & doc_bit}
    total = sum(keep.values(), Fraction(0))
    if total == 0:
        raise ValueError("cannot condition on a zero-probability event")
    return FiniteDist({o: m / total for o, m in keep.items()})


@dataclass(frozen=True)
class ConditionalPair:
    """Conditional law (doc not credited) and counterfactual law (doc removed).

    ``conditional`` is None exactly when the document is always credited, in
    which case no closeness check applies.
    """

    conditional: Optional[FiniteDist]
    counterfactual: FiniteDist
    credit_prob: Fraction

    @property
    def always_credits(self) -> bool:
        return self.conditional is None


def conditional_pair(M: CreditingPredictor, dataset: int, document: str,
                     prompt: str, level: str = ROLLOUT) -> ConditionalPair:
    doc_bit = M.universe.document_bit(document)
    if not dataset & doc_bit:
        raise ValueError(f"document {document!r} is not in the dataset")
    joint = output_distribution(M, dataset, prompt, level)
    counterfactual = output_distribution(M, dataset & ~doc_bit, prompt, level)
    prob = credit_probability(joint, doc_bit)
    if prob == 1:
        return ConditionalPair(None, counterfactual, prob)
    return ConditionalPair(condition_not_credited(joint, doc_bit),
                           counterfactual, prob)


@dataclass(frozen=True)
class TripleReport:
    dataset: int
    document: str
    prompt: str
    always_credits: bool
    verdict: Optional[ClosenessVerdict]
    min_ratio_forward: object  # Fraction or INFINITY; None when always credits
    min_ratio_reverse: object

    @property
    def ok(self) -> bool:
        return self.always_credits or self.verdict.close


@dataclass
class CcaReport:
    level: str
    rho: Fraction
    delta: Fraction
    triples: list[TripleReport] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(t.ok for t in self.triples)

    def violations(self) -> list[TripleReport]:
        return [t for t in self.triples if not t.ok]

    def to_json_dict(self, universe) -> dict:
        def ratio_str(r):
            if r is None:
                return None
            return "inf" if r == INFINITY else str(Fraction(r))

        return {
            "level": self.level,
            "rho": str(self.rho),
            "delta": str(self.delta),
            "overall": self.overall,
            "triples": [
                {
                    "dataset": list(universe.names_of(t.dataset)),
                    "document": t.document,
                    "prompt": t.prompt,
                    "always_credits": t.always_credits,
                    "close": None if t.always_credits else t.verdict.close,
                    "witness_event": None if t.always_credits or t.verdict.close
                    else [repr(o) for o in sorted(t.verdict.witness_event, key=repr)],
                    "min_ratio_forward": ratio_str(t.min_ratio_forward),
                    "min_ratio_reverse": ratio_str(t.min_ratio_reverse),
                }
                for t in self.triples
            ],
        }


def iter_triples(M: CreditingPredictor) -> Iterator[tuple[int, str]]:
    """All (dataset, document) pairs with the document in the dataset."""
    for dataset in M.universe.subsets():
        for document in M.universe.names_of(dataset):
            yield dataset, document


def check_cca(M: CreditingPredictor, level: str, rho, delta=0) -> CcaReport:
    """Exhaustive exact check over all datasets, documents and prompts.

    Prompts are enumerated up to the predictor's horizon; longer or
    EOS-containing prompts are absorbing by construction (`step` enforces
    this), making them trivially compliant, so they are not enumerated.
    """
    rho = Fraction(rho)
    delta = Fraction(delta)
    report = CcaReport(level=level, rho=rho, delta=delta)
    for prompt in iter_prompts(M.tokens(), M.horizon):
        for dataset, document in iter_triples(M):
            pair = conditional_pair(M, dataset, document, prompt, level)
            if pair.always_credits:
                report.triples.append(TripleReport(
                    dataset, document, prompt, True, None, None, None))
                continue
            verdict = ratio_close(pair.conditional, pair.counterfactual, rho, delta)
            report.triples.append(TripleReport(
                dataset, document, prompt, False, verdict,
                min_ratio(pair.conditional, pair.counterfactual),
                min_ratio(pair.counterfactual, pair.conditional)))
    return report


@dataclass(frozen=True)
class MinEpsilonReport:
    """Smallest ratio bound making each triple pass at delta = 0."""

    level: str
    per_triple: dict  # (dataset, document, prompt) -> Fraction or INFINITY
    overall: object   # Fraction or INFINITY

    @property
    def overall_epsilon(self) -> float:
        return epsilon_from_rho(self.overall)


def min_epsilon_cca(M: CreditingPredictor, level: str) -> MinEpsilonReport:
    """Per-triple and overall minimal feasible ratio bound at delta = 0.

    INFINITY signals a support mismatch: the triple fails for every finite
    ratio. Triples where the document is always credited are skipped.
    """
    per_triple: dict = {}
    overall = Fraction(1)
    for prompt in iter_prompts(M.tokens(), M.horizon):
        for dataset, document in iter_triples(M):
            pair = conditional_pair(M, dataset, document, prompt, level)
            if pair.always_credits:
                continue
            fwd = min_ratio(pair.conditional, pair.counterfactual)
            rev = min_ratio(pair.counterfactual, pair.conditional)
            value = INFINITY if INFINITY in (fwd, rev) else max(fwd, rev, Fraction(1))
            per_triple[(dataset, document, prompt)] = value
            overall = max(overall, value)
    return MinEpsilonReport(level, per_triple, overall)


CreditingFamily = Callable[[int, str], FiniteDist]  # (dataset, prompt) -> joint law
BaseFamily = Callable[[int, str], FiniteDist]       # (dataset, prompt) -> string law


def check_augmentation(crediting: CreditingFamily, base: BaseFamily,
                       datasets: Iterable[int], prompts: Iterable[str]) -> bool:
    """True iff the string marginal of ``crediting`` equals ``base`` exactly
    on every (dataset, prompt) pair."""
    prompts = list(prompts)
    for dataset in datasets:
        for prompt in prompts:
            marginal = crediting(dataset, prompt).marginal(lambda oc: oc[0])
            if marginal != base(dataset, prompt):
                return False
    return True


CreditProbFn = Callable[[int, str, str], Fraction]  # (dataset, prompt, document)


@dataclass(frozen=True)
class AlphaApproxReport:
    within: bool
    worst_gap: Fraction
    worst_triple: Optional[tuple]

    def __bool__(self) -> bool:
        return self.within


def check_alpha_approx(candidate: CreditProbFn, reference: CreditProbFn,
                       alpha, triples: Iterable[tuple[int, str, str]]) -> AlphaApproxReport:
    """Compare per-document crediting probabilities uniformly over triples.

    ``triples`` iterates (dataset, prompt, document) with the document in the
    dataset; passes iff every absolute gap is <= alpha.
    """
    alpha = Fraction(alpha)
    worst_gap = Fraction(0)
    worst_triple = None
    for dataset, prompt, document in triples:
        gap = abs(Fraction(candidate(dataset, prompt, document))
                  - Fraction(reference(dataset, prompt, document)))
        if gap > worst_gap:
            worst_gap = gap
            worst_triple = (dataset, prompt, document)
    return AlphaApproxReport(worst_gap <= alpha, worst_gap, worst_triple)
