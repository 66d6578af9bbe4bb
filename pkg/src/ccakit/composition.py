"""Lower bound on the rollout's credit-attribution parameter.

If the next-token predictor passes at ratio rho and its rollout passes at
ratio rho', then for every dataset, document and prompt, either the document
is always credited or, for every rollout output not crediting it,

    rho' * rho**steps  >=  prod_j Pr[no credit at step j | prefix] / Pr[doc not credited]

Terms are kept as exact rational ratios plus integer step counts; logarithms
are taken only at the reporting boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .dist import INFINITY
from .models import EOS, CreditingPredictor, iter_prompts, trace_distribution
from .verify import NEXT_TOKEN, check_cca, iter_triples


@dataclass(frozen=True)
class BoundTerm:
    """One rollout output (string, credit union) with the document uncredited."""

    output: str
    credit_mask: int
    ratio: Fraction  # prod_j Pr[E_j | prefix] / Pr[doc not in C]
    steps: int       # non-EOS tokens generated (EOS round still enters the ratio)

    def value(self, rho) -> float:
        return math.log(self.ratio) - self.steps * math.log(Fraction(rho))


@dataclass
class CompositionBound:
    dataset: int
    document: str
    prompt: str
    rho: Fraction
    always_credits: bool
    terms: list[BoundTerm] = field(default_factory=list)

    def bound(self, rho=None) -> float:
        """Max term value at the given (or stored) ratio; -inf if no terms."""
        rho = self.rho if rho is None else Fraction(rho)
        if self.always_credits or not self.terms:
            return -INFINITY
        return max(t.value(rho) for t in self.terms)

    def dominated_by(self, rho_prime) -> bool:
        """Exact check that ln(rho') is at least every term value."""
        if self.always_credits:
            return True
        if rho_prime == INFINITY:
            return True
        rho_prime = Fraction(rho_prime)
        return all(rho_prime * self.rho ** t.steps >= t.ratio for t in self.terms)


def composition_lower_bound(M: CreditingPredictor, dataset: int, document: str,
                            prompt: str, rho, count_eos_step: bool = False) -> CompositionBound:
    """Evaluate the bound for one (dataset, document, prompt) triple.

    ``count_eos_step`` switches the step count to include the EOS-emitting
    round; the default counts only generated non-EOS tokens, matching the
    convention of the worked two-token instance. The per-step no-credit
    probabilities are evaluated on the full dataset in every round.
    """
    rho = Fraction(rho)
    doc_bit = M.universe.document_bit(document)
    if not dataset & doc_bit:
        raise ValueError(f"document {document!r} is not in the dataset")
    traces = trace_distribution(M, dataset, prompt)

    pr_not_credited = Fraction(0)
    groups: dict[tuple[str, int], None] = {}
    for trace, mass in traces.items():
        union = 0
        for _, credit in trace:
            union |= credit
        if union & doc_bit:
            continue
        pr_not_credited += mass
        output = prompt + "".join(tok for tok, _ in trace if tok != EOS)
        groups[(output, union)] = None

    if pr_not_credited == 0:
        return CompositionBound(dataset, document, prompt, rho, always_credits=True)

    bound = CompositionBound(dataset, document, prompt, rho, always_credits=False)
    escape_cache: dict[str, Fraction] = {}

    def no_credit_prob(prefix: str) -> Fraction:
        cached = escape_cache.get(prefix)
        if cached is None:
            cached = sum((m for (_, credit), m in M.step(dataset, prefix).items()
                          if not credit & doc_bit), Fraction(0))
            escape_cache[prefix] = cached
        return cached

    for output, union in groups:
        generated = output[len(prompt):]
        product = Fraction(1)
        for j in range(len(generated) + 1):  # +1: the terminal EOS round
            product *= no_credit_prob(output[:len(prompt) + j])
        steps = len(generated) + 1 if count_eos_step else len(generated)
        bound.terms.append(BoundTerm(output, union, product / pr_not_credited, steps))
    return bound


class PreconditionError(ValueError):
    """The next-token predictor does not pass at the supplied ratio."""


@dataclass(frozen=True)
class Theorem4Result:
    ok: bool
    counterexample: Optional[tuple]  # (dataset, document, prompt, BoundTerm)

    def __bool__(self) -> bool:
        return self.ok


def verify_composition_bound(M: CreditingPredictor, rho, rho_prime,
                             count_eos_step: bool = False) -> Theorem4Result:
    """Check the bound across every triple of a predictor.

    Requires that the next-token level passes at (rho, 0). ``rho_prime`` is
    the rollout's ratio bound (may be INFINITY). A False result would
    falsify the implementation, not the theorem.
    """
    rho = Fraction(rho)
    if not check_cca(M, NEXT_TOKEN, rho, 0).overall:
        raise PreconditionError(f"next-token check fails at rho={rho}, delta=0")
    for prompt in iter_prompts(M.tokens(), M.horizon):
        for dataset, document in iter_triples(M):
            cb = composition_lower_bound(M, dataset, document, prompt, rho,
                                         count_eos_step=count_eos_step)
            if cb.always_credits or rho_prime == INFINITY:
                continue
            for term in cb.terms:
                if Fraction(rho_prime) * rho ** term.steps < term.ratio:
                    return Theorem4Result(False, (dataset, document, prompt, term))
    return Theorem4Result(True, None)
