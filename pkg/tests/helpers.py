"""Shared generators and independent oracles for the test suite.

The oracles here deliberately avoid the code paths they check: closeness is
re-decided by enumerating every event, and the augmentation optimum is
re-found by bisecting the raw sandwich-feasibility predicate.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from ccakit.dist import FiniteDist
from ccakit.models import (EOS, CreditingPredictor, DataUniverse, iter_prompts)
from ccakit.retrofit import OutputMargins


def submasks(mask: int):
    """All subsets of a bitmask, including 0 and the mask itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def random_masses(rng, count: int, denom: int = 64, strict: bool = True):
    """``count`` rational masses with denominator ``denom`` summing to 1."""
    if strict:
        cuts = sorted(rng.sample(range(1, denom), count - 1)) if count > 1 else []
    else:
        cuts = sorted(rng.choices(range(denom + 1), k=count - 1))
    edges = [0] + cuts + [denom]
    return [Fraction(edges[i + 1] - edges[i], denom) for i in range(count)]


def random_dist(rng, outcomes, denom: int = 64, strict: bool = False) -> FiniteDist:
    masses = random_masses(rng, len(outcomes), denom, strict=strict)
    return FiniteDist(dict(zip(outcomes, masses)))


def random_tabular_predictor(rng, n_docs: int = 1, horizon: int = 2,
                             tokens=("a", "b")) -> CreditingPredictor:
    """Random small predictor with exactly rational kernel masses.

    Every kernel row gives positive mass to every (token, credit subset)
    combination for a per-prompt token set, which keeps conditional and
    counterfactual supports aligned, so the next-token level always passes
    at some finite ratio.
    """
    universe = DataUniverse(tuple(f"s{i + 1}" for i in range(n_docs)))
    table = {}
    for prompt in iter_prompts(tokens, horizon - 1):
        k = rng.randint(1, len(tokens))
        toks = rng.sample(tokens, k)
        if rng.random() < 0.5:
            toks = toks + [EOS]
        for dataset in universe.subsets():
            outcomes = [(t, c) for t in toks for c in submasks(dataset)]
            table[(dataset, prompt)] = random_dist(rng, outcomes, strict=True)
    absorbing = FiniteDist.point((EOS, 0))

    def kernel(dataset: int, prompt: str) -> FiniteDist:
        return table.get((dataset, prompt), absorbing)

    return CreditingPredictor(alphabet=tuple(tokens) + (EOS,), universe=universe,
                              horizon=horizon, kernel=kernel, name="random-tabular")


def naive_close(P: FiniteDist, Q: FiniteDist, rho, delta) -> bool:
    """Brute-force closeness decision over all 2^n events."""
    rho = Fraction(rho)
    delta = Fraction(delta)
    outcomes = sorted(P.support | Q.support, key=repr)
    for size in range(len(outcomes) + 1):
        for event in itertools.combinations(outcomes, size):
            if P.prob(event) > rho * Q.prob(event) + delta:
                return False
            if Q.prob(event) > rho * P.prob(event) + delta:
                return False
    return True


def sandwich_feasible(margins: OutputMargins, rho, R) -> bool:
    """Existence of per-output non-credit rates achieving total mass R.

    Direct transcription of the interval-sandwich condition: each rate must
    sit between its two bounds and the bounds' totals must straddle R.
    """
    rho = Fraction(rho)
    R = Fraction(R)
    if R == 0:
        return True
    lo_total = Fraction(0)
    hi_total = Fraction(0)
    for y in margins.outputs:
        p, q = margins.p[y], margins.q[y]
        if p == 0:
            if q * R != 0:
                return False
            continue
        low = q * R / (rho * p)
        high = min(rho * q * R / p, Fraction(1))
        if low > high:
            return False
        lo_total += low * p
        hi_total += high * p
    return lo_total <= R <= hi_total


def bisect_optimum(margins: OutputMargins, rho, iters: int = 64) -> Fraction:
    """Independent optimum for the augmentation program.

    The feasible R form an interval starting at 0, so bisecting the
    feasibility predicate converges to the optimum; ``iters`` = 64 gives
    2**-64 resolution, far below the comparison tolerances in use.
    """
    if sandwich_feasible(margins, rho, 1):
        return Fraction(1)
    lo, hi = Fraction(0), Fraction(1)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if sandwich_feasible(margins, rho, mid):
            lo = mid
        else:
            hi = mid
    return lo


def random_margins(rng, n_outputs: int = None, denom: int = 64) -> OutputMargins:
    """Random margin instance; zero masses are allowed on either side."""
    if n_outputs is None:
        n_outputs = rng.randint(2, 8)
    outputs = tuple(f"y{i}" for i in range(n_outputs))
    p = dict(zip(outputs, random_masses(rng, n_outputs, denom, strict=False)))
    q = dict(zip(outputs, random_masses(rng, n_outputs, denom, strict=False)))
    return OutputMargins(outputs, p, q)
