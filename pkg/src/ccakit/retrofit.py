"""Credit-optimal augmentation solving and oracle query experiments.

Given the two string marginals of a base rollout (document present vs
absent), the optimal way to add credit while preserving the marginal and
passing the ratio-closeness condition is a small linear program over
per-output non-credit rates. Its optimum is found exactly by a piecewise
linear breakpoint scan. The rest of the module is the oracle query model:
counting wrappers, Hoeffding-style crediting-probability estimation, the
bitwise hidden-prompt search, and the exponential brute-force baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from .dist import FiniteDist
from .models import (EOS, CreditingPredictor, build_hard_model,
                     rollout_distribution)


@dataclass(eq=False)
class OutputMargins:
    """Exact output-string masses with the single document present (p) and
    absent (q), over the union of both supports."""

    outputs: tuple[str, ...]
    p: Mapping[str, Fraction]
    q: Mapping[str, Fraction]

    def __post_init__(self):
        for name, vec in (("p", self.p), ("q", self.q)):
            total = sum((vec.get(y, Fraction(0)) for y in self.outputs), Fraction(0))
            if total != 1:
                raise ValueError(f"{name} masses sum to {total}, expected exactly 1")


def output_margins(M: CreditingPredictor, prompt: str) -> OutputMargins:
    """Margins of a base predictor's rollout for a singleton data universe."""
    if M.universe.size != 1:
        raise ValueError("output margins require a singleton data universe")
    present = rollout_distribution(M, 1, prompt)
    absent = rollout_distribution(M, 0, prompt)
    outputs = tuple(sorted(present.support | absent.support))
    return OutputMargins(outputs,
                         {y: present[y] for y in outputs},
                         {y: absent[y] for y in outputs})


@dataclass(eq=False)
class AugmentationSolution:
    """Optimal non-crediting mass and per-output non-credit rates.

    Invariants (all exact): R_star == sum_y r[y] * p_y, and for every output
    (1/rho) * q_y * R_star <= r[y] * p_y <= rho * q_y * R_star.
    """

    R_star: Fraction
    r: dict[str, Fraction]
    always_credit_outputs: frozenset[str]
    rho: Fraction
    margins: OutputMargins

    @property
    def credit_prob(self) -> Fraction:
        return 1 - self.R_star

    def joint_dist(self) -> FiniteDist:
        """Crediting law on the full dataset: (output, credited-bit) pairs."""
        entries: dict = {}
        for y in self.margins.outputs:
            p = self.margins.p[y]
            if p == 0:
                continue
            rate = self.r[y]
            entries[(y, 0)] = rate * p
            entries[(y, 1)] = (1 - rate) * p
        return FiniteDist(entries)

    def counterfactual_joint(self) -> FiniteDist:
        """Crediting law on the empty dataset: never credits."""
        return FiniteDist({(y, 0): self.margins.q[y] for y in self.margins.outputs
                           if self.margins.q[y] != 0})


def solve_optimal_augmentation(margins: OutputMargins, rho) -> AugmentationSolution:
    """Maximize the non-crediting mass R subject to the per-output sandwich
    (1/rho)*q_y*R <= r_y*p_y <= rho*q_y*R with r_y in [0, 1].

    The feasible R form an interval [0, R*]: R* is the minimum of the cap
    rho * min_y p_y/q_y (so lower rates stay <= 1) and the last point where
    the concave piecewise-linear U(R) = sum_y min(rho*q_y*R, p_y) still
    dominates R. Both are found exactly by a sorted breakpoint scan. Rates
    are then water-filled from their lower bounds, saturating outputs in
    lexicographic order.
    """
    rho = Fraction(rho)
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    p, q = margins.p, margins.q
    ys = margins.outputs
    always_credit = frozenset(y for y in ys if q[y] == 0 and p[y] > 0)

    if any(p[y] == 0 and q[y] > 0 for y in ys):
        # The counterfactual can emit an output the base never does: no
        # non-credit mass is feasible, so credit always.
        return AugmentationSolution(Fraction(0), {y: Fraction(0) for y in ys},
                                    always_credit, rho, margins)

    cap = min(1, min(rho * p[y] / q[y] for y in ys if q[y] > 0))

    by_break: dict[Fraction, list[str]] = {}
    for y in ys:
        if q[y] > 0:
            by_break.setdefault(p[y] / (rho * q[y]), []).append(y)

    saturated_p = Fraction(0)     # sum of p_y over saturated outputs
    slope = rho                   # rho * sum of q_y over unsaturated outputs
    R_star = None
    for brk in sorted(by_break):
        if brk >= cap:
            break
        # On the segment ending at brk, U(R) = saturated_p + slope * R.
        if saturated_p + slope * brk < brk:
            R_star = saturated_p / (1 - slope)
            break
        for y in by_break[brk]:
            saturated_p += p[y]
            slope -= rho * q[y]
    if R_star is None:
        # Last segment: feasibility at the cap itself.
        if saturated_p + slope * cap < cap:
            R_star = saturated_p / (1 - slope)
        else:
            R_star = cap

    r: dict[str, Fraction] = {}
    for y in ys:
        r[y] = q[y] * R_star / (rho * p[y]) if p[y] > 0 else Fraction(0)
    deficit = R_star - sum((r[y] * p[y] for y in ys), Fraction(0))
    assert deficit >= 0
    for y in ys:  # outputs are already sorted lexicographically
        if deficit == 0:
            break
        if p[y] == 0:
            continue
        high = min(rho * q[y] * R_star / p[y], Fraction(1))
        room = (high - r[y]) * p[y]
        take = min(deficit, room)
        r[y] += take / p[y]
        deficit -= take
    assert deficit == 0, "water-filling failed to reach the optimum"
    return AugmentationSolution(R_star, r, always_credit, rho, margins)


def closed_form_credit_prob(z: str, gamma, prompt: str) -> Fraction:
    """Crediting probability of the optimal augmentation of a hard-family
    rollout: gamma on prefixes of the hidden string, zero elsewhere."""
    return Fraction(gamma) if z.startswith(prompt) else Fraction(0)


def _sample_rollout(M: CreditingPredictor, dataset: int, prompt: str, rng) -> str:
    from .dist import sample as _sample
    cur = prompt
    while True:
        token, _ = _sample(M.step(dataset, cur), rng)
        if token == EOS:
            return cur
        cur = cur + token


class CountingOracle:
    """Wraps a crediting model, tallying sample and probability queries.

    Single-owner mutable object; parallel campaigns should construct
    independent oracles with independent seeds.
    """

    def __init__(self, model, keep_log: bool = False):
        self.model = model
        self.sample_count = 0
        self.prob_count = 0
        self.log: Optional[list] = [] if keep_log else None

    def sample(self, dataset: int, prompt: str, rng) -> tuple[str, bool]:
        self.sample_count += 1
        result = self.model.sample(dataset, prompt, rng)
        if self.log is not None:
            self.log.append(("sample", dataset, prompt, result))
        return result

    def prob(self, dataset: int, prompt: str, output: str, credited: bool) -> Fraction:
        self.prob_count += 1
        result = self.model.prob(dataset, prompt, output, credited)
        if self.log is not None:
            self.log.append(("prob", dataset, prompt, output, credited, result))
        return result


class OptimalAugmentedModel:
    """Exact credit-optimal augmentation of a hard-family rollout.

    Samples an output from the exact rollout, then credits the document with
    the conditional rate from the augmentation solver (its marginal crediting
    probability matches the closed form). Solutions are cached per prompt.
    """

    def __init__(self, z: str, gamma, rho):
        self.z = z
        self.gamma = Fraction(gamma)
        self.rho = Fraction(rho)
        self.base = build_hard_model(z, gamma, rho)
        self._solutions: dict[str, AugmentationSolution] = {}

    def solution(self, prompt: str) -> AugmentationSolution:
        sol = self._solutions.get(prompt)
        if sol is None:
            sol = solve_optimal_augmentation(output_margins(self.base, prompt), self.rho)
            self._solutions[prompt] = sol
        return sol

    def credit_prob(self, dataset: int, prompt: str) -> Fraction:
        if not dataset:
            return Fraction(0)
        return self.solution(prompt).credit_prob

    def sample(self, dataset: int, prompt: str, rng) -> tuple[str, bool]:
        output = _sample_rollout(self.base, dataset, prompt, rng)
        if not dataset:
            return output, False
        rate = self.solution(prompt).r[output]
        credited = Fraction(rng.getrandbits(53), 2 ** 53) < 1 - rate
        return output, credited

    def prob(self, dataset: int, prompt: str, output: str, credited: bool) -> Fraction:
        sol = self.solution(prompt)
        if not dataset:
            if credited:
                return Fraction(0)
            return sol.margins.q.get(output, Fraction(0))
        p = sol.margins.p.get(output, Fraction(0))
        if p == 0:
            return Fraction(0)
        rate = sol.r[output]
        return (1 - rate) * p if credited else rate * p


class AlphaPerturbedModel:
    """Crediting probabilities shifted by +alpha on prefixes of the hidden
    string (clamped to [0, 1]), credit drawn independently of the output.

    Realizes an additive approximation of the optimum without being an
    augmentation or closeness-compliant itself.
    """

    def __init__(self, z: str, gamma, rho, alpha):
        self.z = z
        self.gamma = Fraction(gamma)
        self.alpha = Fraction(alpha)
        self.base = build_hard_model(z, gamma, rho)
        self._margins: dict[str, OutputMargins] = {}

    def credit_prob(self, dataset: int, prompt: str) -> Fraction:
        if not dataset or not self.z.startswith(prompt):
            return Fraction(0)
        return min(max(self.gamma + self.alpha, Fraction(0)), Fraction(1))

    def _prompt_margins(self, prompt: str) -> OutputMargins:
        margins = self._margins.get(prompt)
        if margins is None:
            margins = output_margins(self.base, prompt)
            self._margins[prompt] = margins
        return margins

    def sample(self, dataset: int, prompt: str, rng) -> tuple[str, bool]:
        output = _sample_rollout(self.base, dataset, prompt, rng)
        c = self.credit_prob(dataset, prompt)
        credited = Fraction(rng.getrandbits(53), 2 ** 53) < c
        return output, credited

    def prob(self, dataset: int, prompt: str, output: str, credited: bool) -> Fraction:
        margins = self._prompt_margins(prompt)
        mass = (margins.p if dataset else margins.q).get(output, Fraction(0))
        c = self.credit_prob(dataset, prompt)
        return c * mass if credited else (1 - c) * mass


def optimal_augmentation_oracle(z: str, gamma, rho, keep_log: bool = False) -> CountingOracle:
    return CountingOracle(OptimalAugmentedModel(z, gamma, rho), keep_log=keep_log)


def alpha_perturbed_oracle(z: str, gamma, rho, alpha,
                           keep_log: bool = False) -> CountingOracle:
    return CountingOracle(AlphaPerturbedModel(z, gamma, rho, alpha), keep_log=keep_log)


def sample_size(tau: float, beta: float) -> int:
    """Hoeffding sample count for additive error tau at confidence 1 - beta."""
    if not 0 < tau < 1 or not 0 < beta < 1:
        raise ValueError("tau and beta must be in (0, 1)")
    return math.ceil(tau ** -2 * math.log(2 / beta))


def estimate_credit_probability(oracle: CountingOracle, dataset: int, prompt: str,
                                tau: float, beta: float, rng) -> float:
    """Empirical crediting frequency over sample_size(tau, beta) draws."""
    n = sample_size(tau, beta)
    hits = sum(1 for _ in range(n) if oracle.sample(dataset, prompt, rng)[1])
    return hits / n


def _findz_params(ell: int, gamma, alpha, tau, beta):
    gamma = float(gamma)
    alpha = float(alpha)
    if not alpha < gamma / 2:
        raise ValueError(f"alpha must be < gamma/2, got alpha={alpha}, gamma={gamma}")
    separation = (gamma - 2 * alpha) / 2
    if tau is None:
        tau = separation * (1 - 1e-2)
    elif not tau < separation:
        raise ValueError(f"tau must be < (gamma - 2*alpha)/2 = {separation}, got {tau}")
    if beta is None:
        beta = 1 / (6 * ell)
    return tau, beta


def findz_query_count(ell: int, gamma, alpha=0, tau=None, beta=None) -> tuple[int, int]:
    """(per-estimate sample count N, total 2*ell*N) for the bitwise search."""
    if tau is None or beta is None:
        tau_d, beta_d = _findz_params(ell, gamma, alpha, None, None)
        tau = tau_d if tau is None else tau
        beta = beta_d if beta is None else beta
    n = sample_size(float(tau), float(beta))
    return n, 2 * ell * n


@dataclass(frozen=True)
class FindZResult:
    recovered: str
    queries_used: int
    c0: tuple[float, ...]
    c1: tuple[float, ...]
    success: Optional[bool]


def find_z(oracle: CountingOracle, ell: int, gamma, alpha, rng,
           tau: Optional[float] = None, beta: Optional[float] = None,
           true_z: Optional[str] = None) -> FindZResult:
    """Recover the hidden biased prompt one bit at a time.

    At each of ell iterations, estimates the crediting probability after
    appending 0 and after appending 1, and keeps the bit with the larger
    estimate (ties go to 1). Uses 2*ell*sample_size(tau, beta) sample
    queries exactly.
    """
    tau, beta = _findz_params(ell, gamma, alpha, tau, beta)
    start = oracle.sample_count
    prefix = ""
    c0s: list[float] = []
    c1s: list[float] = []
    full = 1  # singleton universe: the only nonempty dataset
    for _ in range(ell):
        c0 = estimate_credit_probability(oracle, full, prefix + "0", tau, beta, rng)
        c1 = estimate_credit_probability(oracle, full, prefix + "1", tau, beta, rng)
        c0s.append(c0)
        c1s.append(c1)
        prefix += "0" if c0 > c1 else "1"
    return FindZResult(recovered=prefix,
                       queries_used=oracle.sample_count - start,
                       c0=tuple(c0s), c1=tuple(c1s),
                       success=None if true_z is None else prefix == true_z)


class DistributionProbeOracle:
    """Counts full next-token-distribution probes against a base predictor.

    Strictly stronger than sample or probability queries (it can simulate
    both), so query counts against it are honest worst-case lower bounds.
    """

    def __init__(self, model: CreditingPredictor):
        self.model = model
        self.probes = 0

    def probe(self, dataset: int, prompt: str) -> FiniteDist:
        self.probes += 1
        return self.model.step(dataset, prompt)


def brute_force_find_z(oracle: DistributionProbeOracle, ell: int) -> tuple[str, int]:
    """Probe every candidate prompt in lexicographic order until the biased
    one shows up. Returns (recovered string, probes used)."""
    half = Fraction(1, 2)
    uniform = FiniteDist({("0", 0): half, ("1", 0): half})
    for i in range(1 << ell):
        candidate = format(i, f"0{ell}b")
        if oracle.probe(1, candidate) != uniform:
            return candidate, oracle.probes
    raise ValueError("no biased prompt found; oracle does not wrap a hard-family model")
