"""Exact finite probability distributions and closeness primitives.

All masses are `fractions.Fraction`, so every check in this module is exact:
nothing is ever rounded. The multiplicative closeness bound is supplied as a
rational ratio ``rho`` (standing for e**epsilon). Since e**epsilon is
irrational for epsilon != 0, epsilon itself never enters exact checks; it
only appears in floating-point display helpers and in the directional
float-to-rational conversion `rho_from_epsilon`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Optional

Rational = Fraction
INFINITY = math.inf

FORWARD = "P <= rho*Q + delta"
REVERSE = "Q <= rho*P + delta"


class DomainMismatchError(ValueError):
    """Two distributions with different declared outcome spaces were mixed."""


class FiniteDist:
    """Immutable finite probability distribution with exact rational masses.

    Zero-mass outcomes are pruned on construction and the remaining masses
    must sum to exactly 1. An optional ``space`` (frozenset of admissible
    outcomes) may be declared; binary operations refuse to mix distributions
    whose declared spaces differ.
    """

    __slots__ = ("_entries", "space")

    def __init__(self, entries: Mapping[Hashable, Fraction | int],
                 space: Optional[frozenset] = None):
        clean: dict = {}
        total = Fraction(0)
        for outcome, mass in entries.items():
            mass = Fraction(mass)
            if mass < 0 or mass > 1:
                raise ValueError(f"mass {mass} for outcome {outcome!r} is outside [0, 1]")
            if mass == 0:
                continue
            if space is not None and outcome not in space:
                raise ValueError(f"outcome {outcome!r} is not in the declared space")
            clean[outcome] = mass
            total += mass
        if total != 1:
            raise ValueError(f"masses sum to {total}, expected exactly 1")
        self._entries = clean
        self.space = space

    @classmethod
    def point(cls, outcome: Hashable, space: Optional[frozenset] = None) -> "FiniteDist":
        return cls({outcome: Fraction(1)}, space=space)

    def __getitem__(self, outcome: Hashable) -> Fraction:
        return self._entries.get(outcome, Fraction(0))

    def __iter__(self) -> Iterator:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    @property
    def support(self) -> frozenset:
        return frozenset(self._entries)

    def prob(self, event: Iterable[Hashable]) -> Fraction:
        """Exact probability of an event (any iterable of outcomes)."""
        return sum((self._entries.get(o, Fraction(0)) for o in set(event)), Fraction(0))

    def marginal(self, fn: Callable[[Hashable], Hashable]) -> "FiniteDist":
        """Pushforward along ``fn``, summing masses that collide."""
        out: dict = {}
        for outcome, mass in self._entries.items():
            key = fn(outcome)
            out[key] = out.get(key, Fraction(0)) + mass
        return FiniteDist(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return hash(frozenset(self._entries.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{o!r}: {m}" for o, m in sorted(
            self._entries.items(), key=lambda kv: repr(kv[0])))
        return f"FiniteDist({{{body}}})"


@dataclass(frozen=True)
class ClosenessVerdict:
    """Outcome of a two-sided (rho, delta) closeness check.

    When ``close`` is False, ``witness_event`` violates the inequality named
    by ``direction`` and ``slack`` is the (positive) size of the violation.
    When ``close`` is True, ``slack`` is the largest value of
    P(E) - rho*Q(E) - delta over both tight events (always <= 0).
    """

    close: bool
    witness_event: Optional[frozenset]
    direction: Optional[str]
    slack: Fraction


def _check_spaces(P: FiniteDist, Q: FiniteDist) -> None:
    if P.space is not None and Q.space is not None and P.space != Q.space:
        raise DomainMismatchError("distributions are declared over different outcome spaces")


def one_sided_slack(P: FiniteDist, Q: FiniteDist, rho: Fraction, delta: Fraction):
    """Max of P(E) - rho*Q(E) - delta over all events, with a maximizing event.

    The maximum is attained by the tight event {o : P(o) > rho*Q(o)}, since
    adding any other outcome cannot increase the difference.
    """
    event = frozenset(o for o in P.support | Q.support if P[o] > rho * Q[o])
    slack = P.prob(event) - rho * Q.prob(event) - delta
    return slack, event


def ratio_close(P: FiniteDist, Q: FiniteDist, rho, delta=0) -> ClosenessVerdict:
    """Exactly decide whether P(E) <= rho*Q(E) + delta and vice versa for all E."""
    _check_spaces(P, Q)
    rho = Fraction(rho)
    delta = Fraction(delta)
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    if not 0 <= delta <= 1:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    fwd_slack, fwd_event = one_sided_slack(P, Q, rho, delta)
    if fwd_slack > 0:
        return ClosenessVerdict(False, fwd_event, FORWARD, fwd_slack)
    rev_slack, rev_event = one_sided_slack(Q, P, rho, delta)
    if rev_slack > 0:
        return ClosenessVerdict(False, rev_event, REVERSE, rev_slack)
    return ClosenessVerdict(True, None, None, max(fwd_slack, rev_slack))


def min_ratio(P: FiniteDist, Q: FiniteDist):
    """Smallest rho with P(o) <= rho*Q(o) pointwise: max of P(o)/Q(o) on supp(P).

    Returns `INFINITY` (math.inf) if some outcome has P(o) > 0 = Q(o).
    Pointwise domination is equivalent to event-wise domination at delta = 0,
    so this is also the smallest rho passing the forward event check.
    """
    _check_spaces(P, Q)
    best = Fraction(0)
    for outcome, mass in P.items():
        q = Q[outcome]
        if q == 0:
            return INFINITY
        best = max(best, mass / q)
    return best


def tv_distance(P: FiniteDist, Q: FiniteDist) -> Fraction:
    """Exact total variation distance (1/2) * sum |P(o) - Q(o)|."""
    _check_spaces(P, Q)
    total = Fraction(0)
    for outcome in P.support | Q.support:
        total += abs(P[outcome] - Q[outcome])
    return total / 2


def sample(dist: FiniteDist, rng) -> Hashable:
    """Draw an outcome using the injected rng (53 random bits per draw)."""
    r = Fraction(rng.getrandbits(53), 2 ** 53)
    acc = Fraction(0)
    outcome = None
    for outcome, mass in dist.items():
        acc += mass
        if r < acc:
            return outcome
    return outcome  # r landed in the negligible tail; return the last outcome


def rho_from_epsilon(epsilon: float, direction: str) -> Fraction:
    """Convert a float epsilon to an exact rational rho = e**epsilon.

    ``direction`` is "down" or "up" and states which way the conversion
    rounds: round down to soundly prove a violation (the true bound is at
    least as strict), round up to soundly prove closeness. Two ulps of margin
    cover the rounding error of math.exp.
    """
    value = math.exp(epsilon)
    if direction == "down":
        value = math.nextafter(math.nextafter(value, 0.0), 0.0)
    elif direction == "up":
        value = math.nextafter(math.nextafter(value, INFINITY), INFINITY)
    else:
        raise ValueError(f"direction must be 'down' or 'up', got {direction!r}")
    return Fraction(value)


def epsilon_from_rho(rho) -> float:
    """ln(rho) for display only; exact checks always use rho itself."""
    if rho == INFINITY:
        return INFINITY
    return math.log(Fraction(rho))
