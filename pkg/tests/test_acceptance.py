"""Acceptance suite: one test per criterion, in order, with runtime budgets.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line per
criterion. Each test also prints a short summary (visible with ``-s``).
"""

import math
import random
import time
from fractions import Fraction as F

import pytest

from ccakit.cli import EXIT_PASS, main
from ccakit.dist import (INFINITY, FiniteDist, ratio_close, tv_distance)
from ccakit.composition import composition_lower_bound, verify_composition_bound
from ccakit.models import (build_counterexample, build_hard_model,
                           rollout_distribution)
from ccakit.retrofit import (closed_form_credit_prob, find_z,
                             findz_query_count, optimal_augmentation_oracle,
                             output_margins, solve_optimal_augmentation)
from ccakit.verify import (NEXT_TOKEN, ROLLOUT, check_augmentation, check_cca,
                           condition_not_credited, credit_probability,
                           min_epsilon_cca)
from helpers import bisect_optimum, random_margins, random_tabular_predictor

GAMMAS = (F(1, 4), F(1, 2), F(3, 4))
RHOS = (F(1), F(3, 2), F(2))
ELLS = (2, 3, 4, 5, 6)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def random_z(rng, ell: int) -> str:
    return "".join(rng.choice("01") for _ in range(ell))


def non_prefix_prompts(rng, z: str, count: int) -> list:
    # length len(z)+1 is allowed: such prompts are never prefixes of z
    prompts = []
    while len(prompts) < count:
        length = rng.randint(1, len(z) + 1)
        candidate = random_z(rng, length)
        if not z.startswith(candidate) and candidate not in prompts:
            prompts.append(candidate)
    return prompts


@pytest.fixture(scope="module")
def grid_solutions():
    """Solver outputs for the (ell, gamma, rho) grid; reused by criteria 4/6/9."""
    rng = random.Random(20240)
    cells = []
    for ell in ELLS:
        for gamma in GAMMAS:
            for rho in RHOS:
                z = random_z(rng, ell)
                prompts = [z[:k] for k in range(ell + 1)]
                prompts += non_prefix_prompts(rng, z, 5)
                base = build_hard_model(z, gamma, rho)
                solutions = {
                    prompt: solve_optimal_augmentation(
                        output_margins(base, prompt), rho)
                    for prompt in prompts}
                cells.append((z, gamma, rho, base, solutions))
    return cells


@pytest.fixture(scope="module")
def random_margin_solutions():
    """Solver outputs on random margins; reused by criteria 5/6."""
    rng = random.Random(77501)
    instances = []
    for _ in range(500):
        margins = random_margins(rng)
        rho = F(rng.randint(1, 3)) + F(rng.randint(0, 3), 4)
        instances.append((margins, rho, solve_optimal_augmentation(margins, rho)))
    return instances


def solution_is_cca(sol) -> bool:
    joint = sol.joint_dist()
    if credit_probability(joint, 1) == 1:
        return True
    return ratio_close(condition_not_credited(joint, 1),
                       sol.counterfactual_joint(), sol.rho, 0).close


def test_criterion_01_counterexample_reproduction():
    with Timer() as t:
        M = build_counterexample(F(1, 10))
        assert check_cca(M, NEXT_TOKEN, 1, 0).overall
        for rho in (1, 2, 10, 100, 1000):
            assert not check_cca(M, ROLLOUT, rho, 0).overall
        report = check_cca(M, ROLLOUT, 1, 0)
        at_empty = next(th for th in report.triples
                        if th.prompt == "" and not th.always_credits)
        assert at_empty.min_ratio_forward == F(10)
        assert at_empty.min_ratio_reverse == INFINITY
        assert min_epsilon_cca(M, ROLLOUT).overall == INFINITY
    assert t.elapsed < 1.0
    print(f"criterion 1 PASS: next-token exact at rho=1, rollout fails up to "
          f"rho=1000, directional ratio 10, full ratio inf ({t.elapsed:.2f}s)")


def test_criterion_02_composition_instance():
    with Timer() as t:
        M = build_counterexample(F(1, 10))
        cb = composition_lower_bound(M, 1, "s1", "", rho=1)
        (term,) = cb.terms
        assert term.ratio == F(10)
        assert term.steps == 2
        assert cb.bound() == pytest.approx(math.log(10))
    assert t.elapsed < 1.0
    print(f"criterion 2 PASS: lower-bound term has ratio exactly 10 with "
          f"2 steps at rho=1 ({t.elapsed:.2f}s)")


def test_criterion_03_composition_campaign():
    with Timer() as t:
        rng = random.Random(31337)
        checked = 0
        for _ in range(200):
            n_docs = rng.choice((1, 1, 2))
            horizon = rng.choice((1, 2, 3)) if n_docs == 1 else rng.choice((1, 2))
            M = random_tabular_predictor(rng, n_docs=n_docs, horizon=horizon)
            rho = min_epsilon_cca(M, NEXT_TOKEN).overall
            assert rho != INFINITY
            rho_prime = min_epsilon_cca(M, ROLLOUT).overall
            result = verify_composition_bound(M, rho, rho_prime)
            assert result.ok, result.counterexample
            checked += 1
    assert checked == 200
    assert t.elapsed < 120.0
    print(f"criterion 3 PASS: composition bound holds on 200 random models "
          f"({t.elapsed:.1f}s)")


def test_criterion_04_closed_form_regression(grid_solutions):
    with Timer() as t:
        rows = 0
        for z, gamma, rho, base, solutions in grid_solutions:
            for prompt, sol in solutions.items():
                assert sol.credit_prob == closed_form_credit_prob(z, gamma, prompt)
                rows += 1
    assert rows == len(ELLS) * len(GAMMAS) * len(RHOS) * 5 + sum(
        (ell + 1) * len(GAMMAS) * len(RHOS) for ell in ELLS)
    assert t.elapsed < 60.0
    print(f"criterion 4 PASS: solver equals closed form on {rows} grid rows "
          f"({t.elapsed:.1f}s)")


def test_criterion_05_solver_vs_oracle(random_margin_solutions):
    with Timer() as t:
        tolerance = F(1, 10 ** 9)
        for margins, rho, sol in random_margin_solutions:
            assert abs(sol.R_star - bisect_optimum(margins, rho)) <= tolerance
            total = F(0)
            for y in margins.outputs:
                rate = sol.r[y]
                assert 0 <= rate <= 1
                assert margins.q[y] * sol.R_star <= rho * rate * margins.p[y]
                assert rate * margins.p[y] <= rho * margins.q[y] * sol.R_star
                total += rate * margins.p[y]
            assert total == sol.R_star
    assert len(random_margin_solutions) == 500
    assert t.elapsed < 120.0
    print(f"criterion 5 PASS: solver within 1e-9 of the oracle with exact "
          f"constraints on 500 instances ({t.elapsed:.1f}s)")


def test_criterion_06_solutions_are_valid_augmentations(grid_solutions,
                                                        random_margin_solutions):
    with Timer() as t:
        for z, gamma, rho, base, solutions in grid_solutions:
            def crediting(dataset, prompt, _solutions=solutions):
                sol = _solutions[prompt]
                return sol.joint_dist() if dataset else sol.counterfactual_joint()

            def base_law(dataset, prompt, _base=base):
                return rollout_distribution(_base, dataset, prompt)

            assert check_augmentation(crediting, base_law, [0, 1],
                                      list(solutions))
            for sol in solutions.values():
                assert solution_is_cca(sol)
        for margins, rho, sol in random_margin_solutions:
            base = FiniteDist({y: margins.p[y] for y in margins.outputs
                               if margins.p[y] > 0})
            assert sol.joint_dist().marginal(lambda oc: oc[0]) == base
            assert solution_is_cca(sol)
    print(f"criterion 6 PASS: every criterion 4-5 solution is an exact "
          f"augmentation and ratio-close at (rho, 0) ({t.elapsed:.1f}s)")


def test_criterion_07_findz_success_and_query_count():
    with Timer() as t:
        ell, gamma = 8, F(1, 2)
        n, total = findz_query_count(ell, gamma)
        assert (n, total) == (75, 1200)
        successes = 0
        for i in range(100):
            rng = random.Random(8800 + i)
            z = random_z(rng, ell)
            oracle = optimal_augmentation_oracle(z, gamma, 1)
            result = find_z(oracle, ell, gamma, 0, rng, true_z=z)
            assert result.queries_used == total
            successes += bool(result.success)
    rate = successes / 100
    assert rate >= 2 / 3
    assert t.elapsed < 60.0
    print(f"criterion 7 PASS: success rate {rate:.2f} over 100 trials, exactly "
          f"1200 queries each ({t.elapsed:.1f}s)")


def test_criterion_08_query_separation(tmp_path):
    with Timer() as t:
        out = tmp_path / "scaling.csv"
        code = main(["findz-scaling", "--ell-min", "4", "--ell-max", "12",
                     "--trials", "10", "--seed", "424242", "--out", str(out)])
        assert code == EXIT_PASS  # success rate >= 2/3 at every ell
        rows = {}
        for line in out.read_text().splitlines()[1:]:
            ell, queries, brute, rate = line.split(",")
            rows[int(ell)] = (int(queries), int(brute), float(rate))
        for ell, (queries, brute, rate) in rows.items():
            assert brute == 2 ** ell
            assert rate >= 2 / 3
        ratio_8 = rows[8][1] / rows[8][0]
        ratio_12 = rows[12][1] / rows[12][0]
        assert ratio_12 / ratio_8 >= 8
    assert t.elapsed < 300.0
    print(f"criterion 8 PASS: separation ratio grows {ratio_12 / ratio_8:.1f}x "
          f"from ell=8 to ell=12 ({t.elapsed:.1f}s)")


def test_criterion_09_rollout_tv_distance(grid_solutions):
    for z, gamma, rho, base, _ in grid_solutions:
        ell = len(z)
        tv = tv_distance(rollout_distribution(base, 1, ""),
                         rollout_distribution(base, 0, ""))
        assert tv == F(1, 2 ** (ell + 1)) * (1 - (1 - gamma) / rho)
        assert tv <= F(1, 2 ** ell)
    print("criterion 9 PASS: rollout marginal TV matches the closed form "
          "exactly on the full grid")
