"""Command-line experiments with machine-readable inputs and outputs.

Every command is deterministic given its configuration and seed. Rationals
are written as "num/den" strings everywhere; floating-point columns carry an
"_approx" suffix. Exit codes: 0 = property holds, 1 = property violated,
2 = usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
from fractions import Fraction
from typing import Optional, Sequence

from .dist import INFINITY, rho_from_epsilon
from .models import build_counterexample, build_hard_model
from .modelfile import ModelFileError, load as load_model
from .retrofit import (find_z, findz_query_count, closed_form_credit_prob,
                       optimal_augmentation_oracle, output_margins,
                       solve_optimal_augmentation)
from .verify import LEVELS, NEXT_TOKEN, ROLLOUT, check_cca, min_epsilon_cca

EXIT_PASS = 0
EXIT_VIOLATED = 1
EXIT_USAGE = 2


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from exc


def _fmt(value) -> str:
    if value is None:
        return ""
    if value == INFINITY:
        return "inf"
    return str(Fraction(value))


class UsageError(Exception):
    pass


def _resolve(args: argparse.Namespace, key: str, default=None, cast=None,
             required: bool = False):
    """CLI flag, else --config value, else default."""
    value = getattr(args, key.replace("-", "_"), None)
    if value is None:
        value = (getattr(args, "_config", None) or {}).get(key, default)
        if value is not None and cast is not None:
            value = cast(value)
    if required and value is None:
        raise UsageError(f"missing required parameter: {key}")
    return value


def _load_config(args: argparse.Namespace) -> None:
    args._config = None
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            args._config = json.load(fh)


def _write_rows(path: Optional[str], fmt: str, header: list[str], rows: list[list]):
    if fmt == "json":
        payload = [dict(zip(header, row)) for row in rows]
        text = json.dumps(payload, indent=2) + "\n"
    else:
        import io
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        text = buf.getvalue()
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_rho(args: argparse.Namespace, prove: str) -> Fraction:
    """rho from --rho, or from --epsilon with sound directional rounding."""
    rho = _resolve(args, "rho", cast=Fraction)
    epsilon = _resolve(args, "epsilon", cast=float)
    if rho is not None:
        return Fraction(rho)
    if epsilon is not None:
        direction = "down" if prove == "violation" else "up"
        rho = rho_from_epsilon(epsilon, direction)
        print(f"# epsilon {epsilon} converted to rho ~ {float(rho):.12g} "
              f"(rounded {direction} to soundly prove a {prove})")
        return rho
    raise UsageError("one of --rho or --epsilon is required")


def cmd_counterexample(args: argparse.Namespace) -> int:
    p = _resolve(args, "p", default=Fraction(1, 10), cast=Fraction)
    rho = _resolve_rho(args, prove="violation")
    delta = _resolve(args, "delta", default=Fraction(0), cast=Fraction)
    if not p < (1 - delta) / rho:
        raise UsageError(
            f"parameters must satisfy p < (1/rho)*(1 - delta); "
            f"got p = {p} >= {(1 - delta) / rho}")
    M = build_counterexample(p)
    next_report = check_cca(M, NEXT_TOKEN, 1, 0)
    roll_report = check_cca(M, ROLLOUT, rho, delta)
    roll_eps = min_epsilon_cca(M, ROLLOUT)
    empty_prompt = next(t for t in roll_report.triples
                        if t.prompt == "" and not t.always_credits)
    result = {
        "p": _fmt(p),
        "rho": _fmt(rho),
        "delta": _fmt(delta),
        "next_token_pass_at_rho_1": next_report.overall,
        "rollout_pass": roll_report.overall,
        "rollout_directional_min_ratio": _fmt(empty_prompt.min_ratio_forward),
        "rollout_full_min_ratio": _fmt(roll_eps.overall),
        "rollout_witness_event": None if roll_report.overall else
            [repr(o) for o in sorted(roll_report.violations()[0].verdict.witness_event,
                                     key=repr)],
    }
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    reproduced = next_report.overall and not roll_report.overall
    print(f"counterexample: next-token {'PASS' if next_report.overall else 'FAIL'}, "
          f"rollout {'FAIL' if not roll_report.overall else 'PASS'} at rho={rho} "
          f"-> {'reproduced' if reproduced else 'NOT reproduced'}")
    return EXIT_PASS if reproduced else EXIT_VIOLATED


def cmd_retrofit_opt(args: argparse.Namespace) -> int:
    z = _resolve(args, "z", required=True)
    ell = _resolve(args, "ell", cast=int)
    if ell is not None and ell != len(z):
        raise UsageError(f"--ell {ell} does not match len(z) = {len(z)}")
    gamma = _resolve(args, "gamma", default=Fraction(1, 2), cast=Fraction)
    rho = _resolve(args, "rho", default=Fraction(1), cast=Fraction)
    prompts = args.prompt or [z[:k] for k in range(len(z) + 1)]
    base = build_hard_model(z, gamma, rho)
    rows = []
    all_equal = True
    for prompt in prompts:
        solution = solve_optimal_augmentation(output_margins(base, prompt), rho)
        closed = closed_form_credit_prob(z, gamma, prompt)
        all_equal &= solution.credit_prob == closed
        rows.append([prompt, _fmt(solution.credit_prob), _fmt(closed)])
    _write_rows(args.out, args.format or "csv",
                ["prompt", "solver_prob", "closed_form_prob"], rows)
    print(f"retrofit-opt: solver {'==' if all_equal else '!='} closed form "
          f"over {len(prompts)} prompts (z={z}, gamma={gamma}, rho={rho})")
    return EXIT_PASS if all_equal else EXIT_VIOLATED


def cmd_findz_scaling(args: argparse.Namespace) -> int:
    ell_min = _resolve(args, "ell-min", default=4, cast=int)
    ell_max = _resolve(args, "ell-max", default=12, cast=int)
    gamma = _resolve(args, "gamma", default=Fraction(1, 2), cast=Fraction)
    alpha = _resolve(args, "alpha", default=Fraction(0), cast=Fraction)
    rho = _resolve(args, "rho", default=Fraction(1), cast=Fraction)
    trials = _resolve(args, "trials", default=20, cast=int)
    seed = _resolve(args, "seed", cast=int, required=True)
    tau = _resolve(args, "tau", cast=float)
    rows = []
    all_pass = True
    for ell in range(ell_min, ell_max + 1):
        _, total_queries = findz_query_count(ell, gamma, alpha, tau=tau)
        successes = 0
        for i in range(trials):
            rng = random.Random(seed ^ i)  # per-trial seed: master xor index
            z = "".join(rng.choice("01") for _ in range(ell))
            oracle = optimal_augmentation_oracle(z, gamma, rho)
            result = find_z(oracle, ell, gamma, alpha, rng, tau=tau, true_z=z)
            assert result.queries_used == total_queries
            successes += bool(result.success)
        rate = successes / trials
        all_pass &= rate >= 2 / 3
        rows.append([ell, total_queries, 2 ** ell, f"{rate:.4f}"])
    _write_rows(args.out, args.format or "csv",
                ["ell", "findz_queries", "bruteforce_worstcase", "success_rate_approx"],
                rows)
    print(f"findz-scaling: ell={ell_min}..{ell_max}, {trials} trials each, "
          f"success >= 2/3 {'everywhere' if all_pass else 'VIOLATED'}")
    return EXIT_PASS if all_pass else EXIT_VIOLATED


def cmd_verify(args: argparse.Namespace) -> int:
    level = _resolve(args, "level", default=ROLLOUT)
    if level not in LEVELS:
        raise UsageError(f"--level must be one of {LEVELS}")
    rho = _resolve_rho(args, prove="pass")
    delta = _resolve(args, "delta", default=Fraction(0), cast=Fraction)
    try:
        model = load_model(args.model)
    except (ModelFileError, OSError) as exc:
        raise UsageError(f"cannot load model file: {exc}") from exc
    M = model.predictor()
    report = check_cca(M, level, rho, delta)
    text = json.dumps(report.to_json_dict(M.universe), indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"verify: {level} level at rho={rho}, delta={delta} -> "
          f"{'PASS' if report.overall else 'FAIL'}")
    return EXIT_PASS if report.overall else EXIT_VIOLATED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccakit",
        description="Exact credit-attribution checks and query-complexity experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="JSON file supplying defaults for any flag")
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.add_argument("--format", choices=("csv", "json"))

    p = sub.add_parser("counterexample",
                       help="non-composition instance: next-token passes, rollout fails")
    common(p)
    p.add_argument("--p", type=_rational)
    p.add_argument("--rho", type=_rational)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=_rational)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("retrofit-opt",
                       help="optimal augmentation solver vs the closed form")
    common(p)
    p.add_argument("--z")
    p.add_argument("--ell", type=int)
    p.add_argument("--gamma", type=_rational)
    p.add_argument("--rho", type=_rational)
    p.add_argument("--prompt", action="append",
                   help="prompt to tabulate (repeatable; default: all prefixes of z)")
    p.set_defaults(func=cmd_retrofit_opt)

    p = sub.add_parser("findz-scaling",
                       help="bitwise search vs brute-force query counts per length")
    common(p)
    p.add_argument("--ell-min", type=int, dest="ell_min")
    p.add_argument("--ell-max", type=int, dest="ell_max")
    p.add_argument("--gamma", type=_rational)
    p.add_argument("--alpha", type=_rational)
    p.add_argument("--rho", type=_rational)
    p.add_argument("--trials", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_findz_scaling)

    p = sub.add_parser("verify", help="check a tabular model file")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--rho", type=_rational)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=_rational)
    p.add_argument("--level", choices=LEVELS)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _load_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
