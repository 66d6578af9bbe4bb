"""JSON serialization for tabular crediting predictors.

The on-disk format is canonical: rows sorted by (dataset, prompt), entries
sorted by (token, credit), masses in lowest terms as separate numerator and
denominator. Loading and re-emitting a canonical file is byte-identical.
Rows absent from the table default to the absorbing EOS step, so compact
files stay compact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .dist import FiniteDist
from .models import (EOS, CreditingPredictor, DataUniverse, iter_prompts)

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Malformed tabular model file; carries the offending row index."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


@dataclass(eq=False)
class TabularModel:
    """Explicit (dataset, prompt) -> next-token distribution table."""

    alphabet: tuple[str, ...]
    universe: DataUniverse
    horizon: int
    table: Mapping[tuple[int, str], FiniteDist]

    def predictor(self, name: str = "tabular") -> CreditingPredictor:
        absorbing = FiniteDist.point((EOS, 0))
        table = dict(self.table)

        def kernel(dataset: int, prompt: str) -> FiniteDist:
            return table.get((dataset, prompt), absorbing)

        return CreditingPredictor(alphabet=self.alphabet, universe=self.universe,
                                  horizon=self.horizon, kernel=kernel, name=name)

    def to_json_dict(self) -> dict:
        rows = []
        for (dataset, prompt) in sorted(self.table):
            dist = self.table[(dataset, prompt)]
            entries = [[token, credit, mass.numerator, mass.denominator]
                       for (token, credit), mass in sorted(dist.items())]
            rows.append({"dataset": dataset, "prompt": prompt, "entries": entries})
        return {
            "version": FORMAT_VERSION,
            "alphabet": list(self.alphabet),
            "universe": list(self.universe.documents),
            "horizon": self.horizon,
            "rows": rows,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


def from_json_dict(data: dict) -> TabularModel:
    try:
        alphabet = tuple(data["alphabet"])
        universe = DataUniverse(tuple(data["universe"]))
        horizon = int(data["horizon"])
        raw_rows = data["rows"]
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"missing or malformed field: {exc}") from exc
    table: dict[tuple[int, str], FiniteDist] = {}
    for index, row in enumerate(raw_rows):
        try:
            dataset = int(row["dataset"])
            prompt = str(row["prompt"])
            entries = {}
            for token, credit, num, den in row["entries"]:
                entries[(str(token), int(credit))] = Fraction(int(num), int(den))
            dist = FiniteDist(entries)
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ModelFileError(str(exc), row=index) from exc
        if dataset & ~universe.full_mask:
            raise ModelFileError(f"dataset mask {dataset} outside the universe", row=index)
        table[(dataset, prompt)] = dist
    return TabularModel(alphabet, universe, horizon, table)


def load(path) -> TabularModel:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"invalid JSON: {exc}") from exc
    return from_json_dict(data)


def tabulate(M: CreditingPredictor) -> TabularModel:
    """Materialize a predictor's kernel over all prompts up to its horizon.

    Absorbing rows are omitted; the loader restores them as the default.
    """
    table: dict[tuple[int, str], FiniteDist] = {}
    absorbing = FiniteDist.point((EOS, 0))
    for dataset in M.universe.subsets():
        for prompt in iter_prompts(M.tokens(), M.horizon):
            dist = M.step(dataset, prompt)
            if dist != absorbing:
                table[(dataset, prompt)] = dist
    return TabularModel(M.alphabet, M.universe, M.horizon, table)
