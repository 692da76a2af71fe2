"""Observation datasets and their comma-separated file format.

File layout: optional ``#`` comment lines (provenance), one header row with
the variable names followed by ``objective``, then one row per observation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from tlbo.space import CATEGORICAL, INTEGER, Configuration, DomainError, SearchSpace

OBJECTIVE = "objective"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ObservationDataset:
    configs: tuple[Configuration, ...]
    values: np.ndarray
    task_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple(self.configs))
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if len(self.configs) != vals.shape[0]:
            raise ValueError("configs and values differ in length")

    def __len__(self):
        return len(self.configs)

    def encoded(self, space: SearchSpace) -> np.ndarray:
        return space.encode_many(self.configs)

    def append(self, config: Configuration, value: float) -> "ObservationDataset":
        return ObservationDataset(
            self.configs + (config,), np.append(self.values, value), self.task_id
        )


def _format_value(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def dataset_to_csv(
    space: SearchSpace, data: ObservationDataset, header: Sequence[str] = ()
) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(space.names + [OBJECTIVE])
    for cfg, y in zip(data.configs, data.values):
        w.writerow([_format_value(v) for v in cfg.values] + [repr(float(y))])
    return buf.getvalue()


def write_dataset(path, space, data, header=()) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dataset_to_csv(space, data, header), encoding="utf-8")
    tmp.replace(path)


def _parse_cell(var, text: str, lineno: int):
    try:
        if var.kind == CATEGORICAL:
            value = text
            if value not in var.categories:
                # labels such as None are stored by their text form
                match = [c for c in var.categories if str(c) == text]
                if not match:
                    raise DomainError(f"{var.name}: {text!r} not a category")
                value = match[0]
            return var.check(value)
        number = float(text)
        if var.kind == INTEGER:
            if number != int(number):
                raise DomainError(f"{var.name}: {text!r} is not an integer")
            number = int(number)
        return var.check(number)
    except (ValueError, DomainError) as exc:
        raise DatasetFormatError(f"line {lineno}: {exc}") from exc


def parse_dataset(text: str, space: SearchSpace, task_id: str = "") -> ObservationDataset:
    configs, values = [], []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        row = next(csv.reader([line]))
        if header is None:
            header = [h.strip() for h in row]
            if OBJECTIVE not in header:
                raise DatasetFormatError(f"line {lineno}: no {OBJECTIVE!r} column")
            missing = [n for n in space.names if n not in header]
            if missing:
                raise DatasetFormatError(f"line {lineno}: missing columns {missing}")
            cols = [header.index(n) for n in space.names]
            obj_col = header.index(OBJECTIVE)
            continue
        if len(row) != len(header):
            raise DatasetFormatError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        cfg = Configuration(
            tuple(_parse_cell(v, row[c].strip(), lineno) for v, c in zip(space.variables, cols))
        )
        try:
            y = float(row[obj_col])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: bad objective {row[obj_col]!r}") from exc
        if not np.isfinite(y):
            raise DatasetFormatError(f"line {lineno}: non-finite objective")
        configs.append(cfg)
        values.append(y)
    if not configs:
        raise DatasetFormatError("dataset has no rows")
    return ObservationDataset(tuple(configs), np.array(values), task_id)


def read_dataset(path, space: SearchSpace, task_id: str | None = None) -> ObservationDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    return parse_dataset(
        path.read_text(encoding="utf-8"), space, path.stem if task_id is None else task_id
    )
