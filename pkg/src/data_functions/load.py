"""Load tabular datasets and their role schemas; write result files atomically.

A schema maps column names to roles. Columns the schema does not mention are
putative predictors. Every numeric column is parsed strictly: a missing,
non-numeric or non-finite cell stops the load with its exact location.
"""

from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass
from enum import StrEnum
import logging
import os
from pathlib import Path
import tempfile

from omegaconf import DictConfig, OmegaConf
import polars as pl

from ..utils.exceptions import ParseError, SchemaError, ValidationError  # noqa: TID252

logger = logging.getLogger(__name__)


class ColumnRole(StrEnum):
    """What a column contributes to the model."""

    RESPONSE = "response"
    LOCKED_IN = "locked_in"
    PUTATIVE = "putative"
    TIME = "time"
    EVENT = "event"
    ID = "id"
    IGNORE = "ignore"
    WEIGHTS = "weights"


_TEXT_ROLES = frozenset({ColumnRole.ID, ColumnRole.IGNORE})


@dataclass(frozen=True, eq=False)
class RawTable:
    """A parsed table with a role for every column."""

    frame: pl.DataFrame
    roles: dict[str, ColumnRole]

    def __post_init__(self) -> None:
        """Check the role layout."""
        missing = [c for c in self.roles if c not in self.frame.columns]
        if missing:
            raise SchemaError(f"roles name columns absent from the table: {missing}")
        counts = Counter(self.roles.values())
        survival = counts[ColumnRole.TIME] or counts[ColumnRole.EVENT]
        if survival:
            if counts[ColumnRole.TIME] != 1 or counts[ColumnRole.EVENT] != 1:
                raise SchemaError(
                    "survival tables need exactly one time and one event column"
                )
            if counts[ColumnRole.RESPONSE]:
                raise SchemaError("a survival table cannot also have a response column")
        elif counts[ColumnRole.RESPONSE] != 1:
            raise SchemaError(
                "expected exactly one response column, "
                f"found {counts[ColumnRole.RESPONSE]}"
            )
        if counts[ColumnRole.WEIGHTS] > 1:
            raise SchemaError("at most one weights column is allowed")
        if self.frame.height < 2:
            raise ValidationError(f"need at least 2 rows, got {self.frame.height}")

    @property
    def N(self) -> int:  # noqa: N802
        """Number of rows."""
        return self.frame.height

    @property
    def is_survival(self) -> bool:
        """True when the table carries a time/event pair."""
        return ColumnRole.TIME in self.roles.values()

    def columns(self, role: ColumnRole) -> list[str]:
        """Columns with ``role`` in table order."""
        return [c for c in self.frame.columns if self.roles[c] is role]

    def single(self, role: ColumnRole) -> str | None:
        """The one column with ``role``, or None."""
        found = self.columns(role)
        return found[0] if found else None

    def with_frame(
        self, frame: pl.DataFrame, roles: Mapping[str, ColumnRole] | None = None
    ) -> "RawTable":
        """Copy with a new frame; roles of dropped columns are forgotten."""
        merged = dict(self.roles if roles is None else roles)
        return RawTable(
            frame=frame,
            roles={c: merged.get(c, ColumnRole.PUTATIVE) for c in frame.columns},
        )


def load_schema(
    source: Path | str | Mapping[str, str] | DictConfig,
) -> dict[str, ColumnRole]:
    """Read a ``column: role`` mapping from a YAML file or a mapping.

    Raises:
        SchemaError: If the file is not a flat mapping or names an unknown role.
    """
    if isinstance(source, Path | str):
        loaded = OmegaConf.load(Path(source))
        if not isinstance(loaded, DictConfig):
            raise SchemaError(f"schema file '{source}' must be a key-value mapping")
        raw = OmegaConf.to_container(loaded, resolve=True)
    elif isinstance(source, DictConfig):
        raw = OmegaConf.to_container(source, resolve=True)
    else:
        raw = dict(source)
    assert isinstance(raw, dict)  # noqa: S101

    schema: dict[str, ColumnRole] = {}
    for column, role in raw.items():
        try:
            schema[str(column)] = ColumnRole(str(role))
        except ValueError as e:
            valid = ", ".join(r.value for r in ColumnRole)
            raise SchemaError(
                f"column '{column}' has unknown role '{role}' (valid: {valid})"
            ) from e
    return schema


def _read_header(path: Path) -> list[str]:
    head = pl.read_csv(path, has_header=False, n_rows=1, infer_schema=False)
    if head.is_empty():
        raise ParseError(f"'{path}' has no header row")
    names = [str(v) if v is not None else "" for v in head.row(0)]
    duplicates = sorted(c for c, n in Counter(names).items() if n > 1)
    if duplicates:
        raise SchemaError(f"duplicate header names in '{path}': {duplicates}")
    if any(not name.strip() for name in names):
        raise SchemaError(f"empty header name in '{path}'")
    return names


def _first_bad_cell(text: pl.DataFrame, numeric: list[str]) -> tuple[int, str] | None:
    """Earliest (row index, column) that does not parse to a finite float."""
    if not numeric:
        return None
    checks = [
        pl.col(c)
        .cast(pl.Float64, strict=False)
        .is_finite()
        .fill_null(False)
        .not_()
        .alias(c)
        for c in numeric
    ]
    flags = text.select(checks).with_row_index("row").filter(pl.any_horizontal(numeric))
    if flags.is_empty():
        return None
    first = flags.row(0, named=True)
    column = next(c for c in numeric if first[c])
    return int(first["row"]), column


def load_csv(
    path: Path | str,
    schema: Mapping[str, str] | Path | str | None = None,
) -> RawTable:
    """Parse a comma-separated file with a header row into a RawTable.

    Rows in ParseError are line numbers of the file, the header being line 1.

    Raises:
        SchemaError: For duplicate header names, schema columns absent from the
            file, or an invalid role layout.
        ParseError: For the first missing, non-numeric or non-finite cell.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file '{path}' does not exist")
    roles = {} if schema is None else load_schema(schema)
    header = _read_header(path)
    absent = [c for c in roles if c not in header]
    if absent:
        raise SchemaError(f"schema names columns absent from '{path}': {absent}")
    resolved = {c: roles.get(c, ColumnRole.PUTATIVE) for c in header}

    try:
        text = pl.read_csv(path, infer_schema=False)
    except pl.exceptions.ComputeError as e:
        raise ParseError(f"could not read '{path}': {e}") from e

    numeric = [c for c in header if resolved[c] not in _TEXT_ROLES]
    bad = _first_bad_cell(text, numeric)
    if bad is not None:
        row, column = bad
        value = text.item(row, column)
        raise ParseError(
            f"cell value {value!r} is not a finite number", row=row + 2, column=column
        )

    frame = text.with_columns(pl.col(c).cast(pl.Float64) for c in numeric)
    logger.info(
        "Loaded %s: %d rows, %d putative columns",
        path.name,
        frame.height,
        sum(r is ColumnRole.PUTATIVE for r in resolved.values()),
    )
    return RawTable(frame=frame, roles=resolved)


def save_text_atomic(path: Path | str, text: str) -> Path:
    """Write ``text`` to ``path`` through a sibling temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        Path(tmp_name).replace(path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path
