"""Trial data container and CSV ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"
MISSING = {"", "na", "nan", "null", "none", "."}


@dataclass(eq=False)
class Dataset:
    """Observed trial data.

    ``X_main`` carries the main-effect covariates (intercept first when
    present); ``X_index`` the covariates entering the single index.  ``y``
    and ``a`` may be ``None`` for prediction-only data.
    """

    y: np.ndarray | None
    a: np.ndarray | None
    X_main: np.ndarray
    X_index: np.ndarray
    pi0: float
    pi1: float
    main_names: list[str] = field(default_factory=list)
    index_names: list[str] = field(default_factory=list)
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.X_main)
        if len(self.X_index) != n:
            raise DataError("X_main and X_index have different row counts")
        if not self.main_names:
            self.main_names = [f"m{j}" for j in range(self.X_main.shape[1])]
        if not self.index_names:
            self.index_names = [f"x{j + 1}" for j in range(self.X_index.shape[1])]
        if not self.ids:
            self.ids = [str(i) for i in range(n)]
        if len(set(self.main_names)) != len(self.main_names) or \
                len(set(self.index_names)) != len(self.index_names):
            raise DataError("column names must be unique")

    @property
    def n(self) -> int:
        return len(self.X_main)

    @property
    def p(self) -> int:
        return self.X_index.shape[1]

    @property
    def p_main(self) -> int:
        return self.X_main.shape[1]

    def check_trial(self):
        """Require a complete two-arm trial (for fitting)."""
        if self.y is None or self.a is None:
            raise DataError("fitting requires outcome and arm columns")
        if self.n == 0:
            raise DataError("no complete cases")
        arms = set(np.unique(self.a).tolist())
        if not arms <= {0, 1}:
            raise DataError("arm must be coded 0/1")
        if arms != {0, 1}:
            raise DataError("both treatment arms must be present")
        return self


def make_dataset(y, a, X_index, X_main=None, pi=None, add_intercept=True,
                 index_names=None, main_names=None, ids=None) -> Dataset:
    """Build a :class:`Dataset` from arrays.

    ``X_main`` defaults to ``X_index``.  ``pi`` is ``(pi0, pi1)``; when
    omitted the sample arm proportions are used.
    """
    X_index = np.asarray(X_index, dtype=float)
    if X_index.ndim == 1:
        X_index = X_index[:, None]
    index_names = list(index_names) if index_names is not None else \
        [f"x{j + 1}" for j in range(X_index.shape[1])]
    if X_main is None:
        X_main = X_index.copy()
        main_names = list(index_names) if main_names is None else list(main_names)
    else:
        X_main = np.asarray(X_main, dtype=float).reshape(len(X_index), -1)
        main_names = list(main_names) if main_names is not None else \
            [f"z{j + 1}" for j in range(X_main.shape[1])]
    if add_intercept:
        X_main = np.column_stack([np.ones(len(X_index)), X_main])
        main_names = [INTERCEPT] + main_names
    a = None if a is None else np.asarray(a).astype(int)
    if pi is None:
        if a is None:
            raise DataError("randomization probabilities required without an arm column")
        pi1 = float(np.mean(a))
        pi = (1.0 - pi1, pi1)
    ds = Dataset(None if y is None else np.asarray(y, dtype=float), a, X_main, X_index,
                 float(pi[0]), float(pi[1]), main_names, index_names,
                 [str(i) for i in ids] if ids is not None else [])
    return ds


def _parse_float(text):
    s = text.strip()
    if s.lower() in MISSING:
        return None
    return float(s)


def ingest(path, outcome: str | None, arm: str | None, main_cols, index_cols,
           id_col: str | None = None, pi=None, require_trial: bool = True) -> tuple[Dataset, int]:
    """Read a CSV with a header row into a :class:`Dataset`.

    Rows with a missing value in any used column are dropped (complete-case
    analysis).  Returns the dataset and the number of dropped rows.
    """
    main_cols = list(main_cols)
    index_cols = list(index_cols)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            if require_trial:
                raise DataError(f"{path}: empty file (no header)") from None
            header = list(dict.fromkeys(main_cols + index_cols + ([id_col] if id_col else [])))
        rows = list(reader)

    numeric = list(dict.fromkeys(main_cols + index_cols))
    needed = list(numeric)
    if require_trial:
        needed += [outcome, arm]
    if id_col:
        needed.append(id_col)
    missing = [c for c in needed if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")
    col = {name: header.index(name) for name in header}

    has_trial = outcome in col and arm in col if outcome and arm else False
    ys, arms, feats, ids = [], [], [], []
    dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vals = [_parse_float(row[col[c]]) for c in numeric]
            yv = _parse_float(row[col[outcome]]) if has_trial else 0.0
            av = _parse_float(row[col[arm]]) if has_trial else 0.0
        except (ValueError, IndexError):
            raise DataError(f"{path}: row {lineno}: non-numeric value in a used column") from None
        if any(v is None for v in vals) or yv is None or av is None:
            dropped += 1
            continue
        if has_trial and av not in (0.0, 1.0):
            raise DataError(f"{path}: row {lineno}: arm value {row[col[arm]]!r} is not 0/1")
        feats.append(vals)
        ys.append(yv)
        arms.append(int(av))
        ids.append(row[col[id_col]].strip() if id_col else str(lineno - 2))
    if dropped:
        log.warning("%s: dropped %d row(s) with missing values (complete cases: %d)",
                    path, dropped, len(feats))

    F = np.asarray(feats, dtype=float).reshape(len(feats), len(numeric))
    pos = {c: j for j, c in enumerate(numeric)}
    X_main = F[:, [pos[c] for c in main_cols]]
    X_index = F[:, [pos[c] for c in index_cols]]
    y = np.asarray(ys) if has_trial else None
    a = np.asarray(arms, dtype=int) if has_trial else None

    if require_trial:
        if not feats:
            raise DataError(f"{path}: no complete cases")
        if pi is None:
            pi1 = float(np.mean(a))
            pi = (1.0 - pi1, pi1)
    elif pi is None:
        pi = (0.5, 0.5)
    ds = Dataset(y, a, np.column_stack([np.ones(len(F)), X_main]), X_index,
                 float(pi[0]), float(pi[1]), [INTERCEPT] + main_cols, index_cols, ids)
    if require_trial:
        ds.check_trial()
    return ds, dropped
