"""Ingestion, normalization, labeling, windowing and chronological splitting.

Input files are per-stock CSVs with a header row: ``date, adj_close,
<feature...>``, ISO-8601 dates, UTF-8, ``.`` decimal separator.  Feature
columns must be nonnegative (log normalization has no meaning for signed
values); signed series must be shifted before ingestion, and the loader
rejects violations rather than silently transforming them.

Labels follow the day-over-day relative price change r = (p_t - p_{t-1}) /
p_{t-1}: the movement label is 1 for r at or above the upper dead-zone edge,
0 at or below the lower edge, and ABSTAIN strictly inside the dead zone
(default (-0.5%, +0.5%)); the volatility label is 1 exactly when |r| >= the
outlier threshold (default 5%).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date as _date
from pathlib import Path

import numpy as np

from . import serialize
from .errors import (
    ConfigError,
    DataIntegrityError,
    DomainError,
    ParseError,
    PreprocessingError,
    SchemaError,
)

logger = logging.getLogger(__name__)

ABSTAIN = -1
DEFAULT_DEAD_ZONE = (-0.005, 0.005)
DEFAULT_OUTLIER_THRESHOLD = 0.05
DEFAULT_EPSILON = 1e-8

DATE_COLUMN = "date"
PRICE_COLUMN = "adj_close"

DATASET_VERSION = 1


@dataclass
class FeatureFrame:
    """Aligned daily series for one stock: price plus named feature columns."""

    stock_id: str
    dates: list[str]
    adj_close: np.ndarray
    feature_names: list[str]
    features: np.ndarray  # shape (n_days, n_features)

    def __post_init__(self):
        self.adj_close = np.asarray(self.adj_close, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataIntegrityError(f"{self.stock_id}: features must be 2-D")
        n = len(self.dates)
        if self.adj_close.shape != (n,) or self.features.shape[0] != n:
            raise DataIntegrityError(
                f"{self.stock_id}: {n} dates vs {self.adj_close.shape[0]} prices "
                f"vs {self.features.shape[0]} feature rows"
            )
        if self.features.shape[1] != len(self.feature_names):
            raise DataIntegrityError(
                f"{self.stock_id}: {len(self.feature_names)} feature names vs "
                f"{self.features.shape[1]} feature columns"
            )
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise DataIntegrityError(f"{self.stock_id}: dates not strictly ascending at {cur}")
        if np.any(self.adj_close <= 0):
            bad = int(np.argmax(self.adj_close <= 0))
            raise DataIntegrityError(
                f"{self.stock_id}: nonpositive adj_close {self.adj_close[bad]} on {self.dates[bad]}"
            )

    def __len__(self) -> int:
        return len(self.dates)


def _parse_date(cell: str, line_no: int, path) -> str:
    try:
        return _date.fromisoformat(cell.strip()).isoformat()
    except ValueError as exc:
        raise ParseError(f"{path}: row {line_no}: bad date {cell!r} ({exc})") from exc


def _parse_float(cell: str, line_no: int, column: str, path) -> float:
    try:
        return float(cell)
    except (TypeError, ValueError):
        raise ParseError(f"{path}: row {line_no}: non-numeric value {cell!r} in column {column!r}") from None


def load_frame(path: str | Path, schema: list[str] | None = None) -> FeatureFrame:
    """Load one per-stock CSV.

    ``schema`` selects and orders the feature columns; ``None`` takes every
    column after ``date``/``adj_close`` in header order.  Rows are sorted by
    date; duplicate dates, non-numeric cells, nonpositive prices and negative
    feature values are rejected.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if schema is None:
            schema = [h for h in header if h not in (DATE_COLUMN, PRICE_COLUMN)]
        missing = [c for c in [DATE_COLUMN, PRICE_COLUMN, *schema] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        col_idx = {name: header.index(name) for name in header}

        rows = []
        for line_no, cells in enumerate(reader, start=2):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ParseError(f"{path}: row {line_no}: expected {len(header)} cells, got {len(cells)}")
            day = _parse_date(cells[col_idx[DATE_COLUMN]], line_no, path)
            price = _parse_float(cells[col_idx[PRICE_COLUMN]], line_no, PRICE_COLUMN, path)
            feats = [_parse_float(cells[col_idx[c]], line_no, c, path) for c in schema]
            rows.append((day, line_no, price, feats))

    rows.sort(key=lambda r: r[0])
    for (d1, ln1, _, _), (d2, ln2, _, _) in zip(rows, rows[1:]):
        if d1 == d2:
            raise DataIntegrityError(f"{path}: duplicate date {d1} (rows {ln1} and {ln2})")

    for day, line_no, _, feats in rows:
        for name, value in zip(schema, feats):
            if value < 0:
                raise PreprocessingError(
                    f"{path}: row {line_no}: negative value {value} in feature column {name!r}; "
                    "shift signed series before ingestion"
                )

    return FeatureFrame(
        stock_id=path.stem,
        dates=[r[0] for r in rows],
        adj_close=np.array([r[2] for r in rows], dtype=np.float64),
        feature_names=list(schema),
        features=np.array([r[3] for r in rows], dtype=np.float64).reshape(len(rows), len(schema)),
    )


def write_frame(frame: FeatureFrame, path: str | Path) -> None:
    """Write a frame back to CSV with full float64 round-trip precision."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([DATE_COLUMN, PRICE_COLUMN, *frame.feature_names])
        for i, day in enumerate(frame.dates):
            writer.writerow(
                [day, repr(float(frame.adj_close[i])), *(repr(float(v)) for v in frame.features[i])]
            )


def normalize(window_values, epsilon: float = DEFAULT_EPSILON, feature_names: list[str] | None = None) -> np.ndarray:
    """Elementwise log normalization ``ln(e + epsilon)`` of a raw window."""
    arr = np.asarray(window_values, dtype=np.float64)
    if np.any(arr < 0):
        row = int(np.argwhere(arr < 0)[0][0])
        name = feature_names[row] if feature_names else f"row {row}"
        raise PreprocessingError(f"negative entry in feature {name}; log normalization requires nonnegative values")
    return np.log(arr + epsilon)


def _relative_change(p_prev: float, p_t: float) -> float:
    if p_prev <= 0:
        raise DomainError(f"previous price must be positive, got {p_prev}")
    return (p_t - p_prev) / p_prev


def movement_label(p_prev: float, p_t: float, dead_zone: tuple[float, float] = DEFAULT_DEAD_ZONE) -> int:
    """Next-day direction: 1 up, 0 down, ABSTAIN inside the open dead zone."""
    lo, hi = dead_zone
    if not lo < hi:
        raise ConfigError(f"dead zone must satisfy lo < hi, got {dead_zone}")
    r = _relative_change(p_prev, p_t)
    if lo < r < hi:
        return ABSTAIN
    return 1 if r >= hi else 0


def volatility_label(p_prev: float, p_t: float, outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD) -> int:
    """1 iff the absolute relative change is at or above the outlier threshold."""
    if outlier_threshold <= 0:
        raise ConfigError(f"outlier threshold must be positive, got {outlier_threshold}")
    return 1 if abs(_relative_change(p_prev, p_t)) >= outlier_threshold else 0


@dataclass
class WindowedSample:
    """One training instance: a normalized feature window plus next-day labels."""

    x: np.ndarray  # shape (n_features, window)
    y_m: int  # 0, 1, or ABSTAIN
    y_v: int  # 0 or 1
    stock_id: str
    target_date: str


def window(
    frame: FeatureFrame,
    window_len: int,
    dead_zone: tuple[float, float] = DEFAULT_DEAD_ZONE,
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD,
    epsilon: float = DEFAULT_EPSILON,
) -> list[WindowedSample]:
    """Slice a frame into samples: features from days [t-window, t), labels at day t.

    Every feature date is strictly before the target date, so there is no
    temporal leakage.  A frame shorter than window+1 days yields no samples
    (logged as a warning).
    """
    if window_len < 1:
        raise ConfigError(f"window length must be >= 1, got {window_len}")
    n = len(frame)
    if n < window_len + 1:
        logger.warning(
            "frame %s has %d days, needs %d for one sample; skipped", frame.stock_id, n, window_len + 1
        )
        return []
    samples = []
    for t in range(window_len, n):
        raw = frame.features[t - window_len : t, :].T  # (n_features, window)
        x = normalize(raw, epsilon, frame.feature_names)
        p_prev, p_t = float(frame.adj_close[t - 1]), float(frame.adj_close[t])
        samples.append(
            WindowedSample(
                x=x,
                y_m=movement_label(p_prev, p_t, dead_zone),
                y_v=volatility_label(p_prev, p_t, outlier_threshold),
                stock_id=frame.stock_id,
                target_date=frame.dates[t],
            )
        )
    return samples


@dataclass
class DatasetSplit:
    """Chronologically disjoint train/validation/test sample sets."""

    train: list[WindowedSample]
    validation: list[WindowedSample]
    test: list[WindowedSample]
    boundaries: dict[str, list[str]]
    feature_names: list[str] = field(default_factory=list)
    window: int = 0
    meta: dict = field(default_factory=dict)

    def splits(self) -> dict[str, list[WindowedSample]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def chrono_split(samples: list[WindowedSample], train_frac: float, valid_frac: float) -> DatasetSplit:
    """Split by target-date order; a calendar date never straddles two splits."""
    if train_frac <= 0 or valid_frac <= 0 or train_frac + valid_frac >= 1:
        raise ConfigError(
            f"fractions must be positive and sum below 1, got train={train_frac} valid={valid_frac}"
        )
    ordered = sorted(samples, key=lambda s: (s.target_date, s.stock_id))
    n = len(ordered)
    cut1 = int(n * train_frac)
    cut2 = int(n * (train_frac + valid_frac))

    def _advance_to_date_boundary(cut: int) -> int:
        while 0 < cut < n and ordered[cut].target_date == ordered[cut - 1].target_date:
            cut += 1
        return cut

    cut1 = _advance_to_date_boundary(cut1)
    cut2 = _advance_to_date_boundary(max(cut2, cut1))
    parts = {"train": ordered[:cut1], "validation": ordered[cut1:cut2], "test": ordered[cut2:]}
    empty = [name for name, part in parts.items() if not part]
    if empty:
        raise ConfigError(
            f"too few samples for the requested fractions: empty split(s) {empty} "
            f"(n={n}, train_frac={train_frac}, valid_frac={valid_frac})"
        )
    boundaries = {
        name: [part[0].target_date, part[-1].target_date] for name, part in parts.items()
    }
    return DatasetSplit(
        train=parts["train"], validation=parts["validation"], test=parts["test"], boundaries=boundaries
    )


def build_dataset(
    frames: list[FeatureFrame],
    window_len: int,
    dead_zone: tuple[float, float] = DEFAULT_DEAD_ZONE,
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD,
    train_frac: float = 0.7,
    valid_frac: float = 0.15,
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[DatasetSplit, list[str]]:
    """Window every frame and split chronologically.

    Frames are processed in stock-id order so multi-stock merges are
    deterministic.  Returns the split plus human-readable warnings (e.g.
    frames too short to window).
    """
    if not frames:
        raise ConfigError("no input frames")
    names = frames[0].feature_names
    for frame in frames:
        if frame.feature_names != names:
            raise SchemaError(
                f"feature columns differ between stocks: {names} vs {frame.feature_names} ({frame.stock_id})"
            )
    warnings: list[str] = []
    samples: list[WindowedSample] = []
    for frame in sorted(frames, key=lambda f: f.stock_id):
        frame_samples = window(frame, window_len, dead_zone, outlier_threshold, epsilon)
        if not frame_samples:
            warnings.append(f"frame {frame.stock_id}: too short for window {window_len}, skipped")
        samples.extend(frame_samples)
    split = chrono_split(samples, train_frac, valid_frac)
    split.feature_names = list(names)
    split.window = window_len
    split.meta = {
        "dead_zone": list(dead_zone),
        "outlier_threshold": outlier_threshold,
        "epsilon": epsilon,
        "train_frac": train_frac,
        "valid_frac": valid_frac,
    }
    return split, warnings


# --- feature taxonomy for ablation modes ---------------------------------

ABLATION_MODES = ("full", "p", "s", "wo-m")

_CATEGORY_PREFIXES = (
    ("sentiment", ("sent",)),
    ("macro", ("macro",)),
    ("price", ("price", "adj")),
    ("trend", ("trend",)),
    ("tweet", ("tweet",)),
)


def feature_category(name: str) -> str:
    lowered = name.lower()
    for category, prefixes in _CATEGORY_PREFIXES:
        if lowered.startswith(prefixes):
            return category
    return "other"


def normalize_ablation_mode(mode: str) -> str:
    cleaned = mode.strip().lower().replace("_", "-").replace("w/o-m", "wo-m")
    if cleaned == "wo-m" or cleaned == "wom":
        cleaned = "wo-m"
    if cleaned not in ABLATION_MODES:
        raise ConfigError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")
    return cleaned


def ablation_feature_indices(feature_names: list[str], mode: str) -> list[int]:
    """Feature-row subset for an ablation mode (rows are removed, not zeroed)."""
    mode = normalize_ablation_mode(mode)
    categories = [feature_category(n) for n in feature_names]
    if mode == "full":
        keep = [True] * len(feature_names)
    elif mode == "p":
        keep = [c == "price" for c in categories]
    elif mode == "s":
        keep = [c == "sentiment" for c in categories]
    else:  # wo-m
        keep = [c != "macro" for c in categories]
    indices = [i for i, k in enumerate(keep) if k]
    if not indices:
        raise ConfigError(
            f"ablation mode {mode!r} selects no feature columns out of {feature_names}"
        )
    return indices


# --- dataset (de)serialization --------------------------------------------


def _stack_samples(samples: list[WindowedSample]) -> dict:
    x = np.stack([s.x for s in samples]) if samples else np.zeros((0, 0, 0))
    return {
        "x": serialize.encode_array(x),
        "y_m": serialize.encode_array(np.array([s.y_m for s in samples], dtype=np.int8)),
        "y_v": serialize.encode_array(np.array([s.y_v for s in samples], dtype=np.int8)),
        "stock_ids": [s.stock_id for s in samples],
        "target_dates": [s.target_date for s in samples],
    }


def _unstack_samples(obj: dict) -> list[WindowedSample]:
    x = serialize.decode_array(obj["x"])
    y_m = serialize.decode_array(obj["y_m"])
    y_v = serialize.decode_array(obj["y_v"])
    return [
        WindowedSample(
            x=x[i],
            y_m=int(y_m[i]),
            y_v=int(y_v[i]),
            stock_id=obj["stock_ids"][i],
            target_date=obj["target_dates"][i],
        )
        for i in range(x.shape[0])
    ]


def save_dataset(path: str | Path, split: DatasetSplit) -> None:
    serialize.write_json(
        path,
        {
            "format_version": DATASET_VERSION,
            "kind": "alertanet-dataset",
            "feature_names": split.feature_names,
            "window": split.window,
            "meta": split.meta,
            "boundaries": split.boundaries,
            "splits": {name: _stack_samples(part) for name, part in split.splits().items()},
        },
    )


def load_dataset(path: str | Path) -> DatasetSplit:
    if not Path(path).is_file():
        raise ConfigError(f"dataset file {path} not found; run the `prepare` step first")
    obj = serialize.read_json(path)
    if obj.get("kind") != "alertanet-dataset" or obj.get("format_version") != DATASET_VERSION:
        raise ParseError(f"{path}: not a dataset file (or unsupported version)")
    return DatasetSplit(
        train=_unstack_samples(obj["splits"]["train"]),
        validation=_unstack_samples(obj["splits"]["validation"]),
        test=_unstack_samples(obj["splits"]["test"]),
        boundaries=obj["boundaries"],
        feature_names=list(obj["feature_names"]),
        window=int(obj["window"]),
        meta=obj["meta"],
    )
