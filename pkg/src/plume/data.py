"""Dataset ingestion, normalization, fold planning, and synthetic data.

The synthetic generator draws K unit-normal hyperplanes through a
common shifted origin, oriented so their intersection cone is nonempty,
then labels uniform box samples with the min-margin sign rule.  That
gives datasets that are separable by construction together with the
generating parameters, which serve as a consistency oracle in tests.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError
from .model import Dataset, FeatureScale, ModelParams, augment

__all__ = [
    "CsvSchema",
    "CvPlan",
    "SynthSpec",
    "load_csv",
    "save_csv",
    "standardize",
    "check_class_counts",
    "kfold",
    "synthesize",
    "save_synthetic",
    "load_synthetic_metadata",
]

logger = logging.getLogger("plume.data")

VARIANCE_FLOOR = 1e-12
# Hyperplane normals must make at least this angle cosine with the cone
# axis so the positive region has nonzero volume.
MIN_AXIS_ALIGNMENT = 0.2


@dataclass(frozen=True)
class CsvSchema:
    """How to interpret a delimited text file.

    label_column indexes the raw file columns (negative counts from the
    end).  label_mapping maps raw label strings to -1/+1; without it,
    numeric labels in {-1, +1} or {0, 1} are accepted, with 0 read as
    the negative class.  Columns listed in categorical_columns are
    one-hot encoded in place, category order sorted for determinism.
    """

    label_column: int = -1
    label_mapping: Mapping[str, int] | None = None
    has_header: bool = False
    categorical_columns: tuple[int, ...] = ()
    delimiter: str = ","
    na_values: tuple[str, ...] = ("", "NA", "NaN", "?")
    drop_missing: bool = False


@dataclass(frozen=True)
class CvPlan:
    """Repeated k-fold split plan; the same seed always yields the same folds."""

    n_folds: int
    n_repeats: int = 1
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if int(self.n_folds) < 2:
            raise ConfigError(f"n_folds must be at least 2, got {self.n_folds}")
        if int(self.n_repeats) < 1:
            raise ConfigError(f"n_repeats must be at least 1, got {self.n_repeats}")
        object.__setattr__(self, "n_folds", int(self.n_folds))
        object.__setattr__(self, "n_repeats", int(self.n_repeats))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a polyhedrally separable synthetic dataset.

    Points whose absolute min-margin falls below `margin` are rejected
    and redrawn; `noise_flip` then flips that fraction of labels
    independently at random.
    """

    k_hyperplanes: int
    dim: int
    n_points: int
    margin: float = 0.0
    noise_flip: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.k_hyperplanes) < 1:
            raise ConfigError(f"k_hyperplanes must be at least 1, got {self.k_hyperplanes}")
        if int(self.dim) < 1:
            raise ConfigError(f"dim must be at least 1, got {self.dim}")
        if int(self.n_points) < 2:
            raise ConfigError(f"n_points must be at least 2, got {self.n_points}")
        if not 0.0 <= self.margin:
            raise ConfigError(f"margin must be nonnegative, got {self.margin}")
        if not 0.0 <= self.noise_flip < 1.0:
            raise ConfigError(f"noise_flip must lie in [0, 1), got {self.noise_flip}")
        for name in ("k_hyperplanes", "dim", "n_points", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))


def _parse_label(raw: str, mapping: Mapping[str, int] | None, where: str) -> float:
    if mapping is not None:
        normalized = {str(k).strip(): v for k, v in mapping.items()}
        if raw not in normalized:
            raise DataError(f"unknown label value {raw!r} at {where}")
        value = int(normalized[raw])
        if value not in (-1, 1):
            raise ConfigError(f"label_mapping values must be -1 or +1, got {value}")
        return float(value)
    try:
        value = float(raw)
    except ValueError:
        raise DataError(
            f"unknown label value {raw!r} at {where}; supply a label_mapping"
        ) from None
    if value in (-1.0, 1.0):
        return value
    if value == 0.0:
        return -1.0
    raise DataError(f"unknown label value {raw!r} at {where}; expected -1/+1 or 0/1")


def load_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Read a delimited numeric file into a Dataset.

    Raises DataError naming the offending cell (file line and 1-based
    column) for non-numeric features, unknown labels, missing values
    (unless schema.drop_missing), ragged rows, and single-class files.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    with path.open(newline="") as handle:
        reader = csv.reader(handle, delimiter=schema.delimiter, skipinitialspace=True)
        rows = [[cell.strip() for cell in row] for row in reader if row]
    line_offset = 1
    if schema.has_header and rows:
        rows = rows[1:]
        line_offset = 2
    if not rows:
        raise DataError(f"{path} contains no data rows")

    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"ragged file: line {i + line_offset} has {len(row)} cells, expected {width}"
            )
    label_idx = schema.label_column if schema.label_column >= 0 else width + schema.label_column
    if not 0 <= label_idx < width:
        raise DataError(f"label column {schema.label_column} out of range for width {width}")
    categorical = set(schema.categorical_columns)
    if label_idx in categorical:
        raise ConfigError("the label column cannot be categorical")

    kept_rows = []
    n_dropped = 0
    for i, row in enumerate(rows):
        if any(cell in schema.na_values for cell in row):
            if schema.drop_missing:
                n_dropped += 1
                continue
            j = next(k for k, cell in enumerate(row) if cell in schema.na_values)
            raise DataError(
                f"missing value at line {i + line_offset}, column {j + 1}; "
                "pass drop_missing to discard such rows"
            )
        kept_rows.append((i + line_offset, row))
    if n_dropped:
        logger.info("dropped %d rows with missing values from %s", n_dropped, path)
    if not kept_rows:
        raise DataError(f"{path} has no complete rows after dropping missing values")

    feature_idx = [j for j in range(width) if j != label_idx]
    categories: dict[int, list[str]] = {
        j: sorted({row[j] for _, row in kept_rows}) for j in categorical
    }

    labels = []
    features = []
    for line_no, row in kept_rows:
        labels.append(_parse_label(row[label_idx], schema.label_mapping, f"line {line_no}"))
        vector: list[float] = []
        for j in feature_idx:
            if j in categorical:
                vector.extend(1.0 if row[j] == cat else 0.0 for cat in categories[j])
            else:
                try:
                    vector.append(float(row[j]))
                except ValueError:
                    raise DataError(
                        f"non-numeric cell {row[j]!r} at line {line_no}, column {j + 1}"
                    ) from None
        features.append(vector)

    data = Dataset(np.asarray(features, dtype=float), np.asarray(labels, dtype=float))
    pos, neg = data.class_counts()
    if pos == 0 or neg == 0:
        raise DataError(f"{path} contains a single class ({pos} positive / {neg} negative)")
    logger.info("loaded %s: %d rows, %d features, classes %d/%d",
                path, data.n_samples, data.n_features, pos, neg)
    return data


def save_csv(data: Dataset, path: str | Path) -> None:
    """Write features plus the label as the last column.

    Floats are printed with shortest round-trip formatting, so reading
    the file back reproduces the array bit-exactly.
    """
    path = Path(path)
    with path.open("w", newline="") as handle:
        for row, label in zip(data.features, data.labels):
            cells = [repr(float(v)) for v in row] + [str(int(label))]
            handle.write(",".join(cells) + "\n")


def check_class_counts(data: Dataset, expected: tuple[int, int]) -> None:
    """Sanity-check the class sizes against an expected (a, b) pair.

    Compared as an unordered pair, so the sign convention of the labels
    does not matter.
    """
    actual = data.class_counts()
    if sorted(actual) != sorted(int(v) for v in expected):
        raise DataError(
            f"class counts {actual[0]}/{actual[1]} do not match expected "
            f"{expected[0]}/{expected[1]}"
        )


def standardize(data: Dataset) -> Dataset:
    """Zero-mean, unit-variance columns; near-constant columns are only centered.

    The applied (shift, scale) pairs are recorded on the returned
    Dataset so the identical transform can be applied at prediction
    time.
    """
    if data.n_samples < 2:
        raise DataError("standardization needs at least 2 rows")
    shift = data.features.mean(axis=0)
    variance = data.features.var(axis=0)
    scale = np.where(variance > VARIANCE_FLOOR, np.sqrt(variance), 1.0)
    scaled = (data.features - shift) / scale
    return Dataset(scaled, np.array(data.labels), FeatureScale(shift, scale))


def kfold(plan: CvPlan, data: Dataset) -> list[tuple[np.ndarray, np.ndarray]]:
    """Repeated k-fold index splits, repeat-major order.

    Per repeat the indices are shuffled once and cut into contiguous
    folds; in stratified mode each class is shuffled and cut separately
    so every fold holds each class's share within one example.  Within
    one repeat the test folds partition the full index range.
    """
    n = data.n_samples
    if plan.n_folds > n:
        raise DataError(f"cannot make {plan.n_folds} folds from {n} rows")
    rng = np.random.default_rng(plan.seed)
    all_indices = np.arange(n)
    splits: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(plan.n_repeats):
        if plan.stratified:
            chunks_per_class = []
            for label in (-1.0, 1.0):
                members = all_indices[data.labels == label]
                rng.shuffle(members)
                chunks_per_class.append(np.array_split(members, plan.n_folds))
            fold_tests = [
                np.concatenate([chunks[f] for chunks in chunks_per_class])
                for f in range(plan.n_folds)
            ]
        else:
            order = rng.permutation(n)
            fold_tests = np.array_split(order, plan.n_folds)
        for test in fold_tests:
            test = np.sort(test)
            mask = np.ones(n, dtype=bool)
            mask[test] = False
            splits.append((all_indices[mask], test))
    return splits


def _sample_hyperplanes(spec: SynthSpec, rng: np.random.Generator) -> ModelParams:
    axis = rng.standard_normal(spec.dim)
    axis /= np.linalg.norm(axis)
    origin = rng.uniform(-0.5, 0.5, size=spec.dim)
    normals = []
    for _ in range(spec.k_hyperplanes):
        for _ in range(1000):
            v = rng.standard_normal(spec.dim)
            norm = np.linalg.norm(v)
            if norm == 0.0:
                continue
            v /= norm
            if v @ axis < 0.0:
                v = -v
            if v @ axis >= MIN_AXIS_ALIGNMENT:
                normals.append(v)
                break
        else:
            raise DataError("failed to sample hyperplane normals; degenerate spec")
    weights = np.hstack([np.asarray(normals), -(np.asarray(normals) @ origin)[:, None]])
    return ModelParams(weights, 1.0)


def synthesize(spec: SynthSpec) -> tuple[Dataset, ModelParams]:
    """Polyhedrally separable data plus the generating parameters.

    Labels are the min-margin sign under the generated hyperplanes, so
    with noise_flip=0 the returned parameters classify the returned data
    perfectly.
    """
    rng = np.random.default_rng(spec.seed)
    true_params = _sample_hyperplanes(spec, rng)
    weights_t = true_params.weights.T

    def min_margins(points: np.ndarray) -> np.ndarray:
        return (augment(points) @ weights_t).min(axis=1)

    batch = max(spec.n_points, 256)
    cap = max(500 * spec.n_points, 100_000)
    drawn = 0
    pieces: list[np.ndarray] = []
    collected = 0
    while collected < spec.n_points and drawn < cap:
        candidates = rng.uniform(-2.0, 2.0, size=(batch, spec.dim))
        drawn += batch
        keep = np.abs(min_margins(candidates)) >= spec.margin
        kept = candidates[keep]
        pieces.append(kept)
        collected += kept.shape[0]
    if collected < spec.n_points:
        raise DataError("margin rejection cap exceeded; margin too wide for the spec")
    points = np.vstack(pieces)[: spec.n_points]
    labels = np.where(min_margins(points) >= 0.0, 1.0, -1.0)

    # Guarantee both classes appear: swap single points in from fresh
    # draws until the minority class is represented.
    while drawn < cap and (np.all(labels > 0) or np.all(labels < 0)):
        missing_positive = bool(np.all(labels < 0))
        candidates = rng.uniform(-2.0, 2.0, size=(batch, spec.dim))
        drawn += batch
        h = min_margins(candidates)
        if missing_positive:
            ok = (np.abs(h) >= spec.margin) & (h >= 0.0)
        else:
            ok = (np.abs(h) >= spec.margin) & (h < 0.0)
        found = np.flatnonzero(ok)
        if found.size:
            slot = int(rng.integers(spec.n_points))
            points = points.copy()
            points[slot] = candidates[found[0]]
            labels = np.where(min_margins(points) >= 0.0, 1.0, -1.0)
    if np.all(labels > 0) or np.all(labels < 0):
        raise DataError("could not realize both classes; degenerate spec")

    if spec.noise_flip > 0.0:
        flips = rng.random(spec.n_points) < spec.noise_flip
        labels = np.where(flips, -labels, labels)
        if np.all(labels > 0) or np.all(labels < 0):
            raise DataError("label noise removed one class entirely; degenerate spec")
    return Dataset(points, labels), true_params


def save_synthetic(
    data: Dataset, true_params: ModelParams, spec: SynthSpec, path: str | Path
) -> Path:
    """Write the dataset CSV plus a JSON sidecar with the spec and parameters.

    Returns the sidecar path (<csv path> + '.meta.json').
    """
    path = Path(path)
    save_csv(data, path)
    sidecar = path.with_name(path.name + ".meta.json")
    doc = {
        "synth_spec": {
            "k_hyperplanes": spec.k_hyperplanes,
            "dim": spec.dim,
            "n_points": spec.n_points,
            "margin": spec.margin,
            "noise_flip": spec.noise_flip,
            "seed": spec.seed,
        },
        "true_params": {
            "gamma": true_params.gamma,
            "weights": true_params.weights.tolist(),
        },
    }
    with sidecar.open("w") as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")
    return sidecar


def load_synthetic_metadata(sidecar: str | Path) -> tuple[SynthSpec, ModelParams]:
    """Read back a sidecar written by save_synthetic."""
    sidecar = Path(sidecar)
    if not sidecar.is_file():
        raise DataError(f"no such metadata file: {sidecar}")
    with sidecar.open() as handle:
        doc = json.load(handle)
    try:
        spec = SynthSpec(**doc["synth_spec"])
        params = ModelParams(
            np.asarray(doc["true_params"]["weights"], dtype=float),
            float(doc["true_params"]["gamma"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed synthetic metadata in {sidecar}: {exc}") from None
    return spec, params
