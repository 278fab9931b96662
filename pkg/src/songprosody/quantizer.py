"""Equal-frequency duration labels.

Sorted training durations are cut into ``n_classes`` runs whose sizes
differ by at most one.  Each cut is placed at the largest value of the run
below it, so a duration equal to a boundary belongs to the lower class.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class QuantizerError(ValueError):
    pass


@dataclass(frozen=True)
class DurationQuantizer:
    boundaries: tuple[float, ...]
    representatives: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(v) for v in self.boundaries)
        r = tuple(float(v) for v in self.representatives)
        if len(r) != len(b) + 1:
            raise QuantizerError("need exactly one more representative than boundaries")
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise QuantizerError("boundaries must be strictly ascending")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "representatives", r)

    @property
    def n_classes(self) -> int:
        return len(self.representatives)

    def quantize(self, d: float) -> int:
        return quantize_duration(self, d)

    def dequantize(self, k: int) -> float:
        return dequantize(self, k)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "boundaries_s": list(self.boundaries),
            "representatives_s": list(self.representatives),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DurationQuantizer":
        q = cls(tuple(d["boundaries_s"]), tuple(d["representatives_s"]))
        if "n_classes" in d and int(d["n_classes"]) != q.n_classes:
            raise QuantizerError(
                f"n_classes {d['n_classes']} disagrees with {q.n_classes} representatives"
            )
        return q

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DurationQuantizer":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def equal_frequency_split(n_values: int, n_classes: int) -> list[int]:
    """Run lengths for splitting ``n_values`` sorted items into ``n_classes`` runs."""
    base, extra = divmod(n_values, n_classes)
    return [base + 1 if i < extra else base for i in range(n_classes)]


def fit_duration_quantizer(durations: Iterable[float], n_classes: int) -> DurationQuantizer:
    """Fit equal-frequency bins to ``durations`` (seconds).

    Ties straddling a cut go to the lower bin; if that empties a bin the
    quantizer ends up with fewer classes and a warning is issued.
    """
    values = np.sort(np.asarray(list(durations), dtype=np.float64))
    if n_classes < 2:
        raise QuantizerError(f"n_classes must be >= 2, got {n_classes}")
    if values.size < n_classes:
        raise QuantizerError(f"need at least {n_classes} durations to fit, got {values.size}")
    if not np.all(np.isfinite(values)) or values[0] <= 0:
        raise QuantizerError("durations must be positive and finite")

    ends = np.cumsum(equal_frequency_split(values.size, n_classes))[:-1]
    candidates = values[ends - 1]
    boundaries = []
    for c in candidates:
        if c < values[-1] and (not boundaries or c > boundaries[-1]):
            boundaries.append(float(c))
    if len(boundaries) < n_classes - 1:
        warnings.warn(
            f"tied durations collapse {n_classes} requested classes to {len(boundaries) + 1}",
            stacklevel=2,
        )
    bounds = np.asarray(boundaries)
    labels = np.searchsorted(bounds, values, side="left")
    reps = [float(np.median(values[labels == k])) for k in range(len(boundaries) + 1)]
    return DurationQuantizer(tuple(boundaries), tuple(reps))


def quantize_duration(q: DurationQuantizer, d: float) -> int:
    """Number of boundaries strictly below ``d``; clamps by construction."""
    return int(np.searchsorted(np.asarray(q.boundaries), d, side="left"))


def dequantize(q: DurationQuantizer, k: int) -> float:
    if not 0 <= k < q.n_classes:
        raise QuantizerError(f"class {k} outside [0, {q.n_classes})")
    return q.representatives[k]
