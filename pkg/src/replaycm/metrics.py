"""Detection metrics and score files: DET curve points, equal error rate with
linear interpolation at the crossing, and the two-column score file format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ScoreFileError(ValueError):
    """Malformed score file."""


@dataclass(frozen=True)
class ScoreSet:
    """Ordered (trial_id, score) pairs with unique ids and finite scores."""

    trial_ids: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.trial_ids) != scores.size:
            raise ValueError("trial_ids and scores must have equal length")
        if len(set(self.trial_ids)) != len(self.trial_ids):
            raise ValueError("trial_ids must be unique")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must all be finite")
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.trial_ids)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.trial_ids, self.scores.tolist()))


def _check_scores(genuine, spoof) -> tuple[np.ndarray, np.ndarray]:
    genuine = np.asarray(genuine, dtype=np.float64).ravel()
    spoof = np.asarray(spoof, dtype=np.float64).ravel()
    if genuine.size == 0 or spoof.size == 0:
        raise ValueError("both genuine and spoof score sets must be non-empty")
    return genuine, spoof


def det_points(genuine, spoof) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(far, frr, threshold) arrays, one entry per distinct score threshold.

    Convention: a trial is accepted as genuine when score >= threshold, so
    far = fraction of spoof scores >= t (non-increasing in t) and
    frr = fraction of genuine scores < t (non-decreasing in t).
    """
    genuine, spoof = _check_scores(genuine, spoof)
    thresholds = np.unique(np.concatenate([genuine, spoof]))
    spoof_sorted = np.sort(spoof)
    genuine_sorted = np.sort(genuine)
    accepted_spoof = spoof.size - np.searchsorted(spoof_sorted, thresholds, side="left")
    rejected_genuine = np.searchsorted(genuine_sorted, thresholds, side="left")
    far = accepted_spoof / spoof.size
    frr = rejected_genuine / genuine.size
    return far, frr, thresholds


def compute_eer(genuine, spoof) -> tuple[float, float]:
    """Equal error rate and the threshold where the rate curves cross.

    The crossing of the stepwise FAR/FRR curves is located on the DET points
    and resolved by linear interpolation between the adjacent points, which
    also pins the reported threshold.
    """
    far, frr, thresholds = det_points(genuine, spoof)
    # virtual end point: above every score nothing is accepted
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)

    diff = far - frr
    idx = int(np.argmax(diff <= 0.0))
    if idx == 0:
        return float(0.5 * (far[0] + frr[0])), float(thresholds[0])
    d_prev, d_here = diff[idx - 1], diff[idx]
    lam = d_prev / (d_prev - d_here)
    eer = far[idx - 1] + lam * (far[idx] - far[idx - 1])
    threshold = thresholds[idx - 1] + lam * (thresholds[idx] - thresholds[idx - 1])
    return float(eer), float(threshold)


def read_scores(path) -> ScoreSet:
    """Parse a "trial_id score" per-line file; blank lines are skipped."""
    trial_ids: list[str] = []
    scores: list[float] = []
    first_line: dict[str, int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScoreFileError(
                f"{path}:{lineno}: expected 'trial_id score', got {len(parts)} fields"
            )
        trial_id, raw = parts
        try:
            value = float(raw)
        except ValueError as exc:
            raise ScoreFileError(f"{path}:{lineno}: invalid score {raw!r}") from exc
        if trial_id in first_line:
            raise ScoreFileError(
                f"{path}:{lineno}: duplicate trial_id {trial_id!r} "
                f"(first seen on line {first_line[trial_id]})"
            )
        first_line[trial_id] = lineno
        trial_ids.append(trial_id)
        scores.append(value)
    return ScoreSet(tuple(trial_ids), np.array(scores, dtype=np.float64))


def write_scores(score_set: ScoreSet, path) -> None:
    """Write scores at 17 significant digits (lossless float round trip)."""
    lines = [
        f"{trial_id} {score:.17g}"
        for trial_id, score in zip(score_set.trial_ids, score_set.scores)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
