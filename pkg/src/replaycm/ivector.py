"""Total-variability modelling: Baum-Welch statistics against a UBM, EM
training of the subspace matrix, i-vector extraction, and the
center + length-normalize post-processing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .gmm import GmmModel, log_component_densities, _logsumexp


@dataclass
class BaumWelchStats:
    """Zero-order counts and centered first-order sums per UBM component."""

    n: np.ndarray  # (K,)
    f: np.ndarray  # (K, D)

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64)
        self.f = np.asarray(self.f, dtype=np.float64)
        if self.n.ndim != 1 or self.f.ndim != 2 or self.f.shape[0] != self.n.size:
            raise ValueError("inconsistent statistics shapes")
        if np.any(self.n < -1e-9):
            raise ValueError("zero-order counts must be non-negative")


@dataclass
class TotalVariabilityModel:
    ubm: GmmModel
    t_matrix: np.ndarray  # (K*D, R)
    objective_history: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        self.t_matrix = np.asarray(self.t_matrix, dtype=np.float64)
        kd = self.ubm.n_components * self.ubm.dim
        if self.t_matrix.ndim != 2 or self.t_matrix.shape[0] != kd:
            raise ValueError(f"t_matrix must be {kd} x R")
        if self.t_matrix.shape[1] < 1:
            raise ValueError("i-vector rank must be >= 1")

    @property
    def rank(self) -> int:
        return self.t_matrix.shape[1]


@dataclass(frozen=True)
class IVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError("i-vector must be a finite 1-D vector")
        object.__setattr__(self, "values", values)


def baum_welch_stats(ubm: GmmModel, frames: np.ndarray) -> BaumWelchStats:
    """Posterior-weighted zero- and centered first-order statistics."""
    frames = np.asarray(frames, dtype=np.float64)
    log_joint = log_component_densities(ubm, frames) + np.log(ubm.weights)
    resp = np.exp(log_joint - _logsumexp(log_joint, axis=1)[:, None])
    n = resp.sum(axis=0)
    f = resp.T @ frames - n[:, None] * ubm.means
    return BaumWelchStats(n, f)


def _component_blocks(t_matrix: np.ndarray, ubm: GmmModel):
    """Per-component views of T plus variance-scaled copies and Gram matrices."""
    k, d = ubm.means.shape
    t_blocks = [t_matrix[c * d : (c + 1) * d] for c in range(k)]
    scaled = [t_c / ubm.variances[c][:, None] for c, t_c in enumerate(t_blocks)]
    gram = [s.T @ t_c for s, t_c in zip(scaled, t_blocks)]
    return t_blocks, scaled, gram


def _utterance_posterior(stats: BaumWelchStats, scaled, gram, rank: int):
    """Posterior precision L, information vector b, and mean w for one utterance."""
    precision = np.eye(rank)
    b = np.zeros(rank)
    for c in range(stats.n.size):
        if stats.n[c]:
            precision += stats.n[c] * gram[c]
        b += scaled[c].T @ stats.f[c]
    w = np.linalg.solve(precision, b)
    return precision, b, w


def _marginal_objective(stats_list, scaled, gram, rank: int) -> float:
    """Marginal log-likelihood of the statistics, up to a T-independent term."""
    total = 0.0
    for st in stats_list:
        precision, b, w = _utterance_posterior(st, scaled, gram, rank)
        _, logdet = np.linalg.slogdet(precision)
        total += -0.5 * logdet + 0.5 * float(b @ w)
    return total


def train_t_matrix(
    stats: list[BaumWelchStats],
    ubm: GmmModel,
    rank: int = 200,
    iters: int = 5,
    seed: int = 0,
    ridge: float = 1e-6,
) -> TotalVariabilityModel:
    """EM for the total-variability matrix.

    E-step: per-utterance posterior mean/covariance of the latent factor
    under the current T.  M-step: per-component least-squares solve from the
    accumulated systems.  Components with no accumulated evidence keep their
    current rows; singular systems get a ridge term plus a warning.  The
    per-iteration marginal objective (up to a T-independent constant) is
    recorded on the returned model; EM makes it non-decreasing.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if not stats:
        raise ValueError("need at least one utterance of statistics")
    if len(stats) < rank:
        warnings.warn(
            f"training a rank-{rank} subspace from only {len(stats)} utterances",
            stacklevel=2,
        )
    k, d = ubm.means.shape
    rng = np.random.default_rng(seed)
    t_matrix = 0.1 * rng.standard_normal((k * d, rank))

    history = []
    for _ in range(iters):
        _, scaled, gram = _component_blocks(t_matrix, ubm)

        a_acc = np.zeros((k, rank, rank))
        c_acc = np.zeros((k, d, rank))
        objective = 0.0
        for st in stats:
            precision, b, w = _utterance_posterior(st, scaled, gram, rank)
            _, logdet = np.linalg.slogdet(precision)
            objective += -0.5 * logdet + 0.5 * float(b @ w)
            second_moment = np.linalg.inv(precision) + np.outer(w, w)
            a_acc += st.n[:, None, None] * second_moment[None, :, :]
            c_acc += st.f[:, :, None] * w[None, None, :]
        history.append(objective)

        new_t = t_matrix.copy()
        for c in range(k):
            if np.trace(a_acc[c]) <= 0.0:
                continue  # no evidence for this component; keep current rows
            try:
                solution = np.linalg.solve(a_acc[c], c_acc[c].T)
            except np.linalg.LinAlgError:
                warnings.warn(
                    f"singular M-step system for component {c}; adding ridge",
                    stacklevel=2,
                )
                solution = np.linalg.solve(a_acc[c] + ridge * np.eye(rank), c_acc[c].T)
            new_t[c * d : (c + 1) * d] = solution.T
        t_matrix = new_t

    _, scaled, gram = _component_blocks(t_matrix, ubm)
    history.append(_marginal_objective(stats, scaled, gram, rank))

    model = TotalVariabilityModel(ubm, t_matrix)
    model.objective_history = tuple(history)
    if np.linalg.matrix_rank(t_matrix) < rank:
        warnings.warn("trained t_matrix is numerically rank deficient", stacklevel=2)
    return model


def extract_ivector(tv: TotalVariabilityModel, stats: BaumWelchStats) -> IVector:
    """Posterior mean of the latent factor: (I + T'S^-1NT)^-1 T'S^-1 f."""
    k, d = tv.ubm.means.shape
    if stats.n.shape != (k,) or stats.f.shape != (k, d):
        raise ValueError(
            f"statistics shaped {stats.n.shape}/{stats.f.shape} do not match "
            f"the UBM ({k} components x {d} dims)"
        )
    _, scaled, gram = _component_blocks(tv.t_matrix, tv.ubm)
    _, _, w = _utterance_posterior(stats, scaled, gram, tv.rank)
    return IVector(w)


def center_length_normalize(
    vectors: list[IVector], mean: np.ndarray | None = None
) -> tuple[list[IVector], np.ndarray, list[bool]]:
    """Subtract the mean (fitted here when not given) and scale to unit norm.

    Returns (normalized vectors, mean used, degenerate flags); vectors that
    coincide with the mean stay zero and are flagged.
    """
    if not vectors:
        raise ValueError("need at least one i-vector")
    matrix = np.stack([v.values for v in vectors])
    if mean is None:
        mean = matrix.mean(axis=0)
    else:
        mean = np.asarray(mean, dtype=np.float64)
        if mean.shape != (matrix.shape[1],):
            raise ValueError("mean dimension does not match the i-vectors")
    centered = matrix - mean
    norms = np.linalg.norm(centered, axis=1)
    degenerate = norms == 0.0
    safe = np.where(degenerate, 1.0, norms)
    normalized = centered / safe[:, None]
    return (
        [IVector(row) for row in normalized],
        mean,
        [bool(flag) for flag in degenerate],
    )
