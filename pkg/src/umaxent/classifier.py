"""Building uncertain-MaxEnt constraints from black-box classifier outputs.

Two paths: hard labels through a confusion matrix lifted to Pr(label | X),
and soft per-sample output distributions with the training-prior
replacement correction. Neither path ever sees the raw data; only
classifier outputs and confusion statistics enter.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .dual import TargetExpectations
from .em import EmConfig, UMaxEntProblem, e_step, em_solve
from .errors import (
    DegenerateRow,
    DimensionMismatch,
    ValidationError,
    ZeroMarginal,
    ZeroTrainingPrior,
)
from .model import (
    Distribution,
    EmpiricalObservations,
    ObservationChannel,
    log_linear_distribution,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabelSpace:
    labels: tuple

    def __init__(self, labels):
        labels = tuple(labels)
        if len(labels) < 1 or len(set(labels)) != len(labels):
            raise ValidationError("labels must be unique and non-empty")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self):
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Deterministic element-to-label assignment d(X, label) in {0, 1}."""

    d: np.ndarray  # |X| x |labels| binary

    def __init__(self, d):
        d = np.asarray(d, dtype=float)
        if d.ndim != 2 or not np.all((d == 0) | (d == 1)):
            raise ValidationError("label map must be a binary matrix")
        if not np.all(d.sum(axis=1) == 1):
            raise ValidationError("each element must map to exactly one label")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_assignment(cls, assignment, n_labels):
        d = np.zeros((len(assignment), n_labels))
        d[np.arange(len(assignment)), assignment] = 1.0
        return cls(d)

    @property
    def n_elements(self):
        return self.d.shape[0]

    @property
    def n_labels(self):
        return self.d.shape[1]

    def label_of(self):
        return self.d.argmax(axis=1)


@dataclass(frozen=True, eq=False)
class ClassifierProfile:
    """Row-stochastic confusion matrix C[true_label, output_label]."""

    confusion: np.ndarray

    def __init__(self, confusion):
        confusion = np.asarray(confusion, dtype=float)
        if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
            raise ValidationError("confusion matrix must be square")
        if np.any(confusion < 0) or np.any(confusion > 1):
            raise ValidationError("confusion entries must lie in [0, 1]")
        if not np.allclose(confusion.sum(axis=1), 1.0, atol=1e-9):
            raise ValidationError("confusion rows must sum to 1")
        confusion.setflags(write=False)
        object.__setattr__(self, "confusion", confusion)

    def lift(self, label_map):
        """Pr(output label | X) = C[d(X), output label] as an observation channel."""
        if label_map.n_labels != self.confusion.shape[0]:
            raise DimensionMismatch("labels", self.confusion.shape[0], label_map.n_labels)
        matrix = self.confusion[label_map.label_of()].T  # |labels| x |X|
        return ObservationChannel(matrix)


@dataclass(frozen=True, eq=False)
class SoftClassifierBatch:
    """Per-sample classifier output distributions plus the training prior.

    rows: N x |labels|, each row a distribution over labels; sample_weights
    default to uniform 1/N.
    """

    rows: np.ndarray
    training_prior: Distribution
    sample_weights: np.ndarray = None

    def __init__(self, rows, training_prior, sample_weights=None):
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValidationError("batch must be a non-empty matrix")
        if np.any(rows < 0):
            raise ValidationError("batch rows must be nonnegative")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if bad.size:
            raise ValidationError(f"batch row {bad[0]} sums to {sums[bad[0]]}, not 1")
        rows = rows.copy()
        # renormalize to a fixpoint so reconstruction from stored rows is exact
        for _ in range(4):
            sums = rows.sum(axis=1)
            drift = np.flatnonzero(sums != 1.0)
            if not drift.size:
                break
            rows[drift] = rows[drift] / sums[drift, None]
        if len(training_prior) != rows.shape[1]:
            raise DimensionMismatch("labels", rows.shape[1], len(training_prior))
        if sample_weights is None:
            sample_weights = np.full(rows.shape[0], 1.0 / rows.shape[0])
        else:
            sample_weights = np.asarray(sample_weights, dtype=float)
            if sample_weights.shape != (rows.shape[0],) or np.any(sample_weights < 0):
                raise ValidationError("sample weights must be a nonnegative length-N vector")
            sample_weights = sample_weights / sample_weights.sum()
        rows.setflags(write=False)
        sample_weights.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "training_prior", training_prior)
        object.__setattr__(self, "sample_weights", sample_weights)

    @property
    def n_samples(self):
        return self.rows.shape[0]

    @property
    def n_labels(self):
        return self.rows.shape[1]

    @classmethod
    def from_csv(cls, path, training_prior):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        rows = np.asarray(rows)
        if rows.shape[1] != len(header):
            raise ValidationError("batch CSV rows do not match header width")
        return cls(rows, training_prior)

    def to_csv(self, path, labels=None):
        labels = labels or [f"xi_{i}" for i in range(self.n_labels)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(labels)
            for row in self.rows:
                writer.writerow([repr(float(v)) for v in row])


def hard_label_e_step(empirical_xi, profile, label_map, current, features,
                      zero_marginal="error"):
    """E-step when the classifier emits hard labels.

    The confusion matrix lifted through the label map is just another
    observation channel over labels, so this delegates to the standard
    E-step.
    """
    from .model import ElementSpace

    channel = profile.lift(label_map)
    problem = UMaxEntProblem(
        ElementSpace(range(features.n_elements)), features, channel,
        EmpiricalObservations(empirical_xi),
    )
    return e_step(problem, current, zero_marginal=zero_marginal)


def soft_correction(batch_row, training_prior, model_prior):
    """Replace the training prior inside a classifier output row, renormalize.

    out(label) is proportional to row(label) * model_prior(label) /
    training_prior(label).
    """
    row = np.asarray(batch_row.probs if isinstance(batch_row, Distribution) else batch_row,
                     dtype=float)
    theta = training_prior.probs
    target = model_prior.probs
    bad = np.flatnonzero((row > 0) & (theta <= 0))
    if bad.size:
        raise ZeroTrainingPrior(int(bad[0]))
    corrected = np.where(theta > 0, row * target / np.where(theta > 0, theta, 1.0), 0.0)
    total = corrected.sum()
    if total <= 0:
        raise DegenerateRow(-1)
    return Distribution(corrected / total)


def _corrected_rows(batch, model_prior, apply_correction=True):
    """Vectorized correction of all batch rows; returns rows, kept-row mask."""
    rows = batch.rows
    if not apply_correction:
        return rows, np.ones(batch.n_samples, dtype=bool)
    theta = batch.training_prior.probs
    bad = np.flatnonzero((rows > 0) & (theta[None, :] <= 0))
    if bad.size:
        raise ZeroTrainingPrior(int(np.unravel_index(bad[0], rows.shape)[1]))
    corrected = rows * model_prior.probs / np.where(theta > 0, theta, 1.0)
    totals = corrected.sum(axis=1)
    keep = totals > 0
    if not np.all(keep):
        logger.warning("skipping %d degenerate corrected row(s)", int((~keep).sum()))
    out = np.zeros_like(corrected)
    out[keep] = corrected[keep] / totals[keep, None]
    return out, keep


def soft_e_step(batch, label_map, current, features, apply_correction=True,
                zero_marginal="error"):
    """E-step from soft classifier outputs with the training-prior correction.

    Uses the current model's label marginal as the replacement prior, maps
    corrected rows through Pr(X | label) = d(X, label) Pr(X) / Pr(label),
    and averages feature expectations over samples. Degenerate corrected
    rows are skipped with renormalized sample weights.
    """
    if label_map.n_labels != batch.n_labels:
        raise DimensionMismatch("labels", batch.n_labels, label_map.n_labels)
    if label_map.n_elements != features.n_elements:
        raise DimensionMismatch("elements", features.n_elements, label_map.n_elements)

    model = log_linear_distribution(current, features)
    label_marginal = Distribution(label_map.d.T @ model.probs)
    corrected, keep = _corrected_rows(batch, label_marginal, apply_correction)

    weights = batch.sample_weights * keep
    total = weights.sum()
    if total <= 0:
        raise ValidationError("every batch row was degenerate after correction")
    weights = weights / total

    # Pr(X | label) columns; labels with zero model mass but row support error out.
    lm = label_marginal.probs
    used = corrected[keep].sum(axis=0) > 0
    dead = used & (lm <= 0)
    if np.any(dead):
        if zero_marginal == "skip":
            logger.warning("dropping labels with zero model marginal from the soft E-step")
            corrected = corrected * (~dead)[None, :]
            sums = corrected.sum(axis=1)
            keep = keep & (sums > 0)
            corrected[keep] = corrected[keep] / sums[keep, None]
            weights = batch.sample_weights * keep
            weights = weights / weights.sum()
        else:
            raise ZeroMarginal(int(np.flatnonzero(dead)[0]))
    post_x_given_label = np.where(
        lm[None, :] > 0, label_map.d * model.probs[:, None] / np.where(lm > 0, lm, 1.0), 0.0
    )  # |X| x |labels|

    label_mix = corrected.T @ weights  # expected corrected label distribution
    x_mix = post_x_given_label @ label_mix
    return TargetExpectations(features.values @ x_mix)


def classifier_em_solve(features, batch=None, label_map=None, empirical_xi=None,
                        profile=None, config=None, apply_correction=True):
    """EM with the classifier-derived E-step substituted for the standard one.

    Soft path when a batch is given, hard-label path when empirical label
    frequencies plus a confusion profile are given.
    """
    from .model import ElementSpace

    config = config or EmConfig()
    if (batch is None) == (empirical_xi is None):
        raise ValidationError("provide either a soft batch or hard-label empirical data")
    if label_map is None:
        raise ValidationError("a label map is required")

    if batch is not None:
        # The label marginal of the batch serves only as the problem's
        # empirical record; the E-step never reads it.
        observed = Distribution(batch.sample_weights @ batch.rows)
        channel = ObservationChannel(label_map.d.T)

        def estep(problem, weights, model=None):
            return soft_e_step(batch, label_map, weights,
                               problem.features, apply_correction,
                               zero_marginal=config.zero_marginal)

        empirical = EmpiricalObservations(observed)
    else:
        if profile is None:
            raise ValidationError("hard-label path needs a classifier profile")
        channel = profile.lift(label_map)
        empirical = EmpiricalObservations(empirical_xi)
        estep = None  # standard E-step on the lifted channel

    problem = UMaxEntProblem(
        ElementSpace(range(features.n_elements)), features, channel, empirical
    )
    return em_solve(problem, config, e_step_fn=estep)
