"""Purged group time-series splits, shadow-feature selection and random
hyperparameter search.

Splits are expanding-window over contiguous date groups; the purge gap
deletes the training days nearest each validation block, which is exactly the
leakage channel opened by lagged rolling features. The same SplitPlan is
reused for feature selection and for both search phases.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .errors import ConfigError, DataError
from .forest import ForestHyperparams, fit_forest, permutation_importance

__all__ = [
    "SplitPlan",
    "TrialRecord",
    "SelectionResult",
    "make_splits",
    "select_features",
    "tune",
    "DEFAULT_SEARCH_SPACE",
]

# search ranges for the seven tuned hyperparameters
DEFAULT_SEARCH_SPACE = {
    "n_estimators": ("int", 10, 300),
    "max_depth": ("int", 1, 20),
    "min_samples_split": ("int", 1, 100),
    "min_samples_leaf": ("int", 1, 100),
    "max_samples": ("float", 0.1, 1.0),
    "min_weight_fraction_leaf": ("float", 0.0, 0.05),
    "max_features": ("float", 0.2, 1.0),
}


@dataclass
class SplitPlan:
    n_folds: int
    group_assignment: np.ndarray  # per-day group id
    folds: list  # [(train_idx, val_idx)] as index arrays
    purge_gap: int

    def validate(self):
        for k, (tr, va) in enumerate(self.folds):
            if len(tr) == 0 or len(va) == 0:
                raise ConfigError(f"fold {k} has an empty side")
            if tr.max() + self.purge_gap >= va.min():
                raise ConfigError(f"fold {k}: purge gap not respected")
            shared = set(self.group_assignment[tr]) & set(self.group_assignment[va])
            if shared:
                raise ConfigError(f"fold {k}: groups {shared} appear on both sides")
        for k in range(len(self.folds) - 1):
            if not set(self.folds[k][0]) <= set(self.folds[k + 1][0]):
                raise ConfigError(f"fold {k} training set not nested in fold {k + 1}")


@dataclass
class TrialRecord:
    trial_id: int
    hyperparams: ForestHyperparams
    fold_scores: list
    mean_score: float
    phase: str
    status: str = "ok"

    def to_json(self):
        return json.dumps({
            "trial_id": self.trial_id,
            "phase": self.phase,
            "params": self.hyperparams.to_dict(),
            "fold_scores": self.fold_scores,
            "mean_score": self.mean_score,
            "status": self.status,
        }, sort_keys=True)


@dataclass
class SelectionResult:
    accepted: list
    rejected: list
    undecided: list
    hit_counts: dict
    p_values: dict
    n_trials: int

    @property
    def kept(self):
        # undecided features are retained (conservative)
        return self.accepted + self.undecided


def make_splits(dates, n_folds: int, group_days: int = 21, purge_gap: int = 0) -> SplitPlan:
    """Expanding-window folds over contiguous blocks of ``group_days`` days.

    The usable span is divided into n_folds + 1 equal chunks of whole
    groups; fold k trains on the first k+1 chunks (minus the purge_gap days
    nearest validation) and validates on chunk k+2. Depends only on the date
    geometry, never on values.
    """
    n = len(dates)
    if n_folds < 1 or group_days < 1 or purge_gap < 0:
        raise ConfigError("n_folds and group_days must be >= 1, purge_gap >= 0")
    groups = np.arange(n) // group_days
    n_groups = int(groups[-1]) + 1 if n else 0
    chunk = n_groups // (n_folds + 1)
    if chunk < 1:
        raise ConfigError(
            f"infeasible geometry: {n} days form {n_groups} groups of {group_days}, "
            f"fewer than the {n_folds + 1} chunks required for {n_folds} folds")

    folds = []
    for k in range(n_folds):
        train_end_group = (k + 1) * chunk
        val_end_group = (k + 2) * chunk
        train = np.flatnonzero(groups < train_end_group)
        val = np.flatnonzero((groups >= train_end_group) & (groups < val_end_group))
        if purge_gap:
            train = train[:-purge_gap] if purge_gap < len(train) else train[:0]
        if len(train) == 0:
            raise ConfigError(
                f"infeasible geometry: purge_gap={purge_gap} empties fold {k}'s training set")
        folds.append((train, val))
    plan = SplitPlan(n_folds, groups, folds, purge_gap)
    plan.validate()
    return plan


def select_features(X, y, splits: SplitPlan, base_hp: ForestHyperparams,
                    n_trials: int = 30, seed: int = 0, alpha: float = 0.05,
                    feature_names=None, importance_repeats: int = 1) -> SelectionResult:
    """Shadow-feature selection over the purged splits.

    Each trial appends an independently shuffled shadow copy of every
    column, fits the forest on each fold's training days and scores
    permutation importance on the validation days. A feature registers a hit
    when its summed importance beats the best shadow column. Accept/reject
    via a two-sided binomial test at ``alpha``; undecided features are
    retained.
    """
    if n_trials < 10:
        raise ConfigError("n_trials must be >= 10")
    X = np.asarray(X, float)
    y = np.asarray(y)
    n, f = X.shape
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(f)]

    hits = np.zeros(f, dtype=int)
    for trial in range(n_trials):
        rng = np.random.default_rng([seed, trial])
        shadow = np.empty_like(X)
        for j in range(f):
            shadow[:, j] = X[rng.permutation(n), j]
        X_aug = np.concatenate([X, shadow], axis=1)

        importance = np.zeros(2 * f)
        for fold_id, (tr, va) in enumerate(splits.folds):
            model = fit_forest(X_aug[tr], y[tr], base_hp,
                               seed=int(rng.integers(2 ** 31)))
            importance += permutation_importance(
                model, X_aug[va], y[va], repeats=importance_repeats,
                seed=int(rng.integers(2 ** 31)))
        shadow_max = importance[f:].max()
        hits += importance[:f] > shadow_max

    p_values = {}
    accepted, rejected, undecided = [], [], []
    for j in range(f):
        p = binomtest(int(hits[j]), n_trials, 0.5).pvalue
        p_values[names[j]] = float(p)
        if p < alpha and hits[j] > n_trials / 2:
            accepted.append(names[j])
        elif p < alpha and hits[j] < n_trials / 2:
            rejected.append(names[j])
        else:
            undecided.append(names[j])
    if not accepted and not undecided:
        raise DataError("feature selection rejected every feature; revise the feature spec")
    return SelectionResult(accepted, rejected, undecided,
                           {names[j]: int(hits[j]) for j in range(f)}, p_values, n_trials)


def sample_hyperparams(space: dict, rng) -> ForestHyperparams:
    draw = {}
    for name, (kind, lo, hi) in space.items():
        if kind == "int":
            draw[name] = int(rng.integers(lo, hi + 1))
        elif kind == "float":
            draw[name] = float(rng.uniform(lo, hi))
        else:
            raise ConfigError(f"unknown parameter kind {kind!r} for {name}")
    return ForestHyperparams(**draw)


def tune(objective, space: dict = None, n_trials: int = None, phase: str = "loose",
         seed: int = 0, log_path=None):
    """Uniform random search maximizing the mean fold score.

    ``objective(hp)`` returns a list of per-fold scores (validation Sortino
    in the pipeline). Failing trials are logged and skipped. Ties keep the
    first-seen trial. Returns (best TrialRecord, all records).
    """
    if phase not in ("loose", "rigorous"):
        raise ConfigError(f"unknown phase {phase!r}")
    space = space or DEFAULT_SEARCH_SPACE
    if n_trials is None:
        n_trials = 30 if phase == "loose" else 200
    rng = np.random.default_rng(seed)
    log_fh = open(log_path, "a") if log_path else None

    best = None
    records = []
    try:
        for trial_id in range(n_trials):
            hp = sample_hyperparams(space, rng)
            try:
                fold_scores = [float(s) for s in objective(hp)]
                mean = float(np.mean(fold_scores))
                rec = TrialRecord(trial_id, hp, fold_scores, mean, phase)
            except Exception as exc:  # a failed trial must not kill the search
                rec = TrialRecord(trial_id, hp, [], float("nan"), phase,
                                  status=f"failed: {exc}")
            records.append(rec)
            if log_fh:
                log_fh.write(rec.to_json() + "\n")
            if rec.status == "ok" and np.isfinite(rec.mean_score):
                if best is None or rec.mean_score > best.mean_score:
                    best = rec
    finally:
        if log_fh:
            log_fh.close()
    if best is None:
        raise DataError("every search trial failed")
    return best, records
