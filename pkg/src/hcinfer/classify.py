"""Per-entity real-vs-simulated classifiers and their accuracies."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression, SGDClassifier
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from . import rng as rngmod

KINDS = ("svm", "logistic_regression", "naive_bayes", "decision_tree", "knn",
         "random_forest", "sgd_linear")

# hyperparameter search space per kind; enumeration order is key order, then value order
GRIDS: dict[str, dict[str, list]] = {
    "svm": {"C": [1, 10, 100, 1000], "kernel": ["linear", "rbf", "poly"],
            "gamma": [0.01, 0.1, 1]},
    "random_forest": {"n_estimators": [100, 200], "max_depth": [None, 10, 20],
                      "min_samples_split": [2, 5]},
    "naive_bayes": {"var_smoothing": [1e-9, 1e-8, 1e-7, 1e-6]},
    "sgd_linear": {"loss": ["hinge", "log"], "penalty": ["l2", "elasticnet"],
                   "alpha": [1e-4, 1e-3]},
    "decision_tree": {"criterion": ["gini", "entropy"], "max_depth": [None, 10, 20],
                      "min_samples_split": [2, 5]},
    "knn": {"n_neighbors": [5, 10], "weights": ["uniform", "distance"],
            "algorithm": ["auto", "ball_tree"]},
    "logistic_regression": {"penalty": ["l2"], "C": [0.01, 0.1, 1], "solver": ["liblinear"],
                            "max_iter": [100, 200]},
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "svm": {"C": 100, "kernel": "rbf", "gamma": 0.1},
    "random_forest": {"n_estimators": 100, "max_depth": None, "min_samples_split": 2},
    "naive_bayes": {"var_smoothing": 1e-9},
    "sgd_linear": {"loss": "hinge", "penalty": "l2", "alpha": 1e-4},
    "decision_tree": {"criterion": "gini", "max_depth": None, "min_samples_split": 2},
    "knn": {"n_neighbors": 5, "weights": "uniform", "algorithm": "auto"},
    "logistic_regression": {"penalty": "l2", "C": 1, "solver": "liblinear", "max_iter": 100},
}


def _pos_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= 1


def _pos_num(v):
    return isinstance(v, (int, float, np.number)) and not isinstance(v, bool) and v > 0


def _opt_depth(v):
    return v is None or _pos_int(v)


# admissible values per key: the grid plus anything of the same nature
DOMAINS: dict[str, dict[str, Any]] = {
    "svm": {"C": _pos_num, "kernel": {"linear", "rbf", "poly"}, "gamma": _pos_num,
            "degree": _pos_int},
    "random_forest": {"n_estimators": _pos_int, "max_depth": _opt_depth,
                      "min_samples_split": lambda v: _pos_int(v) and v >= 2},
    "naive_bayes": {"var_smoothing": _pos_num},
    "sgd_linear": {"loss": {"hinge", "log"}, "penalty": {"l2", "elasticnet"}, "alpha": _pos_num},
    "decision_tree": {"criterion": {"gini", "entropy"}, "max_depth": _opt_depth,
                      "min_samples_split": lambda v: _pos_int(v) and v >= 2},
    "knn": {"n_neighbors": _pos_int, "weights": {"uniform", "distance"},
            "algorithm": {"auto", "ball_tree"}},
    "logistic_regression": {"penalty": {"l2"}, "C": _pos_num, "solver": {"liblinear"},
                            "max_iter": _pos_int},
}

SCALED_KINDS = {"svm", "logistic_regression", "knn", "sgd_linear"}

# solver iteration budget; overlapping discrete features can keep a hard-margin
# linear SVM iterating for a long time without changing its predictions
SVM_MAX_ITER = 100_000

# hyperparameters each estimator ignores under a given setting
_UNUSED = {("svm", "kernel", "linear"): ("gamma", "degree"),
           ("svm", "kernel", "rbf"): ("degree",)}


class DegenerateDataError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    hyperparameters: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; choose from {KINDS}")
        domain = DOMAINS[self.kind]
        for key, value in self.hyperparameters:
            if key not in domain:
                raise ValueError(f"{self.kind} has no hyperparameter {key!r}")
            ok = domain[key]
            if not (value in ok if isinstance(ok, set) else ok(value)):
                raise ValueError(f"{self.kind}: {key}={value!r} outside its domain")

    @classmethod
    def make(cls, kind: str, params: Mapping[str, Any] | None = None) -> "ClassifierSpec":
        merged = dict(DEFAULTS[kind]) if kind in DEFAULTS else {}
        merged.update(params or {})
        return cls(kind, tuple(sorted(merged.items())))

    @property
    def params(self) -> dict[str, Any]:
        return {**DEFAULTS[self.kind], **dict(self.hyperparameters)}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": self.params}

    def effective_key(self) -> tuple:
        """Identity of the estimator actually built; specs differing only in
        hyperparameters the estimator ignores share a key."""
        params = self.params
        for (kind, key, value), unused in _UNUSED.items():
            if kind == self.kind and params.get(key) == value:
                for name in unused:
                    params.pop(name, None)
        return (self.kind, tuple(sorted(params.items(), key=lambda kv: kv[0])))


def grid(kind: str) -> list[ClassifierSpec]:
    keys = list(GRIDS[kind])
    return [ClassifierSpec(kind, tuple(sorted(zip(keys, values))))
            for values in itertools.product(*(GRIDS[kind][k] for k in keys))]


def _estimator(spec: ClassifierSpec, seed: int):
    p = spec.params
    k = spec.kind
    if k == "svm":
        return SVC(C=p["C"], kernel=p["kernel"], gamma=p["gamma"], degree=p.get("degree", 3),
                   tol=1e-6, max_iter=SVM_MAX_ITER)
    if k == "logistic_regression":
        return LogisticRegression(penalty=p["penalty"], C=p["C"], solver=p["solver"],
                                  max_iter=p["max_iter"], random_state=seed % 2**32)
    if k == "naive_bayes":
        return GaussianNB(var_smoothing=p["var_smoothing"])
    if k == "decision_tree":
        return DecisionTreeClassifier(criterion=p["criterion"], max_depth=p["max_depth"],
                                      min_samples_split=p["min_samples_split"], random_state=seed % 2**32)
    if k == "knn":
        return KNeighborsClassifier(n_neighbors=p["n_neighbors"], weights=p["weights"],
                                    algorithm=p["algorithm"])
    if k == "random_forest":
        return RandomForestClassifier(n_estimators=p["n_estimators"], max_depth=p["max_depth"],
                                      min_samples_split=p["min_samples_split"], random_state=seed % 2**32)
    if k == "sgd_linear":
        loss = "log_loss" if p["loss"] == "log" else p["loss"]
        return SGDClassifier(loss=loss, penalty=p["penalty"], alpha=p["alpha"],
                             random_state=seed % 2**32, max_iter=1000, tol=1e-4)
    raise ValueError(k)


@dataclass
class TrainedClassifier:
    spec: ClassifierSpec
    estimator: Any
    center: np.ndarray
    scale: np.ndarray
    constant: int | None = None
    columns: np.ndarray | None = None

    def _prep(self, x):
        xs = (np.asarray(x, dtype=float) - self.center) / self.scale
        return xs if self.columns is None else xs[:, self.columns]

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.constant is not None:
            return np.full(len(x), self.constant)
        return self.estimator.predict(self._prep(x))

    def decision_function(self, x) -> np.ndarray:
        return self.estimator.decision_function(self._prep(np.atleast_2d(x)))


def canonical_columns(x: np.ndarray) -> np.ndarray:
    """Column order determined by column contents alone.

    Learners that break ties by column position (tree split search) then
    build the same model whatever order the features arrive in.
    """
    keys = [(tuple(np.sort(x[:, j])), tuple(x[:, j])) for j in range(x.shape[1])]
    return np.array(sorted(range(x.shape[1]), key=keys.__getitem__), dtype=np.intp)


def fit(spec: ClassifierSpec, x, y, seed: int = 0) -> TrainedClassifier:
    """Train one classifier; deterministic for a given seed.

    Scale-sensitive kinds see features standardized by the training mean and
    standard deviation.  The SVM penalty C weighs the *mean* hinge loss over
    the training rows, so repeating every row leaves the solution unchanged.
    Columns are put in a content-defined order first, so permuting features
    consistently in training and prediction does not change predictions.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).astype(int)
    if len(x) < 2 or len(x) != len(y):
        raise DegenerateDataError("need at least two labeled rows")
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("training data holds a single class")
    if spec.kind in SCALED_KINDS:
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-12] = 1.0
    else:
        center = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    xs = (x - center) / scale
    columns = canonical_columns(xs)
    xs = xs[:, columns]
    if np.ptp(xs, axis=0).max() == 0.0:
        # every row identical: no learner can do better than a fixed guess
        return TrainedClassifier(spec, None, center, scale, constant=int(np.bincount(y).argmax()),
                                 columns=columns)
    est = _estimator(spec, seed)
    if spec.kind == "svm":
        with warnings.catch_warnings():
            # hitting SVM_MAX_ITER is an accepted budget, not a fault
            warnings.simplefilter("ignore", ConvergenceWarning)
            est.fit(xs, y, sample_weight=np.full(len(y), 1.0 / len(y)))
    else:
        est.fit(xs, y)
    return TrainedClassifier(spec, est, center, scale, columns=columns)


def stratified_split(m_real: int, m_sim: int, train_fraction: float, seed: int,
                     entity: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Index split (real_train, real_test, sim_train, sim_test) per label."""
    g = rngmod.substream(seed, rngmod.SPLIT, entity)
    real = g.permutation(m_real)
    # equal counts share one permutation, so swapping the two sides swaps labels only
    sim = real.copy() if m_sim == m_real else g.permutation(m_sim)
    k_real = int(math.floor(train_fraction * m_real))
    k_sim = int(math.floor(train_fraction * m_sim))
    return real[:k_real], real[k_real:], sim[:k_sim], sim[k_sim:]


def _score(spec, real, sim, tr_real, te_real, tr_sim, te_sim, seed):
    x_train = np.concatenate([real[tr_real], sim[tr_sim]])
    y_train = np.r_[np.zeros(len(tr_real), int), np.ones(len(tr_sim), int)]
    x_test = np.concatenate([real[te_real], sim[te_sim]])
    y_test = np.r_[np.zeros(len(te_real), int), np.ones(len(te_sim), int)]
    model = fit(spec, x_train, y_train, seed)
    return float(np.mean(model.predict(x_test) == y_test))


def entity_accuracy(real, sim, spec: ClassifierSpec, split_fraction: float = 0.6,
                    seed: int = 0, entity: int = 0, train_rows: int | None = None) -> float:
    """Held-out accuracy of one entity's classifier, real (label 0) vs sim (label 1).

    The split is stratified and keyed by (seed, entity).  With ``train_rows``
    the first that many rows of each side are the training block instead.
    """
    real = np.asarray(real, dtype=float)
    sim = np.asarray(sim, dtype=float)
    if len(real) != len(sim):
        raise InsufficientDataError(f"unequal label counts: {len(real)} real, {len(sim)} sim")
    if len(real) < 5:
        raise InsufficientDataError(f"need at least 5 rows per label, got {len(real)}")
    if train_rows is None:
        idx = stratified_split(len(real), len(sim), split_fraction, seed, entity)
    else:
        if not 0 < train_rows < len(real):
            raise InsufficientDataError(f"train_rows={train_rows} leaves an empty side")
        a, b = np.arange(train_rows), np.arange(train_rows, len(real))
        idx = (a, b, a, b)
    return _score(spec, real, sim, *idx, rngmod.derive_seed(seed, rngmod.CLASSIFIER, entity))


@dataclass
class AccuracyReport:
    per_entity: dict[int, float]
    global_accuracy: float = field(init=False)

    def __post_init__(self):
        if not self.per_entity:
            raise ValueError("no entity accuracies")
        vals = list(self.per_entity.values())
        self.global_accuracy = math.fsum(vals) / len(vals)


def global_accuracy(per_entity: Mapping[int, float] | Sequence[float]) -> AccuracyReport:
    if not isinstance(per_entity, Mapping):
        per_entity = dict(enumerate(per_entity))
    return AccuracyReport(dict(per_entity))


def grid_search(kind: str, real, sim, seed: int = 0, entity: int = 0,
                split_fraction: float = 0.6, train_rows: int | None = None,
                candidates: Sequence[ClassifierSpec] | None = None) -> ClassifierSpec:
    """Best spec on the kind's grid by entity accuracy; first one wins ties."""
    candidates = list(candidates) if candidates is not None else grid(kind)
    best, best_acc = None, -1.0
    seen: dict[tuple, float] = {}
    for spec in candidates:
        key = spec.effective_key()
        if key not in seen:
            seen[key] = entity_accuracy(real, sim, spec, split_fraction, seed, entity, train_rows)
        acc = seen[key]
        if acc > best_acc:
            best, best_acc = spec, acc
    return best
