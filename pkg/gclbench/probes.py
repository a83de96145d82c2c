"""
Embedding probes: 10-fold linear SVM accuracy and validation-tuned
class-balanced logistic regression ROC-AUC.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from sklearn.exceptions import ConvergenceWarning
from sklearn.svm import LinearSVC

from gclbench.errors import ProbeError
from gclbench.features import standardize_apply, standardize_fit
from gclbench.graphs import stratified_kfold
from gclbench.metrics import MetricReport, accuracy, roc_auc
from gclbench.rng import stream

logger = logging.getLogger(__name__)

SVM_C_GRID = tuple(10.0 ** e for e in range(-3, 4))
LOGREG_C_GRID = (0.01, 0.1, 1.0, 10.0)

SVM_TOLERANCE = 1e-4
SVM_MAX_PASSES = 10_000
LOGREG_TOLERANCE = 1e-6
LOGREG_MAX_ITER = 5_000

# (train indices, test indices) -> (train features, test features)
FoldFeatures = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X, y = np.asarray(X, dtype=np.float64), np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ProbeError(f"Features {X.shape} and labels {y.shape} are not aligned")
    return X, y


# ============================================================================
# LINEAR SVM (liblinear dual coordinate descent, hinge loss)
# ============================================================================

@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    C: float
    passes: int = 0

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias


def train_linear_svm(X, y, C: float, seed: int = 0, tol: float = SVM_TOLERANCE,
                     max_passes: int = SVM_MAX_PASSES) -> LinearSvmModel:
    """
    Minimise 0.5 * |w|^2 + C * sum hinge(y_i (w . x_i + b)) for y in {-1, +1}.

    Solved by liblinear's dual coordinate descent. The bias is learned as the
    weight of a constant 1 feature and is regularised with the rest of w.
    """
    X, y = _check_xy(X, y)
    if C <= 0:
        raise ProbeError(f"C must be positive, got {C}")
    y = y.astype(np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ProbeError("SVM labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise ProbeError("SVM training needs samples from both classes")

    svc = LinearSVC(loss="hinge", dual=True, C=C, tol=tol, max_iter=max_passes,
                    fit_intercept=True, intercept_scaling=1.0,
                    random_state=int(stream(seed, "svm-order").integers(2**31 - 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        svc.fit(X, y)
    passes = int(np.max(svc.n_iter_))
    if passes >= max_passes:
        logger.warning(f"⚠️ SVM (C={C}) stopped at the {max_passes}-pass cap before converging")
    return LinearSvmModel(svc.coef_[0].astype(np.float64), float(svc.intercept_[0]), C, passes)


@dataclass
class OneVsRestSvm:
    classes: np.ndarray
    machines: List[LinearSvmModel]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.stack([m.decision_function(X) for m in self.machines], axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = self.decision_function(X)
        if len(self.classes) == 2:
            return np.where(scores[:, 0] > 0, self.classes[1], self.classes[0])
        # argmax returns the first maximum, i.e. the lowest class id
        return self.classes[np.argmax(scores, axis=1)]


def train_svm_classifier(X, labels, C: float, seed: int = 0) -> OneVsRestSvm:
    """One machine for binary tasks, one-vs-rest otherwise."""
    X, labels = _check_xy(X, labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ProbeError(f"SVM training needs at least two classes, got {classes.tolist()}")
    targets = classes[1:] if classes.size == 2 else classes
    machines = [train_linear_svm(X, np.where(labels == c, 1.0, -1.0), C, seed) for c in targets]
    return OneVsRestSvm(classes, machines)


def _select_c(X: np.ndarray, y: np.ndarray, c_grid: Sequence[float], inner_k: int,
              seed: int, run: str) -> float:
    inner = stratified_kfold(y, inner_k, seed, run)
    best_c, best_acc = c_grid[0], -1.0
    for C in sorted(c_grid):
        scores = []
        for fold in range(inner.k):
            tr, te = inner.train_test(fold)
            scaler = standardize_fit(X[tr])
            model = train_svm_classifier(standardize_apply(scaler, X[tr]), y[tr], C, seed)
            scores.append(accuracy(model.predict(standardize_apply(scaler, X[te])), y[te]))
        mean = float(np.mean(scores))
        if mean > best_acc:
            best_c, best_acc = C, mean
    return best_c


def svm_probe_protocol(embeddings: Optional[np.ndarray], labels: Sequence[int], k: int = 10,
                       seeds: Sequence[int] = (0,), c_grid: Sequence[float] = SVM_C_GRID,
                       inner_k: int = 5, fold_features: Optional[FoldFeatures] = None,
                       run: str = "") -> MetricReport:
    """
    Stratified k-fold accuracy with C chosen per outer fold by inner CV.

    fold_features lets a baseline fit fold-dependent features (degree-bin
    edges) on the training folds only; by default rows of `embeddings` are used.
    """
    labels = np.asarray(labels)
    if fold_features is None:
        if embeddings is None:
            raise ProbeError("Either embeddings or fold_features is required")
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.shape[0] != labels.shape[0]:
            raise ProbeError(f"{embeddings.shape[0]} embeddings for {labels.shape[0]} labels")

        def fold_features(tr, te):
            return embeddings[tr], embeddings[te]

    values = []
    for seed in seeds:
        folds = stratified_kfold(labels, k, seed, run)
        fold_scores = []
        for fold in range(folds.k):
            tr, te = folds.train_test(fold)
            X_train, X_test = fold_features(tr, te)
            best_c = _select_c(X_train, labels[tr], c_grid, inner_k, seed, f"{run}/fold{fold}")
            scaler = standardize_fit(X_train)
            model = train_svm_classifier(standardize_apply(scaler, X_train), labels[tr], best_c, seed)
            fold_scores.append(accuracy(model.predict(standardize_apply(scaler, X_test)), labels[te]))
            logger.debug(f"seed {seed} fold {fold}: C={best_c:g} accuracy={fold_scores[-1]:.4f}")
        values.append(float(np.mean(fold_scores)))
        logger.info(f"SVM probe seed {seed}: accuracy {values[-1]:.4f}")
    return MetricReport.from_values("accuracy", values)


# ============================================================================
# LOGISTIC REGRESSION
# ============================================================================

@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    C: float
    class_weights: Tuple[float, float]
    iterations: int = 0

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias


def balanced_class_weights(y: Sequence[int]) -> Tuple[float, float]:
    """N / (2 * N_c) for c in {0, 1}."""
    y = np.asarray(y)
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
    if np.any(counts == 0):
        raise ProbeError("Logistic regression needs both classes 0 and 1")
    weights = y.size / (2.0 * counts)
    return float(weights[0]), float(weights[1])


def train_logreg(X, y, C: float, balanced: bool = True, tol: float = LOGREG_TOLERANCE,
                 max_iter: int = LOGREG_MAX_ITER) -> LogRegModel:
    """
    Weighted NLL + |w|^2 / (2C), bias unregularised.

    Gradient descent with Barzilai-Borwein steps and Armijo backtracking until
    the gradient norm falls below tol.
    """
    X, y = _check_xy(X, y)
    if C <= 0:
        raise ProbeError(f"C must be positive, got {C}")
    class_weights = balanced_class_weights(y) if balanced else (1.0, 1.0)
    if not balanced and np.unique(y).size < 2:
        raise ProbeError("Logistic regression needs both classes 0 and 1")
    target = (y == 1).astype(np.float64)
    sample_weight = np.where(target == 1.0, class_weights[1], class_weights[0])
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    penalty = np.full(design.shape[1], 1.0 / C)
    penalty[-1] = 0.0

    def objective(theta: np.ndarray) -> float:
        z = design @ theta
        nll = np.logaddexp(0.0, z) - target * z
        return float(sample_weight @ nll + 0.5 * (penalty * theta) @ theta)

    def gradient(theta: np.ndarray) -> np.ndarray:
        z = design @ theta
        prob = 0.5 * (1.0 + np.tanh(0.5 * z))
        return design.T @ (sample_weight * (prob - target)) + penalty * theta

    theta = np.zeros(design.shape[1])
    g = gradient(theta)
    lipschitz = 0.25 * float(sample_weight @ (design ** 2).sum(axis=1)) + 1.0 / C
    step = 1.0 / lipschitz
    value = objective(theta)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        if np.linalg.norm(g) < tol:
            break
        while True:
            candidate = theta - step * g
            candidate_value = objective(candidate)
            if candidate_value <= value - 1e-4 * step * float(g @ g) or step < 1e-20:
                break
            step *= 0.5
        new_g = gradient(candidate)
        s, d = candidate - theta, new_g - g
        curvature = float(s @ d)
        theta, g, value = candidate, new_g, candidate_value
        step = float(s @ s) / curvature if curvature > 0 else 1.0 / lipschitz
    else:
        if np.linalg.norm(g) >= tol:
            logger.warning(f"⚠️ Logistic regression (C={C}) hit {max_iter} iterations, |grad|={np.linalg.norm(g):.2e}")
    return LogRegModel(theta[:-1].copy(), float(theta[-1]), C, class_weights, iteration)


class LogRegProbeResult(BaseModel):
    roc_auc: float = Field(description="Test ROC-AUC of the model refit with the chosen C")
    best_c: float = Field(description="C with the highest validation ROC-AUC")
    validation: Dict[str, float] = Field(description="Validation ROC-AUC per C")


def logreg_probe_protocol(train: Tuple[np.ndarray, np.ndarray], valid: Tuple[np.ndarray, np.ndarray],
                          test: Tuple[np.ndarray, np.ndarray],
                          c_grid: Sequence[float] = LOGREG_C_GRID) -> LogRegProbeResult:
    """Pick C by validation ROC-AUC (ties to the smaller C), report test ROC-AUC."""
    splits = {"train": train, "valid": valid, "test": test}
    for name, (X, y) in splits.items():
        if X is None or len(X) == 0:
            raise ProbeError(f"The {name} split is missing or empty")
        _check_xy(X, y)
    scaler = standardize_fit(train[0])
    X_train, X_valid, X_test = (standardize_apply(scaler, s[0]) for s in (train, valid, test))

    best_c, best_auc, validation = None, -1.0, {}
    for C in sorted(c_grid):
        model = train_logreg(X_train, train[1], C)
        score = roc_auc(model.decision_function(X_valid), valid[1])
        validation[f"{C:g}"] = score
        if score > best_auc:
            best_c, best_auc = C, score
    model = train_logreg(X_train, train[1], best_c)
    test_auc = roc_auc(model.decision_function(X_test), test[1])
    logger.info(f"🎯 Logistic probe: C={best_c:g} valid AUC {best_auc:.4f}, test AUC {test_auc:.4f}")
    return LogRegProbeResult(roc_auc=test_auc, best_c=best_c, validation=validation)
