"""L1-regularized accent probes over segment representations.

Two probe families share one interface: a multinomial logistic regression and
a one-vs-rest squared-hinge linear SVM, both with an L1 penalty on the
coefficients (intercepts unpenalized) so that irrelevant representation
dimensions are shrunk to exactly zero. The layer sweep runs a stratified
80/20 split per layer, chooses the penalty by inner cross-validated
weighted-F1 on the training split, refits, and scores the held-out split.

Solvers: the logistic probe uses proximal gradient steps with FISTA momentum,
function-value restarts, support-restricted Newton refinements and a
KKT-residual stopping rule; the SVM probe uses cyclic coordinate descent with
per-coordinate Newton steps, backtracking line search and a working-set
Newton refinement, keeping its objective trace monotone. Both produce exact
zeros via soft thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .ingest import PhoneToken
from .repstore import SegrepStore, segment_matrix


@dataclass(frozen=True)
class ProbeConfig:
    probe_kind: str = "logreg"  # "logreg" | "svm"
    lambda_grid: tuple[float, ...] | None = None  # None -> auto path
    grid_size: int = 20
    grid_min_ratio: float = 1e-4
    cv_folds: int = 5
    seed: int = 0
    tol: float = 1e-6
    cv_tol: float = 1e-4  # looser KKT target inside the CV grid search
    max_iter: int = 200_000
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.probe_kind not in ("logreg", "svm"):
            raise ValidationError(f"unknown probe kind {self.probe_kind!r}")
        if self.lambda_grid is not None and len(self.lambda_grid) == 0:
            raise ValidationError("lambda_grid must be non-empty")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be >= 2")


@dataclass
class ProbeModel:
    """Fitted linear probe: class scores are X @ W.T + b."""

    kind: str
    W: np.ndarray  # (n_classes, dim)
    b: np.ndarray  # (n_classes,)
    lam: float
    classes: tuple
    objective_trace: list | None = None

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.W.T + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.argmax(self.decision_scores(X), axis=1)
        return np.asarray([self.classes[i] for i in idx])


@dataclass
class ProbeResult:
    per_layer_scores: dict[int, float]
    best_layer: int
    selected_features: tuple[int, ...]
    model: ProbeModel
    per_layer_lambda: dict[int, float] = field(default_factory=dict)
    train_mean: np.ndarray | None = None
    train_scale: np.ndarray | None = None


# --------------------------------------------------------------------------
# shared helpers

def _check_design(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, list]:
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite values")
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ValidationError("X and y disagree on sample count")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise ValidationError("y must contain at least two classes")
    return X, y, classes


def _one_hot(y: np.ndarray, classes: Sequence) -> np.ndarray:
    lut = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((y.shape[0], len(classes)))
    for i, v in enumerate(y.tolist()):
        Y[i, lut[v]] = 1.0
    return Y


def soft_threshold(a: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - thresh, 0.0)


def _kkt_residual(G: np.ndarray, W: np.ndarray, lam: float,
                  g_b: np.ndarray) -> float:
    at_zero = W == 0.0
    viol = np.where(
        at_zero,
        np.maximum(np.abs(G) - lam, 0.0),
        np.abs(G + lam * np.sign(W)),
    )
    return max(float(viol.max()), float(np.abs(g_b).max()))


def standardize_columns(X: np.ndarray, mean: np.ndarray | None = None,
                        scale: np.ndarray | None = None):
    """Z-score columns; constant columns get unit scale. Returns (Xs, mean, scale)."""
    X = np.asarray(X, dtype=float)
    if mean is None:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
    return (X - mean) / scale, mean, scale


# --------------------------------------------------------------------------
# multinomial logistic regression with L1

def _softmax(S: np.ndarray) -> np.ndarray:
    Z = S - S.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _nll_and_grad(X: np.ndarray, Y: np.ndarray, W: np.ndarray, b: np.ndarray):
    S = X @ W.T + b
    Z = S - S.max(axis=1, keepdims=True)
    lse = np.log(np.exp(Z).sum(axis=1)) + S.max(axis=1)
    nll = float(lse.sum() - (S * Y).sum())
    P = _softmax(S)
    R = P - Y
    return nll, R.T @ X, R.sum(axis=0)


def logreg_lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty that provably zeroes every coefficient.

    Evaluated at W = 0 with intercepts at the class log-frequencies, where the
    softmax probabilities equal the empirical class proportions.
    """
    X, y, classes = _check_design(X, y)
    Y = _one_hot(y, classes)
    pi = Y.mean(axis=0)
    G0 = (pi[None, :] - Y).T @ X
    return float(np.abs(G0).max())


def _logreg_support_newton(X, Y, W, b, lam, F):
    """One damped Newton step restricted to the current support.

    Solves the smooth quadratic model of the penalized objective over the
    nonzero coefficients (signs fixed) plus intercepts, then backtracks on the
    true objective. Returns (W, b, F, accepted).
    """
    n, d = X.shape
    K = Y.shape[1]
    S = _softmax(X @ W.T + b)
    nll, G, g_b = _nll_and_grad(X, Y, W, b)
    # per-class design slices: support columns plus an intercept column
    ones = np.ones((n, 1))
    designs, offsets, sizes = [], [], []
    total = 0
    for c in range(K):
        dims = np.flatnonzero(W[c] != 0.0)
        designs.append(np.hstack([X[:, dims], ones]))
        offsets.append(total)
        sizes.append(dims.size + 1)
        total += dims.size + 1
    g = np.zeros(total)
    for c in range(K):
        dims = np.flatnonzero(W[c] != 0.0)
        o = offsets[c]
        g[o:o + dims.size] = G[c, dims] + lam * np.sign(W[c, dims])
        g[o + dims.size] = g_b[c]
    H = np.zeros((total, total))
    for a in range(K):
        for bb in range(a, K):
            wgt = S[:, a] * ((1.0 if a == bb else 0.0) - S[:, bb])
            block = designs[a].T @ (designs[bb] * wgt[:, None])
            H[offsets[a]:offsets[a] + sizes[a], offsets[bb]:offsets[bb] + sizes[bb]] = block
            if a != bb:
                H[offsets[bb]:offsets[bb] + sizes[bb], offsets[a]:offsets[a] + sizes[a]] = block.T
    H[np.diag_indices(total)] += 1e-10
    try:
        delta = np.linalg.solve(H, -g)
    except np.linalg.LinAlgError:
        return W, b, F, False
    dW = np.zeros_like(W)
    db = np.zeros(K)
    for c in range(K):
        dims = np.flatnonzero(W[c] != 0.0)
        o = offsets[c]
        dW[c, dims] = delta[o:o + dims.size]
        db[c] = delta[o + dims.size]
    alpha = 1.0
    for _ in range(30):
        W_new = W + alpha * dW
        b_new = b + alpha * db
        nll_new = _nll_and_grad(X, Y, W_new, b_new)[0]
        F_new = nll_new + lam * np.abs(W_new).sum()
        if F_new <= F - 1e-12:
            return W_new, b_new, F_new, True
        alpha *= 0.5
    return W, b, F, False


def fit_l1_logreg(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 200_000,
    warm_start: tuple[np.ndarray, np.ndarray] | None = None,
    best_effort: bool = False,
) -> ProbeModel:
    """Minimize multinomial NLL + lam * sum|W| to KKT tolerance ``tol``.

    Proximal gradient steps with FISTA momentum and function-value restarts,
    interleaved with support-restricted Newton refinements that give the
    endgame quadratic convergence. Intercepts are unpenalized and reported
    mean-centered across classes. Expects column-standardized X (the penalty
    is scale-sensitive).
    """
    X, y, classes = _check_design(X, y)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    Y = _one_hot(y, classes)
    n, d = X.shape
    K = len(classes)

    Xa = np.hstack([X, np.ones((n, 1))])
    L = 0.5 * np.linalg.norm(Xa, 2) ** 2
    if L <= 0:
        raise NumericalError("degenerate design matrix")

    if warm_start is not None:
        W = warm_start[0].copy()
        b = warm_start[1].copy()
    else:
        W = np.zeros((K, d))
        b = np.log(np.maximum(Y.mean(axis=0), 1e-12))
        b -= b.mean()

    def prox_step(ZW, Zb):
        _, Gz, gz = _nll_and_grad(X, Y, ZW, Zb)
        Wn = soft_threshold(ZW - Gz / L, lam / L)
        bn = Zb - gz / L
        return Wn, bn

    nll, G, g_b = _nll_and_grad(X, Y, W, b)
    F = nll + lam * np.abs(W).sum()
    if _kkt_residual(G, W, lam, g_b) <= tol:
        b = b - b.mean()
        return ProbeModel("logreg", W, b, lam, tuple(classes))

    ZW, Zb = W.copy(), b.copy()
    t = 1.0
    window_F = F
    failed_support: bytes | None = None
    for it in range(1, max_iter + 1):
        Wn, bn = prox_step(ZW, Zb)
        nll_n, Gn, gbn = _nll_and_grad(X, Y, Wn, bn)
        Fn = nll_n + lam * np.abs(Wn).sum()
        if Fn > F + 1e-12:
            # momentum overshoot: restart from the current iterate (plain
            # ISTA step from W is guaranteed non-increasing at step 1/L)
            t = 1.0
            Wn, bn = prox_step(W, b)
            nll_n, Gn, gbn = _nll_and_grad(X, Y, Wn, bn)
            Fn = nll_n + lam * np.abs(Wn).sum()
            ZW, Zb = Wn.copy(), bn.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_next
            ZW = Wn + mom * (Wn - W)
            Zb = bn + mom * (bn - b)
            t = t_next
        W, b, F = Wn, bn, Fn
        if _kkt_residual(Gn, W, lam, gbn) <= tol:
            b = b - b.mean()
            return ProbeModel("logreg", W, b, lam, tuple(classes))
        if it % 10 == 0:
            support_sig = (W != 0.0).tobytes()
            if support_sig != failed_support:
                W2, b2, F2, accepted = _logreg_support_newton(X, Y, W, b, lam, F)
                if accepted:
                    W, b, F = W2, b2, F2
                    ZW, Zb, t = W.copy(), b.copy(), 1.0
                    failed_support = None
                    _, Gr, gbr = _nll_and_grad(X, Y, W, b)
                    if _kkt_residual(Gr, W, lam, gbr) <= tol:
                        b = b - b.mean()
                        return ProbeModel("logreg", W, b, lam, tuple(classes))
                else:
                    failed_support = support_sig
        if it % 500 == 0:
            # objective-stall floor for ill-posed corners (near-separable data
            # at vanishing penalties) where the KKT point is out of reach
            if window_F - F <= 1e-13 * max(1.0, abs(F)):
                b = b - b.mean()
                return ProbeModel("logreg", W, b, lam, tuple(classes))
            window_F = F
    if best_effort:
        b = b - b.mean()
        return ProbeModel("logreg", W, b, lam, tuple(classes))
    raise NumericalError(
        f"L1 logistic probe made no progress after {max_iter} iterations"
    )


# --------------------------------------------------------------------------
# one-vs-rest squared-hinge SVM with L1

def _svm_null_intercept(yc: np.ndarray) -> float:
    # exact minimizer of sum max(0, 1 - y*b)^2 when both classes are present
    return float(yc.mean())


def svm_lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty that zeroes every one-vs-rest SVM coefficient."""
    X, y, classes = _check_design(X, y)
    worst = 0.0
    for c in classes:
        yc = np.where(y == c, 1.0, -1.0)
        b = _svm_null_intercept(yc)
        h = np.maximum(0.0, 1.0 - yc * b)
        g = -2.0 * (yc * h) @ X
        worst = max(worst, float(np.abs(g).max()))
    return worst


def _fit_binary_svm(X, yc, lam, tol, max_iter, w0=None, b0=None,
                    best_effort=False):
    """Cyclic coordinate descent with per-coordinate Newton steps.

    Each coordinate takes a soft-thresholded Newton step using the active-set
    curvature, backtracking (step halving) until the true objective decreases;
    a Newton refinement on the current (support, active margins) working set
    accelerates the endgame. The per-sweep objective trace is therefore
    monotone non-increasing. Stops at KKT residual <= tol, or once the
    objective decrease per sweep falls below a relative stall floor (the
    near-interpolation regime at vanishing penalties, where the exact KKT
    point is not reachable in reasonable time).
    """
    n, d = X.shape
    w = np.zeros(d) if w0 is None else w0.copy()
    b = _svm_null_intercept(yc) if b0 is None else float(b0)
    s = X @ w + b
    U = yc[:, None] * X
    trace: list[float] = []

    def hinge_sq(scores):
        v = np.maximum(0.0, 1.0 - yc * scores)
        return float(v @ v)

    loss = hinge_sq(s)
    stall = 0
    for _sweep in range(max_iter):
        prev_total = loss + lam * float(np.abs(w).sum())
        # intercept (unpenalized) first
        v = np.maximum(0.0, 1.0 - yc * s)
        gb = -2.0 * float(yc @ v)
        hb = 2.0 * max(float((v > 0).sum()), 1.0)
        step = -gb / hb
        for _ in range(30):
            if step == 0.0:
                break
            new_loss = hinge_sq(s + step)
            if new_loss <= loss + 1e-12:
                b += step
                s += step
                loss = new_loss
                break
            step *= 0.5
        for j in range(d):
            xj = X[:, j]
            v = np.maximum(0.0, 1.0 - yc * s)
            gj = -2.0 * float((yc * v) @ xj)
            active = v > 0
            hj = 2.0 * float(xj[active] @ xj[active]) + 1e-12
            z = float(soft_threshold(np.asarray(w[j] - gj / hj), lam / hj))
            direction = z - w[j]
            if direction == 0.0:
                continue
            alpha = 1.0
            for _ in range(30):
                wj_new = w[j] + alpha * direction
                new_loss = hinge_sq(s + alpha * direction * xj)
                delta = (new_loss - loss) + lam * (abs(wj_new) - abs(w[j]))
                if delta <= 1e-12:
                    s += alpha * direction * xj
                    w[j] = wj_new
                    loss = new_loss
                    break
                alpha *= 0.5
        # working-set Newton refinement (fixed support and active margins)
        for _ in range(25):
            support = np.flatnonzero(w != 0.0)
            v = np.maximum(0.0, 1.0 - yc * s)
            active = v > 0
            if support.size == 0 or not active.any():
                break
            UA = U[active][:, support]
            cA = yc[active]
            k = support.size
            M = np.empty((k + 1, k + 1))
            M[:k, :k] = UA.T @ UA
            M[:k, -1] = UA.T @ cA
            M[-1, :k] = M[:k, -1]
            M[-1, -1] = float(cA @ cA)
            rhs = np.concatenate([
                UA.T @ np.ones(int(active.sum())) - 0.5 * lam * np.sign(w[support]),
                [float(cA.sum())],
            ])
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
            dw = np.zeros(d)
            dw[support] = sol[:-1] - w[support]
            db = float(sol[-1]) - b
            if np.abs(dw).max() <= 1e-16 and abs(db) <= 1e-16:
                break
            ds = X @ dw + db
            cur_total = loss + lam * float(np.abs(w).sum())
            alpha = 1.0
            accepted = False
            for _ in range(30):
                new_loss = hinge_sq(s + alpha * ds)
                new_total = new_loss + lam * float(np.abs(w + alpha * dw).sum())
                if new_total <= cur_total - 1e-12:
                    s += alpha * ds
                    w = w + alpha * dw
                    b += alpha * db
                    loss = new_loss
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
        total = loss + lam * float(np.abs(w).sum())
        trace.append(total)
        v = np.maximum(0.0, 1.0 - yc * s)
        g = -2.0 * (yc * v) @ X
        gb = -2.0 * float(yc @ v)
        if _kkt_residual(g, w, lam, np.asarray([gb])) <= tol:
            return w, b, trace
        if prev_total - total <= 1e-12 * max(1.0, abs(total)):
            stall += 1
            if stall >= 3:
                return w, b, trace
        else:
            stall = 0
    if best_effort:
        return w, b, trace
    raise NumericalError(
        f"L1 SVM probe made no progress after {max_iter} sweeps"
    )


def fit_l1_svm(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 20_000,
    warm_start: tuple[np.ndarray, np.ndarray] | None = None,
    best_effort: bool = False,
) -> ProbeModel:
    """One-vs-rest squared-hinge SVM with an L1 penalty, by coordinate descent.

    Each class's objective sum_i max(0, 1 - y_i s_i)^2 + lam * |w|_1 decreases
    monotonically across sweeps (recorded in ``objective_trace``). Prediction
    is the argmax of class scores.
    """
    X, y, classes = _check_design(X, y)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    n, d = X.shape
    K = len(classes)
    W = np.zeros((K, d))
    b = np.zeros(K)
    traces = []
    for k, c in enumerate(classes):
        yc = np.where(y == c, 1.0, -1.0)
        w0 = warm_start[0][k] if warm_start is not None else None
        b0 = warm_start[1][k] if warm_start is not None else None
        W[k], b[k], trace = _fit_binary_svm(X, yc, lam, tol, max_iter, w0, b0,
                                            best_effort=best_effort)
        traces.append(trace)
    return ProbeModel("svm", W, b, lam, tuple(classes), objective_trace=traces)


def fit_probe(X, y, lam, cfg: ProbeConfig,
              warm_start=None, loose: bool = False) -> ProbeModel:
    # CV path fits use the looser tolerance and a bounded best-effort budget;
    # penalty choice by weighted-F1 is insensitive to the last digits, and the
    # chosen model is refit at cfg.tol afterwards
    tol = max(cfg.tol, cfg.cv_tol) if loose else cfg.tol
    if cfg.probe_kind == "logreg":
        max_iter = 5_000 if loose else cfg.max_iter
        return fit_l1_logreg(X, y, lam, tol=tol, max_iter=max_iter,
                             warm_start=warm_start, best_effort=loose)
    max_iter = 300 if loose else max(cfg.max_iter // 10, 1000)
    return fit_l1_svm(X, y, lam, tol=tol, max_iter=max_iter,
                      warm_start=warm_start, best_effort=loose)


def lambda_max_for(X, y, kind: str) -> float:
    return logreg_lambda_max(X, y) if kind == "logreg" else svm_lambda_max(X, y)


# --------------------------------------------------------------------------
# scoring and splits

def weighted_f1(y_true: Sequence, y_pred: Sequence) -> float:
    """Support-weighted mean of per-class F1 scores, as a percentage.

    Classes absent from y_true carry zero weight. Invariant under any
    consistent relabeling of classes.
    """
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValidationError("length mismatch between y_true and y_pred")
    if not y_true:
        raise ValidationError("empty label sequences")
    n = len(y_true)
    total = 0.0
    for c in sorted(set(y_true)):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        support = tp + fn
        f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
        total += (support / n) * f1
    return 100.0 * total


def stratified_split(y: Sequence, test_fraction: float, seed: int):
    """Deterministic per-class split; returns (train_idx, test_idx) arrays."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        if idx.size < 2:
            train.extend(idx.tolist())
            continue
        n_test = int(round(test_fraction * idx.size))
        n_test = min(max(n_test, 1), idx.size - 1)
        test.extend(idx[:n_test].tolist())
        train.extend(idx[n_test:].tolist())
    return np.asarray(sorted(train), dtype=int), np.asarray(sorted(test), dtype=int)


def stratified_folds(y: Sequence, k: int, seed: int, attempts: int = 5):
    """K stratified folds as (train_idx, val_idx) pairs.

    If some fold's training part loses a class entirely, the split is retried
    with the next seed; after ``attempts`` failures an error is raised.
    """
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    for attempt in range(attempts):
        rng = np.random.default_rng(seed + attempt)
        assignment = np.zeros(y.shape[0], dtype=int)
        for c in classes:
            idx = np.flatnonzero(y == c)
            idx = idx[rng.permutation(idx.size)]
            assignment[idx] = np.arange(idx.size) % k
        folds = []
        ok = True
        for f in range(k):
            val = np.flatnonzero(assignment == f)
            train = np.flatnonzero(assignment != f)
            if val.size == 0 or len(set(y[train].tolist())) < len(classes):
                ok = False
                break
            folds.append((train, val))
        if ok:
            return folds
    raise ValidationError(
        f"could not build {k} stratified folds with every class present "
        f"after {attempts} attempts"
    )


def lambda_path(lam_max: float, size: int, min_ratio: float) -> np.ndarray:
    """Descending geometric penalty path from lam_max down to min_ratio*lam_max."""
    if lam_max <= 0:
        return np.asarray([0.0])
    return np.geomspace(lam_max, min_ratio * lam_max, size)


def _path_fit_scores(X_tr, y_tr, X_val, y_val, grid, cfg: ProbeConfig) -> list[float]:
    """Warm-started descending penalty path scored on the validation fold.

    Once a fit separates its training fold perfectly, smaller penalties are
    pruned and reuse that score: they cannot win the tie-break (ties prefer
    stronger shrinkage) and deep fits on separated data are the one regime
    where the solvers are slow.
    """
    scores: list[float] = []
    warm = None
    saturated_score = None
    for lam in grid:
        if saturated_score is not None:
            scores.append(saturated_score)
            continue
        model = fit_probe(X_tr, y_tr, float(lam), cfg, warm_start=warm, loose=True)
        warm = (model.W, model.b)
        score = weighted_f1(y_val, model.predict(X_val))
        scores.append(score)
        if weighted_f1(y_tr, model.predict(X_tr)) == 100.0:
            saturated_score = score
    return scores


def cv_choose_lambda(X: np.ndarray, y: np.ndarray, cfg: ProbeConfig) -> tuple[float, dict]:
    """Inner-CV grid search on weighted-F1 with the one-standard-error rule.

    Among penalties whose mean CV score is within one standard error of the
    best, the largest (sparsest) wins; exact ties also prefer the larger
    penalty. X must already be standardized with the outer training-split
    statistics.
    """
    if cfg.lambda_grid is not None:
        grid = np.asarray(sorted(cfg.lambda_grid, reverse=True), dtype=float)
    else:
        grid = lambda_path(lambda_max_for(X, y, cfg.probe_kind),
                           cfg.grid_size, cfg.grid_min_ratio)
    folds = stratified_folds(y, cfg.cv_folds, cfg.seed)
    fold_scores = np.zeros((len(folds), grid.size))
    for fi, (tr, val) in enumerate(folds):
        fold_scores[fi] = _path_fit_scores(X[tr], y[tr], X[val], y[val], grid, cfg)
    mean_scores = fold_scores.mean(axis=0)
    best = 0
    for g in range(1, grid.size):
        if mean_scores[g] > mean_scores[best] + 1e-12:
            best = g
    se_best = float(fold_scores[:, best].std(ddof=1) / np.sqrt(len(folds)))
    chosen = best
    for g in range(best):  # grid is descending, so smaller g = larger penalty
        if mean_scores[g] >= mean_scores[best] - se_best - 1e-12:
            chosen = g
            break
    info = {"grid": grid.tolist(), "cv_scores": mean_scores.tolist(),
            "se_best": se_best, "best_index": best, "chosen_index": chosen}
    return float(grid[chosen]), info


def select_features(model: ProbeModel, threshold: float = 0.0) -> tuple[int, ...]:
    """Indices whose coefficient magnitude exceeds ``threshold`` in any class."""
    mags = np.abs(model.W).max(axis=0)
    return tuple(int(j) for j in np.flatnonzero(mags > threshold))


def sweep_layers(
    layer_features: Mapping[int, np.ndarray],
    y: Sequence,
    cfg: ProbeConfig,
) -> ProbeResult:
    """Probe every layer and keep the best by held-out weighted-F1.

    Per layer: stratified 80/20 split (same seed, hence same token split
    across layers), z-scoring by training statistics, inner-CV penalty choice,
    refit on the training split, score on the test split. Ties on the best
    layer go to the lowest layer index.
    """
    if not layer_features:
        raise ValidationError("no layers supplied")
    y = np.asarray(y)
    train_idx, test_idx = stratified_split(y, cfg.test_fraction, cfg.seed)
    if len(set(y[train_idx].tolist())) < 2 or len(set(y[test_idx].tolist())) < 2:
        raise ValidationError(
            "need at least two accent classes on both sides of the 80/20 split"
        )
    scores: dict[int, float] = {}
    lambdas: dict[int, float] = {}
    best_layer = None
    best_model = None
    best_scaler = None
    for layer in sorted(layer_features):
        X = np.asarray(layer_features[layer], dtype=float)
        if X.shape[0] != y.shape[0]:
            raise ValidationError(f"layer {layer}: feature/label count mismatch")
        X_tr, mean, scale = standardize_columns(X[train_idx])
        X_te, _, _ = standardize_columns(X[test_idx], mean, scale)
        lam, _ = cv_choose_lambda(X_tr, y[train_idx], cfg)
        model = fit_probe(X_tr, y[train_idx], lam, cfg)
        score = weighted_f1(y[test_idx], model.predict(X_te))
        scores[layer] = score
        lambdas[layer] = lam
        if best_layer is None or score > scores[best_layer] + 1e-12:
            best_layer = layer
            best_model = model
            best_scaler = (mean, scale)
    assert best_model is not None and best_scaler is not None
    return ProbeResult(
        per_layer_scores=scores,
        best_layer=int(best_layer),
        selected_features=select_features(best_model),
        model=best_model,
        per_layer_lambda=lambdas,
        train_mean=best_scaler[0],
        train_scale=best_scaler[1],
    )


def layer_sweep(store: SegrepStore, tokens: Sequence[PhoneToken],
                cfg: ProbeConfig) -> ProbeResult:
    """sweep_layers over per-layer segment vectors pulled from a SEGREP store."""
    y = np.asarray([tok.accent for tok in tokens])
    features = {
        layer: segment_matrix(store, tokens, layer)
        for layer in range(store.manifest.n_layers)
    }
    return sweep_layers(features, y, cfg)
