"""Representation-space distances and the accent-rating regression.

Distances are average Euclidean distances from a token's segment vector to
native (AE) and non-native (IE) baseline banks. Accent ratings are modelled
with a multinomial logistic regression on the (z-scored) distances, with
treatment-coded word position (initial as reference) and optional
distance x position interactions; no/negligible is the reference outcome.
Standard errors come from the inverse observed information at the MLE.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .ingest import AccentLabel, PhoneToken, WordPosition


@dataclass(frozen=True)
class BaselineBank:
    """Reference segment vectors for one variety and segment category."""

    variety: str  # "AE" | "IE"
    segment: str
    vectors: np.ndarray  # (m, dim)

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValidationError(
                f"baseline bank {self.variety}/{self.segment}: need a non-empty "
                f"(m, dim) matrix, got shape {v.shape}"
            )
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def average_distance(v: np.ndarray, bank: BaselineBank, cap: int | None = 2000,
                     seed: int = 0) -> float:
    """Mean Euclidean distance from ``v`` to (a capped subsample of) the bank.

    When the bank exceeds ``cap``, a uniform random subsample with the fixed
    seed is used; the same seed always selects the same subsample.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != bank.dim:
        raise ValidationError(
            f"vector dim {v.shape[0]} does not match bank dim {bank.dim}"
        )
    B = bank.vectors
    if cap is not None and B.shape[0] > cap:
        idx = np.sort(np.random.default_rng(seed).choice(B.shape[0], cap, replace=False))
        B = B[idx]
    return float(np.linalg.norm(B - v, axis=1).mean())


@dataclass(frozen=True)
class DistanceRecord:
    token: PhoneToken
    d_ae: float
    d_ie: float
    z_ae: float | None = None
    z_ie: float | None = None

    @property
    def position(self) -> WordPosition:
        return self.token.position

    @property
    def accent(self) -> AccentLabel:
        return self.token.accent


def build_distance_records(
    tokens: Sequence[PhoneToken],
    vectors: np.ndarray,
    ae_bank: BaselineBank,
    ie_bank: BaselineBank,
    cap: int | None = 2000,
    seed: int = 0,
) -> list[DistanceRecord]:
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape[0] != len(tokens):
        raise ValidationError("one segment vector per token required")
    records = [
        DistanceRecord(
            token=tok,
            d_ae=average_distance(vectors[i], ae_bank, cap, seed),
            d_ie=average_distance(vectors[i], ie_bank, cap, seed),
        )
        for i, tok in enumerate(tokens)
    ]
    return standardize_records(records)


def standardize_records(records: Sequence[DistanceRecord]) -> list[DistanceRecord]:
    """Fill the z-scored distance copies over the analysis set."""
    d = np.asarray([[r.d_ae, r.d_ie] for r in records], dtype=float)
    mu = d.mean(axis=0)
    sd = np.where(d.std(axis=0) > 1e-12, d.std(axis=0), 1.0)
    z = (d - mu) / sd
    return [
        replace(r, z_ae=float(z[i, 0]), z_ie=float(z[i, 1]))
        for i, r in enumerate(records)
    ]


@dataclass(frozen=True)
class RegressionSpec:
    interactions: bool = True
    standardize: bool = True
    alpha: float = 0.05  # significance cut used when reporting interactions
    tol: float = 1e-8
    max_iter: int = 200
    # |beta| beyond this on z-scored predictors means the likelihood has no
    # finite maximizer (quasi-complete separation), not a real effect
    divergence_bound: float = 30.0


MAIN_TERMS = ("d_ae", "d_ie", "medial", "final")
INTERACTION_TERMS = ("d_ae:medial", "d_ae:final", "d_ie:medial", "d_ie:final")


def build_design(records: Sequence[DistanceRecord], spec: RegressionSpec):
    """Design matrix with intercept; returns (X, terms, y_index, levels)."""
    if not records:
        raise ValidationError("no distance records")
    d = np.asarray([[r.d_ae, r.d_ie] for r in records], dtype=float)
    if spec.standardize:
        mu = d.mean(axis=0)
        sd = np.where(d.std(axis=0) > 1e-12, d.std(axis=0), 1.0)
        d = (d - mu) / sd
    medial = np.asarray([r.position is WordPosition.MEDIAL for r in records], float)
    final = np.asarray([r.position is WordPosition.FINAL for r in records], float)
    cols = [np.ones(len(records)), d[:, 0], d[:, 1], medial, final]
    terms = ["intercept", *MAIN_TERMS]
    if spec.interactions:
        cols += [d[:, 0] * medial, d[:, 0] * final, d[:, 1] * medial, d[:, 1] * final]
        terms += list(INTERACTION_TERMS)
    X = np.column_stack(cols)

    accents = [r.accent for r in records]
    if AccentLabel.NO_NEGLIGIBLE not in accents:
        raise ValidationError("reference level no_negligible absent from records")
    levels = [lv for lv in (AccentLabel.MILD, AccentLabel.STRONG) if lv in accents]
    if not levels:
        raise ValidationError("need at least two outcome levels")
    index = {AccentLabel.NO_NEGLIGIBLE: 0}
    index.update({lv: i + 1 for i, lv in enumerate(levels)})
    y = np.asarray([index[a] for a in accents], dtype=int)
    return X, tuple(terms), y, tuple(levels)


def mnl_nll_grad(X: np.ndarray, y: np.ndarray, B: np.ndarray):
    """NLL, gradient and probabilities for the reference-coded multinomial.

    ``B`` is (n_levels, p) for the non-reference levels; the reference class
    has a fixed zero score.
    """
    eta = X @ B.T  # (n, K-1)
    m = np.maximum(eta.max(axis=1, keepdims=True), 0.0)
    denom = np.exp(-m)[:, 0] + np.exp(eta - m).sum(axis=1)
    log_denom = m[:, 0] + np.log(denom)
    pick = np.zeros(X.shape[0])
    Y = np.zeros_like(eta)
    nonref = y > 0
    pick[nonref] = eta[nonref, y[nonref] - 1]
    Y[nonref, y[nonref] - 1] = 1.0
    nll = float((log_denom - pick).sum())
    P = np.exp(eta - log_denom[:, None])  # (n, K-1)
    G = (P - Y).T @ X  # (K-1, p)
    return nll, G, P


def _mnl_hessian(X: np.ndarray, P: np.ndarray) -> np.ndarray:
    k1 = P.shape[1]
    p = X.shape[1]
    H = np.zeros((k1 * p, k1 * p))
    for a in range(k1):
        for b in range(a, k1):
            w = P[:, a] * ((1.0 if a == b else 0.0) - P[:, b])
            block = X.T @ (X * w[:, None])
            H[a * p:(a + 1) * p, b * p:(b + 1) * p] = block
            if a != b:
                H[b * p:(b + 1) * p, a * p:(a + 1) * p] = block
    return H


@dataclass(frozen=True)
class TermStats:
    beta: float
    se: float
    z: float
    p: float


@dataclass
class RegressionResult:
    reference: AccentLabel
    levels: tuple[AccentLabel, ...]
    terms: tuple[str, ...]
    coef: dict[AccentLabel, dict[str, TermStats]]
    loglik: float
    n: int
    probs: np.ndarray = field(repr=False)  # (n, K) including the reference
    spec: RegressionSpec = RegressionSpec()

    def significant_rows(self):
        """Rows for reporting: main effects always; interactions when p < alpha."""
        rows = []
        for level in self.levels:
            for term in self.terms:
                if term == "intercept":
                    continue
                st = self.coef[level][term]
                if ":" in term and st.p >= self.spec.alpha:
                    continue
                rows.append((level, term, st))
        return rows


def _wald(beta: np.ndarray, se: np.ndarray):
    z = beta / se
    p = np.asarray([math.erfc(abs(v) / math.sqrt(2.0)) for v in z])
    return z, p


def fit_multinomial(records: Sequence[DistanceRecord],
                    spec: RegressionSpec = RegressionSpec()) -> RegressionResult:
    """Maximum-likelihood multinomial fit of accent on distances by Newton.

    Converges the gradient infinity-norm to ``spec.tol``. Detects
    quasi-complete separation (diverging coefficients) and singular
    information matrices, naming the offending column.
    """
    X, terms, y, levels = build_design(records, spec)
    return fit_mnl_design(X, y, terms, levels, spec)


def fit_mnl_design(X: np.ndarray, y: np.ndarray, terms: Sequence[str],
                   levels: Sequence[AccentLabel],
                   spec: RegressionSpec = RegressionSpec()) -> RegressionResult:
    """Newton MLE on a prebuilt design; ``y`` uses 0 for the reference level."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    terms = tuple(terms)
    levels = tuple(levels)
    n, p = X.shape
    k1 = len(levels)
    B = np.zeros((k1, p))
    nll, G, P = mnl_nll_grad(X, y, B)
    for _ in range(spec.max_iter):
        if np.abs(G).max() <= spec.tol:
            break
        H = _mnl_hessian(X, P)
        # tiny ridge keeps the step solvable while coefficients diverge, so
        # true separation is reported as such rather than as a singular solve
        H_step = H + 1e-10 * np.eye(H.shape[0])
        try:
            step = np.linalg.solve(H_step, G.reshape(-1))
        except np.linalg.LinAlgError:
            _raise_singular(H, terms, k1, levels)
        step = step.reshape(k1, p)
        scale = 1.0
        for _ in range(40):
            B_new = B - scale * step
            nll_new, G_new, P_new = mnl_nll_grad(X, y, B_new)
            if nll_new <= nll + 1e-12:
                break
            scale *= 0.5
        B, nll, G, P = B_new, nll_new, G_new, P_new
        if np.abs(B).max() > spec.divergence_bound:
            raise NumericalError(
                "quasi-complete separation: coefficients diverging "
                f"(|beta| > {spec.divergence_bound})"
            )
    else:
        raise NumericalError(
            f"multinomial fit did not converge in {spec.max_iter} Newton steps"
        )
    if np.abs(B).max() > spec.divergence_bound:
        raise NumericalError(
            "quasi-complete separation: coefficients diverging "
            f"(|beta| > {spec.divergence_bound})"
        )

    H = _mnl_hessian(X, P)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        _raise_singular(H, terms, k1, levels)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0)).reshape(k1, p)
    if np.any(se == 0.0):
        _raise_singular(H, terms, k1, levels)

    coef: dict[AccentLabel, dict[str, TermStats]] = {}
    for li, level in enumerate(levels):
        z, pv = _wald(B[li], se[li])
        coef[level] = {
            term: TermStats(float(B[li, ti]), float(se[li, ti]), float(z[ti]), float(pv[ti]))
            for ti, term in enumerate(terms)
        }

    full_probs = np.hstack([(1.0 - P.sum(axis=1))[:, None], P])
    return RegressionResult(
        reference=AccentLabel.NO_NEGLIGIBLE,
        levels=levels,
        terms=terms,
        coef=coef,
        loglik=-nll,
        n=n,
        probs=full_probs,
        spec=spec,
    )


def _raise_singular(H: np.ndarray, terms, k1: int, levels) -> None:
    eigvals, eigvecs = np.linalg.eigh(H)
    v = eigvecs[:, 0]
    worst = int(np.argmax(np.abs(v)))
    p = len(terms)
    term = terms[worst % p]
    level = levels[worst // p]
    raise NumericalError(
        f"singular information matrix; offending column {term!r} "
        f"(level {level.token})"
    )


def project_2d(vectors: np.ndarray, labels: Sequence) -> tuple[np.ndarray, list]:
    """PCA projection of pooled, centered vectors onto 2 components.

    Component signs are fixed (largest-magnitude loading positive) so output
    is deterministic.
    """
    V = np.asarray(vectors, dtype=float)
    if V.shape[0] < 3:
        raise ValidationError("need at least 3 vectors for a 2-D projection")
    Vc = V - V.mean(axis=0)
    U, s, Vt = np.linalg.svd(Vc, full_matrices=False)
    coords = np.zeros((V.shape[0], 2))
    for k in range(min(2, s.size)):
        direction = Vt[k]
        sign = 1.0 if direction[np.argmax(np.abs(direction))] >= 0 else -1.0
        coords[:, k] = sign * U[:, k] * s[k]
    return coords, list(labels)
