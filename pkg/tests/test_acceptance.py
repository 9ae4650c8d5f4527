"""Acceptance suite: one test per criterion, each printing a PASS line.

Expected values come from independent oracles computed inside this module
(plain least squares, definitional gradients, finite differences, parametric
simulation), never from the code paths under test.
"""
import time

import numpy as np

from segprobe.distreg import (
    BaselineBank,
    DistanceRecord,
    RegressionSpec,
    build_distance_records,
    fit_multinomial,
    mnl_nll_grad,
)
from segprobe.ingest import AccentLabel, PhoneToken, WordPosition
from segprobe.phonfeat import (
    FEATURE_NAMES,
    FeatureMapping,
    FeatureModelConfig,
    TARGET_PAIRS,
    evaluate_features,
    train_feature_model,
)
from segprobe.probe import (
    ProbeConfig,
    cv_choose_lambda,
    fit_l1_logreg,
    fit_l1_svm,
    logreg_lambda_max,
    select_features,
    standardize_columns,
    svm_lambda_max,
    weighted_f1,
)
from segprobe.svcca import CcaConfig, correlate_features, relative_weights, svcca_corr, truncated_projection


def _report(num: int, name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {num:2d}] {name}: PASS{suffix}")


# --------------------------------------------------------------------------
# 1. SVCCA oracle equivalence

def test_criterion_1_svcca_matches_ols_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(5, 21))
        X = rng.normal(size=(200, d))
        y = rng.normal(size=200)
        rho = svcca_corr(X, y, CcaConfig())
        U, s = truncated_projection(X, 0.99)
        T = U * s
        coef, *_ = np.linalg.lstsq(T, y - y.mean(), rcond=None)
        resid = (y - y.mean()) - T @ coef
        yc = y - y.mean()
        r2 = 1.0 - float(resid @ resid) / float(yc @ yc)
        worst = max(worst, abs(rho ** 2 - r2))
        assert abs(rho ** 2 - r2) <= 1e-8
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    _report(1, "svcca rho^2 equals OLS R^2 on 100 instances",
            f"worst gap {worst:.2e}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 2. L1 KKT suite

def _oracle_logreg_grad(X, y, W, b, classes):
    G = np.zeros_like(W)
    g_b = np.zeros(len(classes))
    for i in range(X.shape[0]):
        s = W @ X[i] + b
        p = np.exp(s - s.max())
        p /= p.sum()
        for c in range(len(classes)):
            coeff = p[c] - (1.0 if y[i] == classes[c] else 0.0)
            G[c] += coeff * X[i]
            g_b[c] += coeff
    return G, g_b


def _oracle_svm_grad(X, y, W, b, classes):
    G = np.zeros_like(W)
    g_b = np.zeros(len(classes))
    for k, c in enumerate(classes):
        yc = np.where(y == c, 1.0, -1.0)
        for i in range(X.shape[0]):
            m = 1.0 - yc[i] * (X[i] @ W[k] + b[k])
            if m > 0:
                G[k] += -2.0 * yc[i] * m * X[i]
                g_b[k] += -2.0 * yc[i] * m
    return G, g_b


def _kkt(G, g_b, W, lam):
    viol = np.where(W == 0.0, np.maximum(np.abs(G) - lam, 0.0),
                    np.abs(G + lam * np.sign(W)))
    return max(float(viol.max()), float(np.abs(g_b).max()))


def test_criterion_2_l1_kkt_suite():
    t0 = time.monotonic()
    rng = np.random.default_rng(202)
    fracs = (0.75, 0.3, 0.05)
    worst = 0.0
    for trial in range(25):
        n = int(rng.integers(40, 100))
        d = int(rng.integers(3, 20))
        X, _, _ = standardize_columns(rng.normal(size=(n, d)))
        y = rng.integers(0, 3, size=n)
        while len(set(y.tolist())) < 2:
            y = rng.integers(0, 3, size=n)
        frac = fracs[trial % len(fracs)]

        lam = logreg_lambda_max(X, y) * frac
        model = fit_l1_logreg(X, y, lam, tol=1e-6)
        G, g_b = _oracle_logreg_grad(X, y, model.W, model.b, model.classes)
        res = _kkt(G, g_b, model.W, lam)
        worst = max(worst, res)
        assert res <= 1e-6 * 1.05

        lam = svm_lambda_max(X, y) * frac
        model = fit_l1_svm(X, y, lam, tol=1e-6)
        G, g_b = _oracle_svm_grad(X, y, model.W, model.b, model.classes)
        res = _kkt(G, g_b, model.W, lam)
        worst = max(worst, res)
        assert res <= 1e-6 * 1.05

    # analytic full-shrinkage threshold gives exactly empty support
    for seed in range(5):
        rng2 = np.random.default_rng(300 + seed)
        X, _, _ = standardize_columns(rng2.normal(size=(60, 8)))
        y = rng2.integers(0, 3, size=60)
        assert np.all(fit_l1_logreg(X, y, logreg_lambda_max(X, y) * (1 + 1e-9)).W == 0.0)
        assert np.all(fit_l1_svm(X, y, svm_lambda_max(X, y) * (1 + 1e-9)).W == 0.0)

    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    _report(2, "L1 probes satisfy subgradient optimality on 50 instances",
            f"worst residual {worst:.2e}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 3. Planted-support recovery

def test_criterion_3_planted_support_recovery():
    # generator: 3 classes, 200 samples, 50 features; class c's mean sits 3.5
    # sigma out along informative dim c (simplex corners), unit noise elsewhere
    successes = {"logreg": 0, "svm": 0}
    n_seeds = 20
    for seed in range(n_seeds):
        rng = np.random.default_rng(1000 + seed)
        y = rng.integers(0, 3, size=200)
        X = rng.normal(size=(200, 50))
        for c in range(3):
            X[y == c, c] += 3.5
        Xs, _, _ = standardize_columns(X)
        for kind in ("logreg", "svm"):
            cfg = ProbeConfig(probe_kind=kind, seed=seed)
            lam, _ = cv_choose_lambda(Xs, y, cfg)
            model = (fit_l1_logreg if kind == "logreg" else fit_l1_svm)(Xs, y, lam)
            sel = set(select_features(model))
            if sel and sel <= {0, 1, 2}:
                successes[kind] += 1
    for kind, wins in successes.items():
        assert wins >= 0.9 * n_seeds, f"{kind}: {wins}/{n_seeds}"
    _report(3, "CV-selected support within the planted support",
            f"logreg {successes['logreg']}/20, svm {successes['svm']}/20")


# --------------------------------------------------------------------------
# 4. Multinomial regression recovery

def _token(accent, position, idx):
    return PhoneToken("u", "x", "w000", position, 0.0, 0.1, accent, idx)


def _simulate(rng, beta, n):
    z = rng.normal(size=(n, 2))
    positions = rng.choice(list(WordPosition), size=n)
    med = np.asarray([p is WordPosition.MEDIAL for p in positions], float)
    fin = np.asarray([p is WordPosition.FINAL for p in positions], float)
    X = np.column_stack([np.ones(n), z[:, 0], z[:, 1], med, fin,
                         z[:, 0] * med, z[:, 0] * fin, z[:, 1] * med, z[:, 1] * fin])
    eta = X @ beta.T
    denom = 1.0 + np.exp(eta).sum(axis=1)
    p_ref = 1.0 / denom
    p1 = np.exp(eta[:, 0]) / denom
    u = rng.uniform(size=n)
    y = np.where(u < p_ref, 0, np.where(u < p_ref + p1, 1, 2))
    accents = (AccentLabel.NO_NEGLIGIBLE, AccentLabel.MILD, AccentLabel.STRONG)
    return [
        DistanceRecord(_token(accents[y[i]], positions[i], i), z[i, 0], z[i, 1])
        for i in range(n)
    ]


def test_criterion_4_multinomial_recovery():
    beta = np.asarray([
        [0.2, 0.8, -0.6, 0.1, -0.2, 0.3, -0.1, 0.2, 0.0],
        [-0.3, 1.4, -1.1, 0.2, 0.1, -0.2, 0.4, 0.1, -0.3],
    ])
    wins = 0
    n_seeds = 100
    for seed in range(n_seeds):
        rng = np.random.default_rng(4000 + seed)
        records = _simulate(rng, beta, n=5000)
        res = fit_multinomial(records, RegressionSpec(standardize=False))
        ok = True
        for li, level in enumerate(res.levels):
            for ti, term in enumerate(res.terms):
                st = res.coef[level][term]
                if abs(st.beta - beta[li, ti]) > 3.0 * st.se:
                    ok = False
        wins += ok
        if seed == 0:
            assert np.max(np.abs(res.probs.sum(axis=1) - 1.0)) < 1e-12
    assert wins >= 95, f"{wins}/100"

    # analytic gradient vs central finite differences, relative 1e-6
    rng = np.random.default_rng(4242)
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 3))])
    y = rng.integers(0, 3, size=80)
    B = rng.normal(size=(2, 4)) * 0.5
    _, G, _ = mnl_nll_grad(X, y, B)
    eps = 1e-6
    for a in range(2):
        for j in range(4):
            Bp, Bm = B.copy(), B.copy()
            Bp[a, j] += eps
            Bm[a, j] -= eps
            fd = (mnl_nll_grad(X, y, Bp)[0] - mnl_nll_grad(X, y, Bm)[0]) / (2 * eps)
            assert abs(G[a, j] - fd) <= 1e-6 * max(1.0, abs(fd))
    _report(4, "known-beta recovery within 3 SEs", f"{wins}/100 seeds")


# --------------------------------------------------------------------------
# 5. Sign-pattern reproduction

def test_criterion_5_distance_sign_pattern():
    t0 = time.monotonic()
    rng = np.random.default_rng(505)
    dim = 8
    axis = np.zeros(dim)
    axis[0] = 1.0
    ae_bank = BaselineBank("AE", "x", rng.normal(size=(300, dim)) - 2.0 * axis)
    ie_bank = BaselineBank("IE", "x", rng.normal(size=(300, dim)) + 2.0 * axis)
    tokens, vectors = [], []
    centers = {AccentLabel.NO_NEGLIGIBLE: -1.4, AccentLabel.MILD: 0.0,
               AccentLabel.STRONG: 1.4}
    positions = list(WordPosition)
    for i in range(600):
        accent = AccentLabel(i % 3)
        # balanced positions, independent of the accent assignment
        tokens.append(_token(accent, positions[(i // 3) % 3], i))
        vectors.append(centers[accent] * axis + rng.normal(size=dim) * 1.2)
    records = build_distance_records(tokens, np.vstack(vectors), ae_bank, ie_bank,
                                     cap=2000, seed=0)
    res = fit_multinomial(records, RegressionSpec())
    for level in (AccentLabel.MILD, AccentLabel.STRONG):
        ae = res.coef[level]["d_ae"]
        ie = res.coef[level]["d_ie"]
        assert ae.beta > 0 and ae.p < 0.01, (level, ae)
        assert ie.beta < 0 and ie.p < 0.01, (level, ie)
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    _report(5, "odds increase with AE distance, decrease with IE distance",
            f"{elapsed:.1f}s")


# --------------------------------------------------------------------------
# 6. Relative-weight prominence

def test_criterion_6_relative_weight_prominence():
    # the probe-selected subset tracks the two designated features closely;
    # the full representation also carries moderate information about every
    # feature, so the accent-agnostic baseline profile is flatter
    names = [f"f{i}" for i in range(6)]
    designated = {"f0", "f1"}
    for seed in range(20):
        rng = np.random.default_rng(6000 + seed)
        n = 400
        P = rng.uniform(size=(n, 6))
        subset = np.hstack([
            P[:, :2] + rng.normal(size=(n, 2)) * 0.25,
            rng.normal(size=(n, 1)) * 0.3,
        ])
        full = np.hstack([
            subset,
            0.6 * P + rng.normal(size=(n, 6)) * 0.5,
            rng.normal(size=(n, 4)),
        ])
        rho_sub = correlate_features(subset, P, range(6))
        rho_base = correlate_features(full, P, range(6))
        rel = relative_weights(
            {names[i]: float(rho_sub[i]) for i in range(6)},
            {names[i]: float(rho_base[i]) for i in range(6)},
        )
        for f, (_, _, ratio) in rel.items():
            if f in designated:
                assert ratio > 1.0, (seed, f, ratio)
            else:
                assert ratio < 1.0, (seed, f, ratio)
    _report(6, "designated contrastive features get ratios > 1, others < 1",
            "20/20 seeds")


# --------------------------------------------------------------------------
# 7. weighted-F1 hand oracle

def test_criterion_7_weighted_f1_oracle():
    got = weighted_f1(["a", "a", "b"], ["a", "b", "b"])
    assert abs(got - 66.67) <= 0.01
    assert weighted_f1([0, 1, 2, 1], [0, 1, 2, 1]) == 100.0
    _report(7, "weighted-F1 hand cases", f"{got:.4f} and 100.0")


# --------------------------------------------------------------------------
# 8. Mapping fidelity

def test_criterion_8_mapping_fidelity():
    mapping = FeatureMapping.load()  # the shipped resource file
    for pair in TARGET_PAIRS.values():
        a = mapping.vector(pair.native).astype(int)
        b = mapping.vector(pair.nonnative).astype(int)
        differing = {FEATURE_NAMES[i] for i in np.flatnonzero(a != b)}
        assert differing == set(pair.contrastive), (pair.nonnative, differing)
    t = mapping.positive_features("t") ^ mapping.positive_features("ʈ")
    assert t == {"anterior"}
    v = mapping.positive_features("v") ^ mapping.positive_features("ʋ")
    assert v == {"approximant", "consonantal", "sonorant"}
    _report(8, "shipped feature chart reproduces every segment-pair contrast")


# --------------------------------------------------------------------------
# 9. Pipeline determinism

def test_criterion_9_pipeline_determinism(pipeline_runs):
    out_a, out_b = pipeline_runs
    compared = 0
    for rel in sorted(p.relative_to(out_a) for p in out_a.rglob("*")
                      if p.is_file() and p.name != "run_log.jsonl"):
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel
        compared += 1
    report_files = list((out_a / "report").glob("*.tsv"))
    assert len(report_files) >= 9
    _report(9, "same-seed pipeline reruns are byte-identical",
            f"{compared} files compared")


# --------------------------------------------------------------------------
# 10. Frame classifier sanity

def test_criterion_10_frame_classifier_sanity():
    rng = np.random.default_rng(1010)
    n = 3000
    # one carrier coordinate per feature, 4-sigma class separation
    y = (rng.uniform(size=(n, len(FEATURE_NAMES))) < 0.4).astype(float)
    x = (2 * y - 1) * 4.0 + rng.normal(size=(n, len(FEATURE_NAMES)))
    cfg = FeatureModelConfig(hidden=48, context=0, max_epochs=60, patience=60,
                             batch_size=128, learning_rate=3e-3, seed=7)
    result = train_feature_model([x], [y], cfg)
    scores = evaluate_features(result.model, [x], [y])
    worst = min(scores, key=lambda s: s.f1)
    assert worst.f1 > 99.0, worst
    _report(10, "separable synthetic frames reach F1 > 99 on every feature",
            f"worst {worst.f1:.2f} ({worst.feature})")
