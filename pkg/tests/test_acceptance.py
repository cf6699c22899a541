"""Acceptance criteria, one test per criterion.

Every test records a PASS/FAIL line (printed in the terminal summary by
``conftest.py``) before asserting, so a failing criterion still reports its
measured numbers.
"""

import time
import warnings
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from csra.attention import (
    attention_scores,
    class_feature,
    csra_feature,
    csra_logits,
    csra_logits_features,
    flatten,
    fused_weights,
    gap_logits,
    global_feature,
    raw_scores,
)
from csra.heatmap import attention_image, encode_pnm
from csra.io import decode_tensors, encode_tensors, load_model, read_tensor_file, save_model
from csra.metrics import evaluate
from csra.multihead import HeadConfig, MultiHeadModel
from csra.rescore import is_unimodal, lambda_sweep
from csra.synthetic import SyntheticSpec, split
from csra.tensor import INFINITY
from csra.training import TrainConfig, loss_grad, predict_logits, sigmoid, train

from test_metrics import KEYS, oracle_ap, oracle_prf, random_evalset
from test_training import numeric_grad

RESULTS = []
SEEDS = range(5)
DATA = Path(__file__).parent / "data"


def record(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def random_instance(rng, max_d=8, max_n=16, max_c=5):
    d = int(rng.integers(1, max_d + 1))
    n = int(rng.integers(1, max_n + 1))
    h = int(rng.choice([k for k in range(1, n + 1) if n % k == 0]))
    C = int(rng.integers(1, max_c + 1))
    return rng.standard_normal((d, h, n // h)), rng.standard_normal((C, d))


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)))


# synthetic benchmark shared by the training criteria

SPEC = SyntheticSpec(d=16, h=7, w=7, num_classes=6, min_cells=1, max_cells=3)
TRAIN_CFG = dict(epochs=20, batch_size=16)
VARIANTS = {
    "average": dict(H=1, lam=0.0, temperatures=(1.0,)),
    "spatial": dict(H=1, lam=0.4, temperatures=(1.0,), pooling="spatial"),
    "combined": dict(H=1, lam=0.4, temperatures=(1.0,)),
    "H2": dict(H=2, lam=0.4),
    "H4": dict(H=4, lam=0.4),
    "H6": dict(H=6, lam=0.4),
}


@lru_cache(maxsize=None)
def benchmark(seed):
    # 2000 samples, the last 500 held out
    return split(1500, 500, SPEC, seed)


@lru_cache(maxsize=None)
def trained(variant, seed):
    train_set, _ = benchmark(seed)
    return train(train_set, HeadConfig(**VARIANTS[variant]),
                 TrainConfig(seed=seed, **TRAIN_CFG))[0]


@lru_cache(maxsize=None)
def held_out_map(variant, seed):
    _, test_set = benchmark(seed)
    probs = sigmoid(predict_logits(trained(variant, seed), test_set.features))
    return 100 * evaluate(probs, test_set.labels).mAP


def test_limit_identity():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst_inf = worst_1000 = 0.0
    count_1000 = 0
    for _ in range(1000):
        x, W = random_instance(rng)
        lam = float(rng.choice([0.0, 0.1, 0.5, 1.0, rng.uniform(0, 2)]))
        S = raw_scores(x, W)
        limit = S.mean(axis=1) + lam * S.max(axis=1)
        worst_inf = max(worst_inf, float(np.abs(csra_logits(x, W, INFINITY, lam) - limit).max()))
        top2 = np.sort(S, axis=1)[:, -2:] if S.shape[1] > 1 else None
        if top2 is None or (top2[:, 1] - top2[:, 0]).min() >= 0.1:
            count_1000 += 1
            worst_1000 = max(worst_1000, float(np.abs(csra_logits(x, W, 1000.0, lam) - limit).max()))
    elapsed = time.perf_counter() - start
    ok = worst_inf <= 1e-12 and worst_1000 <= 1e-3 and count_1000 > 0 and elapsed < 5
    record("limit identity", ok,
           f"T=inf max err {worst_inf:.2e} (<=1e-12); T=1000 max err {worst_1000:.2e} (<=1e-3) "
           f"on {count_1000} margin>=0.1 instances; {elapsed:.2f}s (<5s)")


def test_path_equivalence_and_reweighting():
    rng = np.random.default_rng(2)
    grid = [(T, lam) for T in (1.0, 2.0, 4.0, INFINITY) for lam in (0.0, 0.1, 0.5, 1.0)]
    start = time.perf_counter()
    worst_path = worst_fuse = 0.0
    for k in range(1000):
        T, lam = grid[k % len(grid)]
        x, W = random_instance(rng)
        score_path = csra_logits(x, W, T, lam)
        feature_path = csra_logits_features(x, W, T, lam)
        worst_path = max(worst_path, rel_err(score_path, feature_path))
        A = attention_scores(raw_scores(x, W), T)
        X, g = flatten(x), global_feature(x)
        i = int(rng.integers(W.shape[0]))
        direct = csra_feature(g, class_feature(x, A, i), lam)
        fused = (1 + lam) * (X @ fused_weights(A, lam, i))
        worst_fuse = max(worst_fuse, rel_err(fused, direct))
    elapsed = time.perf_counter() - start
    ok = worst_path <= 1e-10 and worst_fuse <= 1e-10 and elapsed < 5
    record("path equivalence + reweighting", ok,
           f"score vs feature path rel err {worst_path:.2e}, fused weights rel err "
           f"{worst_fuse:.2e} (<=1e-10) over 1000 instances; {elapsed:.2f}s (<5s)")


def test_baseline_reduction():
    rng = np.random.default_rng(3)
    mismatches = 0
    for k in range(100):
        x, W = random_instance(rng)
        T = (1.0, 2.0, 4.0, INFINITY)[k % 4]
        if csra_logits(x, W, T, 0.0).tobytes() != gap_logits(x, W).tobytes():
            mismatches += 1
    record("baseline reduction", mismatches == 0,
           f"{100 - mismatches}/100 instances bitwise equal at lambda=0")


def test_gradient_suite():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst = 0.0
    finite = with_max = 0
    while finite < 100 or with_max < 20:
        H = int(rng.choice([1, 2]))
        C, d = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        x = rng.standard_normal((d, int(rng.integers(1, 3)), int(rng.integers(1, 4))))
        lam = float(rng.uniform(0, 1.5))
        if H == 1:
            temps = (float(rng.choice([0.5, 1.0, 2.0, 4.0, rng.uniform(0.1, 8)])),)
        else:
            temps = (float(rng.uniform(0.5, 4)), INFINITY)
        cfg = HeadConfig(H=H, lam=lam, temperatures=temps, normalize=False,
                         pooling=str(rng.choice(["residual", "residual", "spatial"])))
        model = MultiHeadModel(cfg, [rng.standard_normal((C, d)) for _ in range(H)])
        if H == 2:
            S = np.sort(raw_scores(x, model.heads[1]), axis=1)
            if S.shape[1] > 1 and (S[:, -1] - S[:, -2]).min() <= 1e-3:
                continue  # max head only checked at a unique argmax
        labels = rng.integers(0, 2, C)
        for a, f in zip(loss_grad(x, model, labels), numeric_grad(x, model, labels)):
            mask = np.maximum(np.abs(a), np.abs(f)) > 1e-8
            if mask.any():
                worst = max(worst, rel_err(a[mask], f[mask]))
        if H == 1:
            finite += 1
        else:
            with_max += 1
    elapsed = time.perf_counter() - start
    record("gradient suite", worst < 1e-4 and elapsed < 30,
           f"max rel err {worst:.2e} (<1e-4) on {finite} finite-T and {with_max} "
           f"(T, inf) instances; {elapsed:.2f}s (<30s)")


def test_ablation_ordering():
    start = time.perf_counter()
    rows, passing = [], 0
    for seed in SEEDS:
        avg, spa, comb = (held_out_map(v, seed) for v in ("average", "spatial", "combined"))
        ok = comb >= spa >= avg and comb - avg >= 2
        passing += ok
        rows.append(f"seed {seed}: avg {avg:.2f} spatial {spa:.2f} combined {comb:.2f}")
    elapsed = time.perf_counter() - start
    record("ablation ordering", passing >= 4 and elapsed < 300,
           f"{passing}/5 seeds with combined >= spatial >= average and gap >= 2 "
           f"({'; '.join(rows)}); {elapsed:.1f}s (<300s)")


def test_multihead_benefit():
    start = time.perf_counter()
    med = {}
    for variant, label in (("combined", 1), ("H2", 2), ("H4", 4), ("H6", 6)):
        med[label] = float(np.median([held_out_map(variant, seed) for seed in SEEDS]))
    elapsed = time.perf_counter() - start
    best = max(med[2], med[4], med[6])
    ok = med[4] >= med[1] - 0.2 and best >= med[1] and elapsed < 900
    record("multi-head benefit", ok,
           "median mAP " + ", ".join(f"H={h} {m:.2f}" for h, m in med.items())
           + f"; H4 >= H1-0.2 and best(H2,H4,H6) >= H1; {elapsed:.1f}s (<900s)")


def test_rescoring_trick():
    lambdas = [0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1, 2, 5, 10, 100]
    gains, shapes = [], []
    for seed in SEEDS:
        model = trained("average", seed)
        _, test_set = benchmark(seed)
        scores = [raw_scores(x, model.heads[0]) for x in test_set.features]
        sweep = dict(lambda_sweep(scores, test_set.labels, lambdas))
        gains.append(100 * (sweep[0.2] - sweep[0]))
        shapes.append(is_unimodal([sweep[l] for l in lambdas]))
    improved = sum(g >= 0.1 for g in gains)
    ok = improved >= 4 and sum(shapes) >= 4
    record("rescoring trick", ok,
           f"lambda=0.2 gain vs 0 (pts): {', '.join(f'{g:+.2f}' for g in gains)} "
           f"({improved}/5 >= +0.1); sweep rises then falls in {sum(shapes)}/5 seeds")


def test_metrics_oracle():
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(200):
        scores, labels = random_evalset(rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = evaluate(scores, labels)
        aps = [oracle_ap(scores[:, c].tolist(), labels[:, c].tolist())
               for c in range(scores.shape[1])]
        defined = [a for a in aps if a is not None]
        good = all((np.isnan(g) if w is None else g == w) for g, w in zip(report.ap, aps))
        if defined:
            total = 0.0
            for a in defined:
                total += a
            good &= report.mAP == total / len(defined)
        for block, topk in ((report.all, None), (report.top3, 3)):
            want = oracle_prf(scores.tolist(), labels.tolist(), topk=topk)
            good &= all(getattr(block, k) == want[k] for k in KEYS)
        mismatches += not good
    record("metrics oracle", mismatches == 0,
           f"{200 - mismatches}/200 random EvalSets match brute force exactly "
           "(AP, mAP, All and Top-3 CP/CR/CF1/OP/OR/OF1)")


def test_format_and_determinism(tmp_path):
    rng = np.random.default_rng(6)
    tensors = {"a": rng.standard_normal((2, 3, 4)).astype(np.float32),
               "b": rng.standard_normal(7).astype(np.float32)}
    back = decode_tensors(encode_tensors(tensors))
    round_trip = all(back[k].astype(np.float32).tobytes() == v.tobytes()
                     for k, v in tensors.items())

    train_set, _ = split(200, 1, SPEC, seed=0)
    cfg, tcfg = HeadConfig(H=4, lam=0.4), TrainConfig(epochs=2, seed=9)
    for name in ("run1.ten", "run2.ten"):
        save_model(tmp_path / name, train(train_set, cfg, tcfg)[0])
    same_model = (tmp_path / "run1.ten").read_bytes() == (tmp_path / "run2.ten").read_bytes()

    x = read_tensor_file(DATA / "heatmap_features.ten")["features"][0]
    model = load_model(DATA / "heatmap_model.ten")
    golden = (encode_pnm(attention_image(x, model, 1, (32, 48)))
              == (DATA / "heatmap_golden.pgm").read_bytes()
              and encode_pnm(attention_image(x, model, 2, (40, 40), color=True))
              == (DATA / "heatmap_golden.ppm").read_bytes())
    record("format and determinism", round_trip and same_model and golden,
           f"tensor round trip bitwise {round_trip}; seeded model files identical {same_model}; "
           f"heatmap golden files match {golden}")
