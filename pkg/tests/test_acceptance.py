"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are echoed
in the "acceptance criteria" section of the terminal summary.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, TOY_TOWER, nullity_failures, toy_model
from oracle import model_forward

from fusegate import autodiff as ad
from fusegate.architectures import KINDS, FusionOverride, build_model
from fusegate.harness import compare, load_compare_config
from fusegate.perturbation import apply_failures, apply_noise

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DRIVING_GROUPS = [[0, 1, 2], [3, 4]]
GATED = ("netgated", "fg_gfa", "two_stage")


def record(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def probe(out, seed=0):
    w = np.random.default_rng(seed).normal(size=out.shape)
    return ad.tsum(ad.mul(out, w))


# 1 ---------------------------------------------------------------------------------

def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(1)

    def p(*shape):
        return ad.Tensor(rng.normal(size=shape), requires_grad=True)

    a, b, c = p(4, 3), p(4, 3), p(3, 2)
    x, k, bias = p(2, 2, 11), p(3, 2, 3), p(3)
    w = p(4, 1)
    labels = np.array([0, 2, 1, 1])
    primitives = {
        "add": (lambda: probe(ad.add(a, b)), [a, b]),
        "sub": (lambda: probe(ad.sub(a, b)), [a, b]),
        "mul": (lambda: probe(ad.mul(a, b)), [a, b]),
        "matmul": (lambda: probe(ad.matmul(a, c)), [a, c]),
        "relu": (lambda: probe(ad.relu(a)), [a]),
        "hadamard": (lambda: probe(ad.hadamard(w, a)), [w, a]),
        "sum": (lambda: ad.tsum(ad.mul(a, a)), [a]),
        "mean": (lambda: probe(ad.mean(a, axis=0)), [a]),
        "reshape": (lambda: probe(ad.reshape(a, (3, 4))), [a]),
        "flatten": (lambda: probe(ad.flatten(x, 1)), [x]),
        "getitem": (lambda: probe(a[1:, ::2]), [a]),
        "conv1d": (lambda: probe(ad.conv1d(x, k, bias, stride=2)), [x, k, bias]),
        "maxpool1d": (lambda: probe(ad.maxpool1d(x, 3, 2)), [x]),
        "softmax": (lambda: probe(ad.softmax(a, axis=1)), [a]),
        "concat": (lambda: probe(ad.concat([a, b], axis=1)), [a, b]),
        "split": (lambda: probe(ad.split(a, [1, 2], axis=1)[1]), [a]),
        "cross_entropy": (lambda: ad.cross_entropy_loss(a, labels), [a]),
    }
    worst = {}
    for name, (fn, inputs) in primitives.items():
        worst[name] = ad.gradcheck(fn, inputs)
    xs = np.random.default_rng(2).normal(size=(4, 3, 12))
    ys = np.array([0, 1, 2, 1])
    for kind in KINDS:
        model = toy_model(kind, seed=3)
        worst[kind] = ad.gradcheck(lambda: ad.cross_entropy_loss(model(xs)[0], ys),
                                   model.parameters())
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    record(1, worst[top] < 1e-4 and elapsed < 60,
           f"{len(primitives)} primitives + {len(KINDS)} architectures, max rel err "
           f"{worst[top]:.2e} ({top}) < 1e-4, {elapsed:.1f}s < 60s")


# 2 ---------------------------------------------------------------------------------

def test_criterion_2_weights_normalized():
    worst_sum, worst_min, count = 0.0, np.inf, 0
    for kind in GATED:
        for seed in range(10):
            model = build_model(kind, 5, 40, 3, group_spec=DRIVING_GROUPS, seed=seed)
            xs = np.random.default_rng(seed).normal(scale=3, size=(100, 5, 40))
            _, rep = model(xs)
            for wts in (rep.feature_weights, rep.group_weights, rep.final_weights):
                if wts is None:
                    continue
                if wts is not rep.final_weights:
                    worst_sum = max(worst_sum, float(np.max(np.abs(wts.sum(axis=1) - 1))))
                worst_min = min(worst_min, float(wts.min()))
            count += len(xs)
    record(2, worst_sum < 1e-6 and worst_min >= 0,
           f"{count} forwards over {len(GATED)} gated kinds, max |sum-1| {worst_sum:.1e} < 1e-6, "
           f"min weight {worst_min:.2e} >= 0")


# 3 ---------------------------------------------------------------------------------

def test_criterion_3_product_law():
    model = build_model("two_stage", 5, 40, 3, group_spec=DRIVING_GROUPS, seed=4)
    owner = np.array([0, 0, 0, 1, 1])
    mismatches = 0
    for seed in range(10):
        _, rep = model(np.random.default_rng(seed).normal(size=(100, 5, 40)))
        expected = rep.feature_weights * rep.group_weights[:, owner]
        mismatches += int(np.sum(rep.final_weights != expected))
    fw = np.array([0.26, 0.18, 0.16, 0.21, 0.19])
    gw = np.array([0.45, 0.55])
    _, spot = model(np.zeros((5, 40)), FusionOverride(fw, gw))
    value = float(spot.final_weights[0])
    record(3, mismatches == 0 and round(value, 3) == 0.117 and value == 0.26 * 0.45,
           f"1000 forwards, {mismatches} entries differ from feature x group; "
           f"0.26 x 0.45 -> {value:.3f}")


# 4 ---------------------------------------------------------------------------------

def test_criterion_4_oracle_equivalence():
    worst = 0.0
    rng = np.random.default_rng(5)
    for kind in KINDS:
        model = toy_model(kind, seed=6)
        for _ in range(100):
            x = rng.normal(size=(3, 12))
            logits, rep = model(x)
            o_logits, o_fw, o_gw, o_final = model_forward(model, x)
            pairs = [(logits.data, o_logits), (rep.feature_weights, o_fw),
                     (rep.group_weights, o_gw)]
            if kind == "two_stage":
                pairs.append((rep.final_weights, o_final))
            for mine, theirs in pairs:
                if (mine is None) != (theirs is None):
                    worst = np.inf
                elif mine is not None:
                    worst = max(worst, float(np.max(np.abs(np.asarray(mine) - np.asarray(theirs)))))
    record(4, worst < 1e-12,
           f"{len(KINDS)} kinds x 100 inputs vs loop reimplementation, max |diff| {worst:.1e} < 1e-12")


# 5 ---------------------------------------------------------------------------------

def test_criterion_5_perturbation_statistics():
    details, ok = [], True
    ones = np.ones((100_000, 1))
    for i, gamma in enumerate((0.05, 0.1, 0.2)):
        rel = float(apply_noise(ones, gamma, seed=10 + i).std())
        good = abs(rel - gamma) <= 0.05 * gamma
        ok &= good
        details.append(f"gamma {gamma}: rel std {rel:.4f}")
    n = 5
    wiped = apply_failures(np.ones((100_000, n)), seed=11) == 0
    per_row = wiped.sum(axis=1)
    freq = wiped.mean(axis=0)
    exact = bool(np.all(per_row == 1))
    spread = float(np.max(np.abs(freq - 1 / n)))
    ok &= exact and spread <= 0.01
    details.append(f"failures one-per-step {exact}, max |freq-1/{n}| {spread:.4f} <= 0.01")
    record(5, ok, "; ".join(details))


# 6 ---------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_failure_ordering():
    start = time.perf_counter()
    table, _ = compare(load_compare_config(CONFIGS / "failure_ordering.toml"))
    elapsed = time.perf_counter() - start
    acc = {row.kind: row.accuracy["failure"] for row in table.rows}
    order = ["two_stage", "fg_gfa", "netgated", "non_gated"]
    ordered = all(acc[a] >= acc[b] for a, b in zip(order, order[1:]))
    gap = 100 * (acc["two_stage"] - acc["non_gated"])
    summary = ", ".join(f"{k} {100 * acc[k]:.2f}%" for k in order)
    record(6, ordered and gap >= 2.0 and elapsed < 900,
           f"mean over 5 seeds under failures: {summary}; ordered {ordered}, "
           f"2S - NonGated {gap:+.2f} pts >= 2, {elapsed / 60:.1f} min < 15")


# 7 ---------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_group_weight_response():
    configs = load_compare_config(CONFIGS / "heading_noise.toml")
    _, results = compare(configs)
    feature = configs[-1].perturbation.features[0]
    group = next(g for g, members in enumerate(results[0].groups) if feature in members)
    clean = {r.seed: r.group_weights[group] for r in results if r.perturbation == "clean"}
    noisy = {r.seed: r.group_weights[group] for r in results if r.perturbation != "clean"}
    drops = sum(noisy[s] < clean[s] for s in clean)
    pairs = ", ".join(f"{clean[s]:.3f}->{noisy[s]:.3f}" for s in sorted(clean))
    record(7, drops >= 4,
           f"group {group + 1} weight under 20% noise on feature {feature} fell in "
           f"{drops}/5 seeds >= 4 ({pairs})")


# 8 ---------------------------------------------------------------------------------

def test_criterion_8_gating_nullity():
    counts = {}
    for kind in GATED:
        model = build_model(kind, 5, 40, 3, group_spec=DRIVING_GROUPS, tower_spec=TOY_TOWER,
                            seed=12)
        counts[kind] = nullity_failures(model, 100, seed=12)
    record(8, sum(counts.values()) == 0,
           "100 trials per gated kind, logits changed in "
           + ", ".join(f"{k} {v}" for k, v in counts.items()))


# 9 ---------------------------------------------------------------------------------

def test_criterion_9_cli_determinism(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("""
name = "determinism"

[dataset.synthetic]
n_samples = 3000
seed = 3

[model]
kind = "two_stage"

[perturbation]
kind = "noise"
gamma = 0.1
seed = 5

[training]
iterations = 150
seed = 9
""")
    payloads = []
    for run in ("a", "b"):
        out = tmp_path / run
        subprocess.run([sys.executable, "-m", "fusegate.cli", "train", "--config", str(config),
                        "--out", str(out)], check=True, capture_output=True)
        doc = json.loads((out / "results.json").read_text())
        for r in doc["results"]:
            r.pop("timing")
        payloads.append(json.dumps(doc, sort_keys=True).encode())
    record(9, payloads[0] == payloads[1],
           f"two CLI runs, results.json without timing: {len(payloads[0])} bytes, identical "
           f"{payloads[0] == payloads[1]}")
