"""Acceptance gate: one criterion per test, one printed pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Every criterion asserts, so a FAIL line is always accompanied by a
test failure.
"""

import math
import time

import numpy as np
import torch

from nncl_tllm.config import RunConfig
from nncl_tllm.data import SplitSpec, split, window
from nncl_tllm.embedding import patch_count
from nncl_tllm.metrics import mae, mase, mse, owa, seasonal_naive, smape
from nncl_tllm.model import ForecastModel
from nncl_tllm.prototypes import nearest_prototype, proto_loss
from nncl_tllm.revin import RevIN
from nncl_tllm.support import SupportQueue, nncl_loss, top_k_nn
from nncl_tllm.synthetic import make_synthetic
from nncl_tllm.trainer import Trainer, fit


def report(num: int, name: str, ok: bool, detail: str = ""):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def tiny_cfg(**overrides) -> RunConfig:
    base = dict(lookback=32, horizon=8, patch_len=8, stride=4, d_model=8,
                n_layers=1, n_heads=2, vocab_size=20, n_prototypes=4,
                queue_size=16, top_k=2, tau=1.0, loss_weight=0.01,
                batch_size=2, seed=0, dtype="float64")
    base.update(overrides)
    return RunConfig(**base)


def tiny_batch(cfg, n_channels=1):
    rng = np.random.default_rng(5)
    x = torch.as_tensor(rng.normal(size=(cfg.batch_size, cfg.lookback)))
    y = torch.as_tensor(rng.normal(size=(cfg.batch_size, cfg.horizon)))
    ch = torch.zeros(cfg.batch_size, dtype=torch.long)
    return x, y, ch


# ---------------------------------------------------------------------------
# shared synthetic-benchmark runs (criteria 9, 10)

_SYNTH_CACHE: dict = {}


def synth_run(max_steps: int, **overrides):
    key = (max_steps, tuple(sorted(overrides.items())))
    if key in _SYNTH_CACHE:
        return _SYNTH_CACHE[key]
    base = dict(lookback=96, horizon=24, patch_len=16, stride=8, d_model=32,
                n_layers=2, n_heads=4, vocab_size=200, n_prototypes=20,
                queue_size=200, top_k=8, tau=0.1, loss_weight=0.01, lr=1e-3,
                batch_size=16, epochs=100, max_steps=max_steps, seed=0,
                dtype="float64")
    base.update(overrides)
    cfg = RunConfig(**base)
    frame = make_synthetic(n_steps=10_000, n_channels=2, seed=0)
    train_f, _, test_f = split(frame, SplitSpec(0.7, 0.8, mode="ratio"),
                               cfg.lookback)
    t0 = time.time()
    trainer, history = fit(cfg, train_f, None)
    elapsed = time.time() - t0
    y_hat, y = trainer.predict_frame(test_f)
    model_mse = mse(y.ravel(), y_hat.ravel())
    samples = window(test_f, cfg.lookback, cfg.horizon)
    naive = np.stack([seasonal_naive(s.input, 24, cfg.horizon)
                      for s in samples])
    naive_mse = mse(y.ravel(), naive.ravel())
    result = dict(history=history, model_mse=model_mse, naive_mse=naive_mse,
                  elapsed=elapsed)
    _SYNTH_CACHE[key] = result
    return result


# ---------------------------------------------------------------------------


def test_criterion_01_gradient_fidelity():
    t0 = time.time()
    cfg = tiny_cfg()
    trainer = Trainer(cfg, 1)
    x, y, ch = tiny_batch(cfg)
    for _ in range(2):                       # warm the queue past k rows
        trainer.train_step(x, y, ch)
    assert trainer.queue.fill >= cfg.top_k

    model = trainer.model
    losses = trainer.compute_losses(x, y, ch)
    model.zero_grad()
    losses["total"].backward()
    grads = {n: p.grad.clone() for n, p in model.named_parameters()
             if p.requires_grad}

    def total():
        return float(trainer.compute_losses(x, y, ch)["total"].detach())

    eps = 1e-5
    worst = 0.0
    n_checked = 0
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        flat = p.data.view(-1)
        gflat = grads[name].view(-1)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + eps
            hi = total()
            flat[i] = orig - eps
            lo = total()
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            rel = abs(float(gflat[i]) - fd) / max(1.0, abs(fd))
            worst = max(worst, rel)
            n_checked += 1
    elapsed = time.time() - t0
    report(1, "gradient fidelity",
           worst < 1e-4 and elapsed < 60.0,
           f"{n_checked} params, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_frozen_immutability():
    cfg = tiny_cfg()
    trainer = Trainer(cfg, 1)
    frozen_names = set(trainer.model.partition.frozen)
    before = {n: p.detach().numpy().tobytes()
              for n, p in trainer.model.named_parameters() if n in frozen_names}
    x, y, ch = tiny_batch(cfg)
    for _ in range(10):
        trainer.train_step(x, y, ch)
    after = {n: p.detach().numpy().tobytes()
             for n, p in trainer.model.named_parameters() if n in frozen_names}
    ok = before == after and len(before) > 0
    report(2, "frozen-parameter immutability", ok,
           f"{len(before)} frozen tensors bitwise stable over 10 steps")


def test_criterion_03_parameter_efficiency():
    cfg = RunConfig(lookback=512, horizon=96, patch_len=16, stride=8,
                    d_model=768, n_layers=6, n_heads=12, vocab_size=50257,
                    max_positions=1024, n_prototypes=1000, queue_size=10000,
                    top_k=8, series_pooling="mean", dtype="float32")
    model = ForecastModel(cfg, 7)
    trainable, total = model.parameter_counts()
    D, C = cfg.d_model, cfg.patch_len
    expected = (2 * 7                                    # revin affine
                + C * D + D                              # patch embedding
                + D * D + D                              # series embedding
                + cfg.max_positions * D                  # positional table
                + cfg.n_layers * 4 * D + 2 * D           # layer norms
                + cfg.n_prototypes * D                   # prototype bank
                + cfg.prompt_len * D * cfg.horizon + cfg.horizon)  # head
    ratio = trainable / total
    ok = ratio < 0.10 and trainable == expected
    report(3, "parameter-efficiency accounting", ok,
           f"trainable {trainable:,} / total {total:,} = {ratio:.2%}, "
           f"arithmetic expects {expected:,}")


def test_criterion_04_patch_formula():
    rng = np.random.default_rng(11)
    ok = True
    checked = 0
    for T in list(range(16, 513, 16)):
        for C in (4, 8, 16, 32):
            if C > T:
                continue
            for S in range(1, C + 1):
                x = np.concatenate([rng.normal(size=T), np.repeat(0.0, 0)])
                padded = np.concatenate([x, np.repeat(x[-1], S)])
                brute = sum(1 for s in range(0, len(padded) - C + 1, S))
                ok &= patch_count(T, C, S) == (T - C) // S + 2 == brute
                checked += 1
    ok &= patch_count(512, 16, 8) == 64
    report(4, "patch formula vs brute force", ok,
           f"{checked} (T,C,S) grid points; T=512,C=16,S=8 -> 64")


def test_criterion_05_retrieval_oracles():
    rng = np.random.default_rng(21)
    ok = True
    for trial in range(1000):
        n = int(rng.integers(2, 20))
        d = int(rng.integers(1, 6))
        # half the trials use quantized coordinates to force exact ties
        if trial % 2:
            rows = rng.integers(0, 3, size=(n, d)).astype(float)
            z = rng.integers(0, 3, size=d).astype(float)
        else:
            rows = rng.normal(size=(n, d))
            z = rng.normal(size=d)
        k = int(rng.integers(1, n + 1))
        idx, _ = top_k_nn(torch.as_tensor(z), torch.as_tensor(rows), k)
        dists = np.linalg.norm(rows - z, axis=1)
        oracle = sorted(range(n), key=lambda i: (dists[i], i))[:k]
        ok &= list(idx.numpy()) == oracle
        j, dist = nearest_prototype(torch.as_tensor(z), torch.as_tensor(rows))
        ok &= j == oracle[0] and abs(dist - dists[oracle[0]]) < 1e-12

    proto_ok = True
    for _ in range(200):
        V = int(rng.integers(2, 12))
        U = int(rng.integers(1, V))
        d = int(rng.integers(1, 5))
        vocab = rng.normal(size=(V, d))
        bank = rng.normal(size=(U, d))
        got = float(proto_loss(torch.as_tensor(vocab),
                               torch.as_tensor(bank)).detach())
        brute = np.mean([min(np.sum((w - e) ** 2) for e in bank)
                         for w in vocab])
        proto_ok &= abs(got - brute) <= 1e-12 * max(1.0, abs(brute))
    report(5, "retrieval and prototype-loss oracles", ok and proto_ok,
           "1000 retrieval instances incl. ties; 200 prototype-loss instances")


def test_criterion_06_nncl_analytic_values():
    # B = 1: the softmax over a single batch item is trivially 1
    z1 = torch.randn(1, 4, dtype=torch.float64)
    nb1 = torch.randn(1, 3, 4, dtype=torch.float64)
    c_b1 = float(nncl_loss(z1, nb1, 0.5).detach())

    # B = 2, k = 1, tau = 1, orthonormal: -log(e / (e + 1))
    z2 = torch.eye(2, 4, dtype=torch.float64)
    nb2 = z2.unsqueeze(1).clone()
    hand = float(nncl_loss(z2, nb2, 1.0).detach())
    expect = -math.log(math.e / (math.e + 1.0))

    # scale invariance of the batch embeddings
    z3 = torch.randn(3, 5, dtype=torch.float64)
    nb3 = torch.randn(3, 2, 5, dtype=torch.float64)
    a = float(nncl_loss(z3, nb3, 0.3).detach())
    b = float(nncl_loss(z3 * 41.0, nb3, 0.3).detach())

    # tau -> infinity: uniform softmax, loss -> ln B
    flat = float(nncl_loss(z2, nb2, 1e6).detach())

    ok = (c_b1 == 0.0
          and abs(hand - expect) < 1e-4 and abs(hand - 0.31326) < 1e-4
          and abs(a - b) < 1e-10
          and abs(flat - math.log(2.0)) < 1e-3)
    report(6, "contrastive-loss analytic values", ok,
           f"B=1 -> {c_b1}; hand case {hand:.5f} vs 0.31326; "
           f"large-tau {flat:.5f} vs ln 2")


def test_criterion_07_fifo_law():
    U, q, d = 4, 12, 3
    rng = np.random.default_rng(31)
    queue = SupportQueue(q, d, U)
    trace: list[np.ndarray] = []
    ok = True
    for m in range(1, 11):
        snap = rng.normal(size=(U, d))
        queue.push(torch.as_tensor(snap))
        trace.append(snap)
        expect = np.concatenate(trace[-(q // U):])
        got = queue.filled().numpy()
        ok &= got.shape == expect.shape and np.array_equal(got, expect)
    report(7, "FIFO eviction law", ok,
           "m = 1..10 pushes with q/U = 3 match the ring-buffer trace")


def test_criterion_08_revin_round_trip():
    rev = RevIN(1, affine=False).double()
    rng = np.random.default_rng(41)
    worst = 0.0
    for trial in range(1000):
        T = int(rng.integers(2, 64))
        if trial % 10 == 0:
            x = np.full((1, T), float(rng.normal(0, 10)))   # constant window
        else:
            x = rng.normal(rng.normal(0, 5), rng.uniform(0.1, 20), size=(1, T))
        xt = torch.as_tensor(x)
        x_norm, state = rev.normalize(xt, torch.zeros(1, dtype=torch.long))
        back = rev.denormalize(x_norm, state).numpy()
        worst = max(worst, float(np.abs(back - x).max()))
    report(8, "normalization round-trip", worst < 1e-6,
           f"1000 windows incl. constants, max |err| {worst:.2e}")


def test_criterion_09_synthetic_learning():
    res = synth_run(300)
    history = res["history"]
    init, final = history[0].loss_total, history[-1].loss_total
    improve = 1.0 - res["model_mse"] / res["naive_mse"]
    ok = (final < 0.5 * init
          and improve >= 0.20
          and res["model_mse"] < 0.04        # frozen from the reference run
          and res["elapsed"] < 600.0)
    report(9, "learning on the synthetic benchmark", ok,
           f"loss {init:.2f} -> {final:.3f}; mse {res['model_mse']:.4f} vs "
           f"naive {res['naive_mse']:.4f} ({improve:.0%} better); "
           f"{res['elapsed']:.0f}s")


def test_criterion_10_ablation_structure():
    steps = 1000
    full = synth_run(steps)
    variants = {
        "disable_nncl": synth_run(steps, disable_nncl=True),
        "disable_proto": synth_run(steps, disable_proto=True),
        "top_k=0": synth_run(steps, top_k=0),
    }

    def pattern(history, nncl_all_zero, proto_all_zero):
        nncl = [r.loss_nncl for r in history]
        proto = [r.loss_proto for r in history]
        ok = all(r.loss_forecast > 0 for r in history)
        ok &= (all(v == 0 for v in nncl) if nncl_all_zero
               else any(v != 0 for v in nncl))
        ok &= (all(v == 0 for v in proto) if proto_all_zero
               else any(v != 0 for v in proto))
        return ok

    ok = pattern(full["history"], False, False)
    ok &= pattern(variants["disable_nncl"]["history"], True, False)
    ok &= pattern(variants["disable_proto"]["history"], False, True)
    ok &= pattern(variants["top_k=0"]["history"], True, False)

    margins = {name: full["model_mse"] / v["model_mse"]
               for name, v in variants.items()}
    ok &= all(full["model_mse"] <= v["model_mse"] * 1.10
              for v in variants.values())
    report(10, "ablation term patterns and direction", ok,
           "full/ablation mse ratios " +
           ", ".join(f"{n}={r:.2f}" for n, r in margins.items()))


def test_criterion_11_metric_formulas():
    ok = (abs(mse([1, 2], [2, 4]) - 2.5) <= 1e-12
          and abs(mae([1, 2], [2, 4]) - 1.5) <= 1e-12
          and abs(smape([1.0], [3.0]) - 100.0) <= 1e-12
          and abs(mase([1.0, 2.0, 3.0], [2.0, 2.0, 2.0], 1) - 2 / 3) <= 1e-12
          and owa(12.0, 1.6, 12.0, 1.6) == 1.0
          and abs(owa(6.0, 1.6, 12.0, 1.6) - 0.75) <= 1e-12)

    rng = np.random.default_rng(51)
    for _ in range(1000):
        H = int(rng.integers(2, 24))
        y = rng.normal(3, 2, size=H)
        y_hat = rng.normal(3, 2, size=H)
        loop_mse = sum((a - b) ** 2 for a, b in zip(y, y_hat)) / H
        loop_mae = sum(abs(a - b) for a, b in zip(y, y_hat)) / H
        ok &= abs(mse(y, y_hat) - loop_mse) <= 1e-12 * max(1, loop_mse)
        ok &= abs(mae(y, y_hat) - loop_mae) <= 1e-12 * max(1, loop_mae)
        if np.all(np.abs(y) + np.abs(y_hat) > 0):
            loop = 200.0 / H * sum(abs(a - b) / (abs(a) + abs(b))
                                   for a, b in zip(y, y_hat))
            ok &= abs(smape(y, y_hat) - loop) <= 1e-12 * max(1, loop)
    report(11, "metric formulas", ok,
           "hand cases to 1e-12; OWA self-reference = 1; "
           "1000 dual-implementation instances")


def test_criterion_12_determinism():
    cfg = tiny_cfg(epochs=2, lr=1e-2)
    frame = make_synthetic(n_steps=120, n_channels=1, seed=3)
    runs = []
    for _ in range(2):
        _, history = fit(cfg, frame)
        runs.append("\n".join(r.csv_row() for r in history).encode())
    ok = len(runs[0]) > 0 and runs[0] == runs[1]
    report(12, "run-to-run determinism", ok,
           f"two identical runs, {len(runs[0])} bytes of history each")
