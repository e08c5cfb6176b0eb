"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and printed in the pytest terminal
summary (see ``conftest.py``); running this file directly prints them too.
"""

import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from gcsm.cli import main as cli_main
from gcsm.experiments import dataset_path, gen_synthetic, load_dataset, run_benchmark
from gcsm.gp import Dataset, nlml, nlml_and_grad, sample_prior
from gcsm.kernels import (
    GCSM, SE, SM, GcsmComponent, SmComponent, eval_gcsm, eval_gcsm_cross, gcsm_cross_terms_at_zero, gram,
)
from gcsm.params import ParamPacking
from gcsm.spectral import kernel_from_density

from oracles import central_differences, gcsm_diag_closed_form

RESULTS: list[str] = []
TAU_GRID = np.linspace(-5, 5, 101)


def report(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)


def random_component(rng, delays=True) -> GcsmComponent:
    return GcsmComponent(
        rng.uniform(0.05, 3.0), [rng.uniform(0.0, 2.0)], [rng.uniform(1e-3, 0.5)],
        [rng.uniform(-3, 3)] if delays else [0.0], [rng.uniform(-3, 3)] if delays else [0.0],
    )


# ---------------------------------------------------------------------------


def test_criterion_1_reduction_identities():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_a = worst_b = 0.0
    for _ in range(1000):
        comps = [random_component(rng, delays=False) for _ in range(rng.integers(1, 5))]
        sm = SM(tuple(SmComponent(c.w, c.mu, c.sigma2) for c in comps))
        restricted = sum(GCSM((c,)).evaluate(TAU_GRID[:, None]) for c in comps)
        worst_a = max(worst_a, np.abs(restricted - sm.evaluate(TAU_GRID[:, None])).max())
        s2 = rng.uniform(1e-3, 1.0)
        single = SM((SmComponent(1.0, [0.0], [s2]),)).evaluate(TAU_GRID[:, None])
        se = SE(1.0, 1.0 / (2 * math.pi * math.sqrt(s2))).evaluate(TAU_GRID[:, None])
        worst_b = max(worst_b, np.abs(single - se).max())
    elapsed = time.perf_counter() - t0
    ok = worst_a <= 1e-12 and worst_b <= 1e-12 and elapsed < 10
    report(1, ok, f"GCSM(i=j)-SM max {worst_a:.1e}, SM(mu=0)-SE max {worst_b:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_fourier_duality():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(200):
        delays = k % 4 != 0
        ci = random_component(rng, delays)
        cj = random_component(rng, delays)
        ci = GcsmComponent(1.0, ci.mu, [min(ci.sigma2[0], 0.2)], ci.theta, ci.phi)
        cj = GcsmComponent(1.0, cj.mu, [min(cj.sigma2[0], 0.2)], cj.theta, cj.phi)
        for tau in (-2.0, -0.7, 0.0, 0.7, 2.0):
            worst = max(worst, abs(kernel_from_density(ci, cj, tau) - eval_gcsm_cross(tau, ci, cj)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 60
    report(2, ok, f"quadrature vs closed form max abs error {worst:.1e} over 1000 evaluations, {elapsed:.1f}s")
    assert ok


def test_criterion_3_psd():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = math.inf
    for _ in range(100):
        spec = GCSM(tuple(random_component(rng) for _ in range(rng.integers(1, 6))))
        K = gram(spec, rng.uniform(-5, 5, (30, 1)))
        worst = min(worst, np.linalg.eigvalsh(K).min() / np.trace(K))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-8 and elapsed < 30
    report(3, ok, f"min eigenvalue / trace {worst:.1e} over 100 delayed GCSM Grams, {elapsed:.1f}s")
    assert ok


def test_criterion_4_gradients():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = {}
    for _ in range(20):
        spec = GCSM(tuple(
            GcsmComponent(rng.uniform(0.2, 1.5), [rng.uniform(0.05, 1.0)], [rng.uniform(0.01, 0.2)],
                          [rng.uniform(-1, 1)], [rng.uniform(-2, 2)])
            for _ in range(3)
        ))
        x = np.sort(rng.uniform(-3, 3, 20))
        data = Dataset(x, sample_prior(spec, x, 0.1, seed=int(rng.integers(1 << 31))))
        noise = rng.uniform(0.05, 0.3)
        packing = ParamPacking(spec, noise)
        _, g = nlml_and_grad(spec, noise, data, packing)
        fd = central_differences(lambda v: nlml(*packing.unpack(v), data), packing.pack(), 1e-5)
        err = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-3)
        for kind, e in zip(packing.kinds, err):
            worst[kind] = max(worst.get(kind, 0.0), float(e))
    elapsed = time.perf_counter() - t0
    kinds_ok = set(worst) == {"w", "mu", "sigma2", "theta", "phi", "noise_var"}
    ok = kinds_ok and max(worst.values()) < 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items()))
    report(4, ok, f"max relative error per kind: {detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_5_diagonal_oracle():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        comps = [random_component(rng) for _ in range(rng.integers(1, 6))]
        for enabled in (True, False):
            total, _ = gcsm_diag_closed_form(
                [c.w for c in comps], [list(c.mu) for c in comps], [list(c.sigma2) for c in comps],
                [list(c.theta) for c in comps] if enabled else None,
                [list(c.phi) for c in comps] if enabled else None,
            )
            worst = max(worst, abs(eval_gcsm(0.0, comps, enabled) - total))
    # phase gap just below a half-turn: negative cross term, valid kernel
    comps = [GcsmComponent(1.0, [0.3], [0.05], [0.0], [0.0]), GcsmComponent(0.6, [0.35], [0.04], [0.1], [0.97])]
    terms = gcsm_cross_terms_at_zero(comps)
    K = gram(GCSM(tuple(comps)), np.linspace(-5, 5, 40))
    min_eig = np.linalg.eigvalsh(K).min()
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and terms.min() < 0 and min_eig >= -1e-8 * np.trace(K) and elapsed < 5
    report(5, ok, f"diag max abs error {worst:.1e}; constructed cross term {terms.min():.3f} < 0 "
                  f"with Gram min eigenvalue {min_eig:.1e}; {elapsed:.1f}s")
    assert ok


def test_criterion_6_synthetic_benchmark():
    t0 = time.perf_counter()
    maes = {(t, k): [] for t in ("arti2-integral", "arti4-delayed") for k in ("SM", "GCSM")}
    for seed in range(5):
        tasks = gen_synthetic(seed)
        result = run_benchmark({n: tasks[n] for n in ("arti2-integral", "arti4-delayed")}, ("SM", "GCSM"), seed=seed)
        for c in result.cells:
            assert c.error is None, c.error
            maes[(c.task, c.kernel)].append(c.mae)
    elapsed = time.perf_counter() - t0
    med = {key: statistics.median(v) for key, v in maes.items()}
    ok = (med[("arti2-integral", "GCSM")] <= med[("arti2-integral", "SM")]
          and med[("arti4-delayed", "GCSM")] <= med[("arti4-delayed", "SM")] and elapsed < 20 * 60)
    per_seed = "; ".join(
        f"{t} GCSM {[round(v, 3) for v in maes[(t, 'GCSM')]]} SM {[round(v, 3) for v in maes[(t, 'SM')]]}"
        for t in ("arti2-integral", "arti4-delayed")
    )
    report(6, ok, f"median MAE arti2 GCSM {med[('arti2-integral', 'GCSM')]:.3f} vs SM "
                  f"{med[('arti2-integral', 'SM')]:.3f}, arti4 GCSM {med[('arti4-delayed', 'GCSM')]:.3f} vs SM "
                  f"{med[('arti4-delayed', 'SM')]:.3f}; {elapsed:.0f}s ({per_seed})")
    assert ok


def test_criterion_7_airline():
    t0 = time.perf_counter()
    result = run_benchmark({"airline": load_dataset(None, "airline")}, ("SM", "GCSM"), seed=0)
    elapsed = time.perf_counter() - t0
    sm, gc = result.cell("airline", "SM"), result.cell("airline", "GCSM")
    grams = result.grams["airline"]
    ratio = grams["absdiff"].max() / np.abs(grams["SM"]).max()
    ok = (sm.error is None and gc.error is None and sm.mae <= 35 and gc.mae <= sm.mae + 1.0
          and ratio > 1e-6 and elapsed < 600)
    report(7, ok, f"SM MAE {sm.mae:.3f} (<= 35), GCSM MAE {gc.mae:.3f} (<= SM + 1), "
                  f"max|K_GCSM - K_SM| / max|K_SM| {ratio:.2e}; {elapsed:.0f}s")
    assert ok


def test_criterion_8_riverflow():
    path = dataset_path("riverflow")
    if not path.exists():
        report(8, False, f"riverflow series not available at {path} "
                         "(set GCSM_RIVERFLOW_CSV to a 348-row t,y CSV); nothing was run")
        # reported as an expected failure so the rest of the suite stays green; the criterion is not met
        pytest.xfail("riverflow data missing, criterion 8 unmet")
    t0 = time.perf_counter()
    result = run_benchmark({"riverflow": load_dataset(None, "riverflow")}, ("SM", "GCSM"), seed=0)
    elapsed = time.perf_counter() - t0
    sm, gc = result.cell("riverflow", "SM"), result.cell("riverflow", "GCSM")
    ok = sm.error is None and gc.error is None and gc.mae <= sm.mae and elapsed < 15 * 60
    report(8, ok, f"GCSM MAE {gc.mae:.3f} vs SM MAE {sm.mae:.3f}; {elapsed:.0f}s")
    assert ok


def test_criterion_9_determinism(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(
        '{"fit": {"max_iters": 40}, "bo": {"n_init": 8, "budget": 10, "n_candidates": 256, "n_local": 32,'
        ' "inner_steps": 5}, "q_synthetic": 2, "q_real": 3, "sm_restarts": 2, "synthetic": {"n": 120}}'
    )
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        for suite in ("synthetic", "airline"):
            code = cli_main(["experiment", "--suite", suite, "--seed", "11", "--config", str(config),
                             "--out", str(out / suite)])
            assert code == 0
        outputs.append(out)
    capsys.readouterr()
    files = sorted(p.relative_to(outputs[0]) for p in outputs[0].rglob("*.csv"))
    same = all((outputs[0] / f).read_bytes() == (outputs[1] / f).read_bytes() for f in files)
    ok = same and len(files) == 5
    report(9, ok, f"{len(files)} result CSVs byte-identical across two runs: {same}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([str(Path(__file__)), "-q"]))
