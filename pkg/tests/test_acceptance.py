"""Release gates: every claim the package stands on, one test per gate.

Each test measures its own wall-clock time, records a PASS/FAIL line via
record_acceptance (printed as a terminal summary section), and then asserts.
The heavy sweep gates sit at the end so the cheap ones report first.
"""
from __future__ import annotations

import time

import numpy as np
from conftest import record_acceptance

from auglab._rng import tagged_sequence
from auglab.augment import AugmentationStrategy, augment_dataset
from auglab.bounds import (
    BoundQuery,
    eigenvalue_envelope,
    lower_bound_unaugmented,
    upper_bound_targeted,
)
from auglab.datagen import default_config, sample_domains
from auglab.estimators import compute_moments, oracle_model, population_estimator
from auglab.pixel import BackgroundPool, MaskedImage, StainBasis, copy_paste, hue_jitter, stain_jitter
from auglab.risk import (
    analytic_ood_risk,
    monte_carlo_risk,
    oracle_ood_risk,
    spectral_excess_ood,
)
from auglab.sweep import SweepSpec, emit_results, run_sweep, sweep_bound_curve

ALL_STRATEGIES = tuple(
    AugmentationStrategy(k)
    for k in ("Unaugmented", "OffTheShelf", "DomainInvariant", "Targeted")
)


def headline_query(num_domains: int) -> BoundQuery:
    return BoundQuery(
        gamma_sq=10.0, tau_sq=1.0, theta_core_norm_sq=1.0,
        d_core=5, d_dom=505, num_domains=num_domains,
    )


def seed_mean_excess(kind: str, D: int, seeds) -> tuple[float, float]:
    values = []
    for seed in seeds:
        cfg = default_config(seed=seed)
        domains = sample_domains(cfg, D, tagged_sequence(seed, f"domains|D={D}"))
        values.append(spectral_excess_ood(kind, compute_moments(domains), cfg))
    arr = np.array(values)
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(len(arr)))


def rmse_table(rows) -> dict[tuple[int, str], np.ndarray]:
    table: dict[tuple[int, str], list[float]] = {}
    for row in rows:
        assert row.error is None, f"sweep cell errored: {row.error}"
        table.setdefault((row.D, row.strategy), []).append(row.ood_rmse)
    return {key: np.array(vals) for key, vals in table.items()}


def stderr(values: np.ndarray) -> float:
    return float(values.std(ddof=1) / np.sqrt(len(values)))


def test_c1_oracle_monte_carlo_consistency():
    start = time.monotonic()
    cfg = default_config(seed=0)
    rmse, rmse_se = monte_carlo_risk(
        oracle_model(cfg), cfg, 1000, 100, tagged_sequence(0, "acceptance|oracle")
    )
    analytic = oracle_ood_risk(cfg)
    mse = rmse**2
    se_mse = 2.0 * rmse * rmse_se
    elapsed = time.monotonic() - start
    passed = abs(mse - analytic) <= 3.0 * se_mse and elapsed < 10.0
    record_acceptance(
        "C1", passed,
        f"oracle MC risk {mse:.5f} vs analytic {analytic:.5f}, "
        f"|diff| {abs(mse - analytic):.2e} <= 3se {3 * se_mse:.2e}; {elapsed:.1f}s",
    )


def test_c2_invariant_excess_is_exact():
    start = time.monotonic()
    worst = 0.0
    for D in (5, 50, 500):
        for seed in (0, 1, 2):
            cfg = default_config(seed=seed)
            domains = sample_domains(cfg, D, tagged_sequence(seed, f"domains|D={D}"))
            model = population_estimator(
                compute_moments(domains), cfg, AugmentationStrategy("DomainInvariant")
            )
            excess = analytic_ood_risk(model, cfg) - oracle_ood_risk(cfg)
            gamma_sq = cfg.tau_core_sq / cfg.sigma_core_sq
            norm_sq = float(cfg.theta_star.core @ cfg.theta_star.core)
            target = cfg.tau_core_sq * gamma_sq / (1.0 + gamma_sq) * norm_sq
            worst = max(worst, abs(excess - target) / target)
    elapsed = time.monotonic() - start
    passed = worst <= 1e-12 and elapsed < 1.0
    record_acceptance(
        "C2", passed,
        f"invariant excess equals 0.909091 at D in (5, 50, 500), "
        f"worst rel dev {worst:.2e} <= 1e-12; {elapsed:.2f}s",
    )


def test_c3_unaugmented_lower_bound_sandwich():
    start = time.monotonic()
    details = []
    passed = True
    for D in (50, 100, 250, 400):
        mean, se = seed_mean_excess("Unaugmented", D, range(20))
        lower = lower_bound_unaugmented(headline_query(D))
        ok = mean >= lower - 2.0 * se
        passed = passed and ok
        details.append(f"D={D}: {mean:.4f}(+-{se:.4f}) vs lower {lower:.4f}")
    elapsed = time.monotonic() - start
    passed = passed and elapsed < 120.0
    record_acceptance("C3", passed, "; ".join(details) + f"; {elapsed:.1f}s")


def test_c4_targeted_upper_bound_sandwich():
    start = time.monotonic()
    details = []
    passed = True
    excess_by_D = {}
    for D in (50, 100, 250, 500, 1000):
        mean, se = seed_mean_excess("Targeted", D, range(20))
        excess_by_D[D] = mean
        general, simple = upper_bound_targeted(headline_query(D))
        for name, bound in (("general", general), ("simple", simple)):
            if bound is None:
                continue
            ok = mean <= bound + 2.0 * se
            passed = passed and ok
            details.append(f"D={D}: {mean:.5f} <= {name} {bound:.5f}")
    decay = excess_by_D[1000] / excess_by_D[50]
    passed = passed and decay <= 0.2
    details.append(f"decay 1000/50 = {decay:.3f} <= 0.2")
    elapsed = time.monotonic() - start
    passed = passed and elapsed < 120.0
    record_acceptance("C4", passed, "; ".join(details) + f"; {elapsed:.1f}s")


def test_c7_dual_formula_equivalence():
    start = time.monotonic()
    rng = np.random.Generator(np.random.PCG64(20240817))
    worst = 0.0
    for trial in range(100):
        kind = "Unaugmented" if trial % 2 == 0 else "Targeted"
        dims = dict(
            d_obj=int(rng.integers(1, 5)),
            d_noise=int(rng.integers(2, 11)),
            d_core=int(rng.integers(1, 6)),
            d_spu=int(rng.integers(2, 9)),
        )
        scalars = dict(
            sigma_core_sq=float(rng.uniform(0.05, 0.5)),
            tau_core_sq=float(rng.uniform(0.5, 2.0)),
            sigma_y_sq=float(rng.uniform(0.001, 0.05)),
        )
        if kind == "Unaugmented":
            scalars["sigma_spu_sq"] = scalars["sigma_core_sq"]
            scalars["tau_spu_sq"] = scalars["tau_core_sq"]
        else:
            scalars["sigma_spu_sq"] = float(rng.uniform(0.05, 0.5))
            scalars["tau_spu_sq"] = float(rng.uniform(0.5, 2.0))
        seed = int(rng.integers(0, 1000))
        D = int(rng.integers(1, 40))
        cfg = default_config(seed=seed, **dims, **scalars)
        domains = sample_domains(cfg, D, tagged_sequence(seed, f"triple|{trial}"))
        moments = compute_moments(domains)
        model = population_estimator(moments, cfg, AugmentationStrategy(kind))
        direct = analytic_ood_risk(model, cfg) - oracle_ood_risk(cfg)
        dual = spectral_excess_ood(kind, moments, cfg)
        worst = max(worst, abs(dual - direct) / max(abs(direct), 1e-30))
    elapsed = time.monotonic() - start
    passed = worst <= 1e-8 and elapsed < 60.0
    record_acceptance(
        "C7", passed,
        f"spectral vs direct excess on 100 random triples, "
        f"worst rel dev {worst:.2e} <= 1e-8; {elapsed:.1f}s",
    )


def test_c8_lemma_validation_suites():
    start = time.monotonic()
    cfg = default_config(seed=0, d_obj=1, d_noise=1, d_core=20, d_spu=20)
    d_dom = cfg.d_core + cfg.d_spu
    theta_rng = np.random.Generator(np.random.PCG64(7))
    theta = theta_rng.standard_normal(d_dom)
    theta /= np.linalg.norm(theta)
    redraws = 2000
    acc = np.zeros(d_dom)
    for child in tagged_sequence(0, "acceptance|symmetry").spawn(redraws):
        domains = sample_domains(cfg, 20, child)
        _, vecs = np.linalg.eigh(compute_moments(domains).M_full)
        acc += (vecs.T @ theta) ** 2
    rel = np.abs(acc / redraws * d_dom - 1.0)
    symmetry_ok = bool(rel.max() <= 0.10)

    delta, redraws_env = 0.1, 500
    lo, hi = eigenvalue_envelope(5, 200, 1.0, delta)
    env_cfg = default_config(seed=0, d_obj=1, d_noise=1, d_core=5, d_spu=2)
    violations = 0
    for child in tagged_sequence(0, "acceptance|envelope").spawn(redraws_env):
        domains = sample_domains(env_cfg, 200, child)
        eigvals = np.linalg.eigvalsh(compute_moments(domains).M_core)
        if eigvals.min() < lo or eigvals.max() > hi:
            violations += 1
    rate = violations / redraws_env
    limit = delta + 3.0 * np.sqrt(delta * (1 - delta) / redraws_env)
    envelope_ok = rate <= limit

    elapsed = time.monotonic() - start
    passed = symmetry_ok and envelope_ok and elapsed < 300.0
    record_acceptance(
        "C8", passed,
        f"symmetry: max index dev {rel.max():.3f} <= 0.10 over {redraws} redraws; "
        f"envelope: violation rate {rate:.3f} <= {limit:.3f}; {elapsed:.1f}s",
    )


def test_c9_pixel_property_suite(rng):
    start = time.monotonic()
    pixels = np.round(rng.uniform(10.0, 245.0, size=(8, 8, 3)))
    mask = np.zeros((8, 8), dtype=int)
    mask[2:6, 1:5] = 1
    example = MaskedImage(pixels=pixels, mask=mask, label="cell", domain_id=0)
    background = MaskedImage(
        pixels=np.full((8, 8, 3), 40.0), mask=np.zeros((8, 8), dtype=int),
        label="empty", domain_id=1,
    )
    pool = BackgroundPool(backgrounds=(background,))
    pasted = copy_paste(example, pool, rng_stream=0)
    fg = mask == 1
    compositing_ok = np.array_equal(pasted.pixels[fg], pixels[fg]) and np.all(
        pasted.pixels[~fg] == 40.0
    )
    identity_ok = copy_paste(background, pool, rng_stream=0) is background

    image = rng.uniform(5.0, 250.0, size=(16, 16, 3))
    stain_dev = float(np.max(np.abs(stain_jitter(image, StainBasis(), alpha=1.0, beta=0.0) - image)))
    stain_ok = stain_dev <= 0.5

    extreme = rng.uniform(0.0, 255.0, size=(16, 16, 3))
    stained = stain_jitter(extreme, StainBasis(strength=0.5), rng_stream=1)
    hued = hue_jitter(extreme, 10.0, rng_stream=1)
    clip_ok = bool(
        np.all((stained >= 0) & (stained <= 255)) and np.all((hued >= 0) & (hued <= 255))
    )

    elapsed = time.monotonic() - start
    passed = compositing_ok and identity_ok and stain_ok and clip_ok and elapsed < 60.0
    record_acceptance(
        "C9", passed,
        f"compositing exact: {compositing_ok}; empty-label identity: {identity_ok}; "
        f"stain identity dev {stain_dev:.3f} <= 0.5; clipping: {clip_ok}; {elapsed:.1f}s",
    )


def test_c10_parallel_determinism(tmp_path):
    spec = SweepSpec(
        base_config=default_config(seed=1, d_obj=3, d_noise=30, d_core=3, d_spu=20),
        domain_counts=(5, 10),
        total_samples=400,
        strategies=ALL_STRATEGIES,
        seeds=(0, 1),
        mc_test_domains=200,
        mc_samples_per_domain=20,
    )
    curve = sweep_bound_curve(spec)
    serial = emit_results(run_sweep(spec, parallelism=1), curve, tmp_path / "p1", spec)
    parallel = emit_results(run_sweep(spec, parallelism=8), curve, tmp_path / "p8", spec)
    same = {name: serial[name].read_bytes() == parallel[name].read_bytes() for name in serial}
    passed = all(same.values())
    record_acceptance(
        "C10", passed,
        "parallelism 1 vs 8 byte-identical: "
        + ", ".join(f"{name}={ok}" for name, ok in sorted(same.items())),
    )


def test_c5_high_sample_figure():
    start = time.monotonic()
    spec = SweepSpec(
        base_config=default_config(seed=0),
        domain_counts=(10, 100, 1000),
        total_samples=100_000,
        strategies=ALL_STRATEGIES,
        seeds=tuple(range(10)),
        mode="finite_sample",
    )
    table = rmse_table(run_sweep(spec, parallelism=1))
    elapsed = time.monotonic() - start

    tgt100 = float(table[(100, "Targeted")].mean())
    unaug100 = float(table[(100, "Unaugmented")].mean())
    sep_ok = tgt100 <= 0.7 * unaug100

    equiv_ok = True
    for D in spec.domain_counts:
        u, s = table[(D, "Unaugmented")], table[(D, "OffTheShelf")]
        pooled = np.sqrt(stderr(u) ** 2 + stderr(s) ** 2)
        equiv_ok = equiv_ok and abs(u.mean() - s.mean()) <= 2.0 * pooled

    inv = {D: table[(D, "DomainInvariant")] for D in spec.domain_counts}
    means = {D: float(v.mean()) for D, v in inv.items()}
    d_hi, d_lo = max(means, key=means.get), min(means, key=means.get)
    spread = means[d_hi] - means[d_lo]
    pooled_inv = np.sqrt(stderr(inv[d_hi]) ** 2 + stderr(inv[d_lo]) ** 2)
    flat_ok = spread <= 3.0 * pooled_inv

    u1k = float(table[(1000, "Unaugmented")].mean())
    t1k = float(table[(1000, "Targeted")].mean())
    i1k = float(table[(1000, "DomainInvariant")].mean())
    oracle_rmse = np.sqrt(oracle_ood_risk(default_config(seed=0)))
    order_ok = t1k <= u1k <= i1k and abs(t1k / oracle_rmse - 1.0) <= 0.05

    passed = sep_ok and equiv_ok and flat_ok and order_ok and elapsed < 1800.0
    record_acceptance(
        "C5", passed,
        f"targeted@100 {tgt100:.4f} <= 0.7*unaug {0.7 * unaug100:.4f}; "
        f"unaug~shelf everywhere: {equiv_ok}; invariant spread {spread:.4f} <= "
        f"{3 * pooled_inv:.4f}; order@1000 (tgt {t1k:.4f} <= unaug {u1k:.4f} <= "
        f"inv {i1k:.4f}, tgt/oracle {t1k / oracle_rmse:.4f}); {elapsed:.0f}s",
    )


def test_c6_low_sample_figure():
    start = time.monotonic()
    spec = SweepSpec(
        base_config=default_config(seed=0),
        domain_counts=(5, 10, 20, 50, 200, 1000),
        total_samples=5000,
        strategies=ALL_STRATEGIES,
        seeds=tuple(range(10)),
        mode="finite_sample",
    )
    rows = run_sweep(spec, parallelism=1)
    table = rmse_table(rows)
    elapsed = time.monotonic() - start

    seeds = spec.seeds
    shelf_parts = []
    shelf_ok = True
    paired_hits = []
    for D in (5, 10, 20, 50):
        u, s = table[(D, "Unaugmented")], table[(D, "OffTheShelf")]
        gap = float(u.mean() - s.mean())
        pooled = np.sqrt(stderr(u) ** 2 + stderr(s) ** 2)
        ok = gap >= 2.0 * pooled
        shelf_ok = shelf_ok and ok
        shelf_parts.append(f"D={D}: gap {gap:+.4f} vs 2*pooled {2 * pooled:.4f}")
        diffs = u - s
        if float(diffs.mean()) >= 2.0 * stderr(diffs):
            paired_hits.append(D)

    inv_diff = {
        D: float(table[(D, "DomainInvariant")].mean() - table[(D, "Unaugmented")].mean())
        for D in spec.domain_counts
    }
    beats_small = any(d < 0 for d in inv_diff.values())
    loses_large = inv_diff[1000] > 0
    crossover_ok = beats_small and loses_large

    passed = shelf_ok and crossover_ok and elapsed < 900.0
    record_acceptance(
        "C6", passed,
        "shelf below unaug at 2*pooled: " + "; ".join(shelf_parts)
        + f" (paired-2se significant at D in {paired_hits}); "
        f"invariant-unaug gaps {['%+.3f' % inv_diff[D] for D in spec.domain_counts]}"
        f" -> crossover {'present' if crossover_ok else 'absent'}; {elapsed:.0f}s",
    )
