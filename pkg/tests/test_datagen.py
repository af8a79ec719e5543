"""Generator configuration, domain/example sampling, and dataset splitting."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from auglab._rng import tagged_sequence
from auglab.blocks import BlockLayout, LinearModel
from auglab.datagen import (
    Dataset,
    GeneratorConfig,
    default_config,
    sample_dataset,
    sample_domains,
    split_id_validation,
)


def stream(tag: str, seed: int = 0):
    return tagged_sequence(seed, tag)


class TestGeneratorConfig:
    def test_defaults_match_headline_scalars(self):
        cfg = default_config()
        assert (cfg.d_obj, cfg.d_noise, cfg.d_core, cfg.d_spu) == (5, 500, 5, 500)
        assert cfg.sigma_core_sq == cfg.sigma_spu_sq == 0.1
        assert cfg.tau_core_sq == cfg.tau_spu_sq == 1.0
        assert cfg.sigma_y_sq == 0.01
        assert cfg.gamma_sq == pytest.approx(10.0)
        assert cfg.d_dom == 505
        assert cfg.d_total == 1010

    def test_theta_star_norms_and_zero_blocks(self):
        cfg = default_config(seed=7)
        th = cfg.theta_star
        assert np.linalg.norm(th.obj) == pytest.approx(1.0, rel=1e-12)
        assert np.linalg.norm(th.core) == pytest.approx(1.0, rel=1e-12)
        assert np.array_equal(th.noise, np.zeros(cfg.d_noise))
        assert np.array_equal(th.spu, np.zeros(cfg.d_spu))

    def test_theta_star_deterministic_per_seed(self):
        a = default_config(seed=3)
        b = default_config(seed=3)
        c = default_config(seed=4)
        assert a.theta_star == b.theta_star
        assert a.theta_star != c.theta_star

    def test_rejects_nonzero_spu_weights(self, tiny_config):
        bad = LinearModel(
            obj=tiny_config.theta_star.obj,
            noise=tiny_config.theta_star.noise,
            core=tiny_config.theta_star.core,
            spu=np.ones(tiny_config.d_spu),
        )
        with pytest.raises(ValueError):
            dataclasses.replace(tiny_config, theta_star=bad)

    def test_rejects_bad_scalars(self):
        with pytest.raises(ValueError):
            default_config(sigma_core_sq=0.0)
        with pytest.raises(ValueError):
            default_config(tau_spu_sq=-1.0)
        with pytest.raises(ValueError):
            default_config(sigma_y_sq=-0.01)
        with pytest.raises(ValueError):
            default_config(d_core=0, d_spu=0)

    def test_layout_mismatch_rejected(self, tiny_config):
        wrong = LinearModel.zeros(BlockLayout(2, 4, 2, 4))
        with pytest.raises(ValueError):
            dataclasses.replace(tiny_config, theta_star=wrong)

    def test_toml_round_trip(self, small_config, tmp_path):
        path = tmp_path / "config.toml"
        small_config.save(path)
        assert GeneratorConfig.load(path) == small_config

    def test_block_variance_accessors(self, tiny_config):
        assert tiny_config.block_variance("obj") == 1.0
        assert tiny_config.block_variance("core") == tiny_config.sigma_core_sq
        assert tiny_config.mean_variance("spu") == tiny_config.tau_spu_sq
        assert tiny_config.mean_variance("noise") == 0.0


class TestSampleDomains:
    def test_ids_and_shapes(self, tiny_config):
        domains = sample_domains(tiny_config, 4, stream("t|dom"))
        assert [d.id for d in domains] == [0, 1, 2, 3]
        assert all(d.mu_core.shape == (tiny_config.d_core,) for d in domains)
        assert all(d.mu_spu.shape == (tiny_config.d_spu,) for d in domains)

    def test_deterministic_given_stream(self, tiny_config):
        a = sample_domains(tiny_config, 3, stream("t|dom"))
        b = sample_domains(tiny_config, 3, stream("t|dom"))
        assert a == b

    def test_mean_covariance_matches_tau(self):
        # Across-domain covariance of the means converges to tau^2 I.
        cfg = default_config(seed=0, d_noise=2, d_core=4, d_spu=4, tau_core_sq=0.7)
        domains = sample_domains(cfg, 10_000, stream("t|dom-cov"))
        mu = np.stack([d.mu_core for d in domains])
        cov = mu.T @ mu / len(domains)
        assert np.allclose(cov, 0.7 * np.eye(4), atol=0.05 * 0.7 + 0.02)

    def test_rejects_zero_domains(self, tiny_config):
        with pytest.raises(ValueError):
            sample_domains(tiny_config, 0, stream("t|dom"))


class TestSampleDataset:
    def test_shapes_and_balance(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 21, stream("t|ds"))
        assert ds.x.shape == (21, tiny_config.d_total)
        assert ds.y.shape == (21,)
        counts = ds.domain_counts()
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == 21

    @given(st.integers(min_value=1, max_value=40), st.integers(min_value=1, max_value=7))
    def test_round_robin_balance(self, n, num_domains):
        cfg = default_config(seed=0, d_obj=1, d_noise=1, d_core=1, d_spu=1)
        domains = sample_domains(cfg, num_domains, stream("t|bal"))
        ds = sample_dataset(cfg, domains, n, stream("t|bal-ds"))
        counts = ds.domain_counts()
        assert counts.max() - counts.min() <= 1

    def test_labels_ignore_realized_core_noise_spu(self, small_config):
        # Redrawing any non-label stream must leave y and the other columns
        # untouched; the label uses the domain mean, not the realized block.
        domains = sample_domains(small_config, 5, stream("t|ind-dom"))
        base = sample_dataset(small_config, domains, 64, stream("t|ind"))
        for name in ("noise", "core", "spu"):
            redrawn = sample_dataset(
                small_config, domains, 64, stream("t|ind"),
                block_streams={name: stream(f"t|alt-{name}")},
            )
            sl = small_config.layout.slices()[name]
            assert not np.array_equal(redrawn.x[:, sl], base.x[:, sl])
            assert np.array_equal(redrawn.y, base.y)
            for other in set(("obj", "noise", "core", "spu")) - {name}:
                so = small_config.layout.slices()[other]
                assert np.array_equal(redrawn.x[:, so], base.x[:, so])

    def test_label_formula_exact_when_noise_free(self, small_config):
        cfg = dataclasses.replace(small_config, sigma_y_sq=0.0)
        domains = sample_domains(cfg, 4, stream("t|exact-dom"))
        ds = sample_dataset(cfg, domains, 32, stream("t|exact"))
        mu_core = np.stack([d.mu_core for d in domains])
        expected = (
            ds.block("obj") @ cfg.theta_star.obj
            + mu_core[ds.domain_ids] @ cfg.theta_star.core
        )
        assert np.allclose(ds.y, expected, rtol=0, atol=1e-14)

    def test_within_domain_core_covariance(self):
        # Conditional on a domain, x_core fluctuates around the mean with
        # isotropic variance sigma^2.
        cfg = default_config(seed=2, d_noise=2, d_core=3, d_spu=2, sigma_core_sq=0.4)
        domains = sample_domains(cfg, 1, stream("t|cov-dom"))
        ds = sample_dataset(cfg, domains, 10_000, stream("t|cov"))
        centered = ds.block("core") - domains[0].mu_core
        cov = centered.T @ centered / ds.num_examples
        assert np.allclose(cov, 0.4 * np.eye(3), atol=0.05 * 0.4 + 0.02)

    def test_domains_must_be_in_id_order(self, tiny_config, tiny_domains):
        shuffled = (tiny_domains[1], tiny_domains[0]) + tiny_domains[2:]
        with pytest.raises(ValueError):
            sample_dataset(tiny_config, shuffled, 10, stream("t|order"))

    def test_unknown_stream_override_rejected(self, tiny_config, tiny_domains):
        with pytest.raises(ValueError):
            sample_dataset(
                tiny_config, tiny_domains, 10, stream("t|bad"),
                block_streams={"label": stream("t|nope")},
            )

    def test_example_view(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 9, stream("t|view"))
        ex = ds.examples[4]
        assert ex.domain_id == ds.domain_ids[4]
        assert ex.y == ds.y[4]
        assert np.array_equal(ex.x.concat(), ds.x[4])
        assert len(ds.examples) == 9

    def test_csv_export(self, tiny_config, tiny_domains, tmp_path):
        ds = sample_dataset(tiny_config, tiny_domains, 6, stream("t|csv"))
        path = tmp_path / "data.csv"
        ds.to_csv(path)
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["domain_id", "y"]
        assert len(header) == 2 + tiny_config.d_total
        assert len(lines) == 1 + ds.num_examples
        first = lines[1].split(",")
        assert int(first[0]) == ds.domain_ids[0]
        assert float(first[1]) == ds.y[0]


class TestSplit:
    @given(
        st.integers(min_value=10, max_value=120),
        st.integers(min_value=1, max_value=6),
        st.floats(min_value=0.05, max_value=0.6),
    )
    def test_split_is_a_partition(self, n, num_domains, fraction):
        cfg = default_config(seed=0, d_obj=1, d_noise=1, d_core=1, d_spu=1)
        domains = sample_domains(cfg, num_domains, stream("t|split-dom"))
        ds = sample_dataset(cfg, domains, n, stream("t|split-ds"))
        rest, held = split_id_validation(ds, fraction, stream("t|split"))
        assert rest.num_examples + held.num_examples == n
        assert rest.num_examples >= 1 and held.num_examples >= 1
        combined = np.concatenate([rest.y, held.y])
        assert sorted(combined.tolist()) == sorted(ds.y.tolist())

    def test_split_sizes_proportional_per_domain(self, small_config):
        domains = sample_domains(small_config, 4, stream("t|prop-dom"))
        ds = sample_dataset(small_config, domains, 400, stream("t|prop-ds"))
        rest, held = split_id_validation(ds, 0.25, stream("t|prop"))
        held_counts = held.domain_counts()
        assert held_counts.sum() == 100
        assert np.all(held_counts == 25)

    def test_split_deterministic(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 60, stream("t|det-ds"))
        a = split_id_validation(ds, 0.2, stream("t|det"))
        b = split_id_validation(ds, 0.2, stream("t|det"))
        assert a[0] == b[0] and a[1] == b[1]

    def test_split_rejects_bad_fraction(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 20, stream("t|frac"))
        for bad in (0.0, 1.0, -0.1, 1.7):
            with pytest.raises(ValueError):
                split_id_validation(ds, bad, stream("t|frac-s"))


class TestDatasetValidation:
    def test_mismatched_rows_rejected(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 8, stream("t|val"))
        with pytest.raises(ValueError):
            Dataset(
                x=ds.x[:5],
                y=ds.y,
                domain_ids=ds.domain_ids,
                domains=ds.domains,
                config=ds.config,
            )

    def test_out_of_range_domain_id_rejected(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 8, stream("t|val2"))
        bad_ids = ds.domain_ids.copy()
        bad_ids[0] = len(tiny_domains)
        with pytest.raises(ValueError):
            Dataset(x=ds.x, y=ds.y, domain_ids=bad_ids, domains=ds.domains, config=ds.config)

    def test_select_subset(self, tiny_config, tiny_domains):
        ds = sample_dataset(tiny_config, tiny_domains, 12, stream("t|sel"))
        sub = ds.select(np.array([2, 5, 7]))
        assert sub.num_examples == 3
        assert np.array_equal(sub.x, ds.x[[2, 5, 7]])
        assert np.array_equal(sub.y, ds.y[[2, 5, 7]])
