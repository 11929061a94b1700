"""Experiment-harness tests at small scale: statistical sanity against exact
Gaussian values, determinism, and the record format."""

import json
import math

import numpy as np
import pytest
from glmax import experiments as ex
from glmax.greens import box_green_diag
from glmax.lattice import make_box


class TestFunctionals:
    def test_known_names(self):
        for name in ex.FUNCTIONAL_NAMES:
            f = ex.functional_by_name(name, 8)
            assert len(f.coords) == len(f.weights) > 0
            assert np.abs(f.coords).max() <= 8

    def test_unknown_name(self):
        with pytest.raises(ex.ExperimentError):
            ex.functional_by_name("nope", 8)


class TestBlVariance:
    def test_quadratic_is_equality_case(self):
        rec = ex.bl_variance_check("quadratic", 8, replicas=3000, seed=101)
        assert rec.all_checks_passed
        for row in rec.tables["variance"]["rows"]:
            name, var, se, bound, ratio = row
            assert abs(var - bound) < 4 * se

    def test_logcosh_dominated(self):
        rec = ex.bl_variance_check("quad_logcosh", 8, a=1.0, replicas=600, seed=102, burn_in=25)
        assert rec.all_checks_passed
        for row in rec.tables["variance"]["rows"]:
            assert row[1] < row[3]  # strictly below the Gaussian bound

    def test_determinism(self):
        a = ex.bl_variance_check("quadratic", 6, replicas=200, seed=7)
        b = ex.bl_variance_check("quadratic", 6, replicas=200, seed=7)
        assert a.digest() == b.digest()
        c = ex.bl_variance_check("quadratic", 6, replicas=200, seed=8)
        assert a.digest() != c.digest()


class TestBlExponential:
    def test_zero_t_trivial(self):
        rec = ex.bl_exponential_check("quadratic", 6, t_grid=(0.0,), replicas=300, seed=11)
        row = rec.tables["mgf"]["rows"][0]
        assert row[1] == 1.0 and row[3] == 1.0

    def test_quadratic_equality_within_mc(self):
        rec = ex.bl_exponential_check("quadratic", 8, t_grid=(0.5, 1.0), replicas=4000, seed=12)
        assert rec.all_checks_passed
        for t, lhs, se, bound, heavy in rec.tables["mgf"]["rows"]:
            assert abs(lhs - bound) < 5 * se

    def test_logcosh_dominated(self):
        rec = ex.bl_exponential_check("quad_logcosh", 8, a=1.0, t_grid=(0.5, 1.0),
                                      replicas=600, seed=13, burn_in=25)
        assert rec.all_checks_passed

    def test_t_out_of_range(self):
        with pytest.raises(ex.ExperimentError):
            ex.bl_exponential_check("quadratic", 8, t_grid=(50.0,), replicas=100, seed=1)


class TestMaxStatistics:
    def test_single_site_box_interior(self):
        # the bulk region of the smallest box is the single interior site
        rec = ex.max_statistics("quadratic", 1, region_kind="bulk", eps=0.5,
                                replicas=20000, seed=21)
        assert abs(rec.statistics["mean"]) < 3 * rec.statistics["se"]
        assert abs(rec.statistics["var"] - 0.25) < 3 * rec.statistics["var_se"]

    def test_single_site_box_with_boundary(self):
        # over the full box the boundary zeros clip the max: max(X, 0) with
        # X ~ N(0, 1/4), so mean = sigma/sqrt(2 pi), var = sigma^2 (1/2 - 1/(2 pi))
        rec = ex.max_statistics("quadratic", 1, region_kind="full", replicas=20000, seed=21)
        sigma = 0.5
        assert abs(rec.statistics["mean"] - sigma / math.sqrt(2 * math.pi)) < 3 * rec.statistics["se"]
        exact_var = sigma**2 * (0.5 - 1 / (2 * math.pi))
        assert abs(rec.statistics["var"] - exact_var) < 3 * rec.statistics["var_se"]

    def test_heatmap_counts_sum_to_replicas(self):
        rec = ex.max_statistics("quadratic", 4, replicas=500, seed=22)
        total = sum(r[2] for r in rec.tables["argmax_heatmap"]["rows"])
        assert total == 500

    def test_exact_vs_mcmc_within_se(self):
        exact = ex.max_statistics("quadratic", 8, replicas=1200, seed=23, method="exact")
        chain = ex.max_statistics("quadratic", 8, replicas=1200, seed=24, method="mcmc", burn_in=200)
        joint = math.hypot(exact.statistics["se"], chain.statistics["se"])
        assert abs(exact.statistics["mean"] - chain.statistics["mean"]) < 3 * joint

    def test_region_variant(self):
        rec = ex.max_statistics("quadratic", 8, region_kind="funnel_trimmed",
                                eps=0.25, delta=0.5, replicas=400, seed=25)
        assert rec.statistics["mean"] > 0


class TestLlnScan:
    def test_quadratic_slope_and_monotone(self):
        rec = ex.lln_scan("quadratic", (16, 32, 64), replicas=800, seed=31)
        assert rec.all_checks_passed
        slope = rec.statistics["slope"]
        # pre-asymptotic slope sits below 2/sqrt(2 pi) but well above half of it
        assert 0.5 < slope < 1.0
        assert rec.statistics["g_hat"] == pytest.approx((slope / 2) ** 2)

    def test_needs_three_sizes(self):
        with pytest.raises(ex.ExperimentError):
            ex.lln_scan("quadratic", (8, 16), replicas=100, seed=1)


class TestTailProbe:
    def test_quadratic_matches_gaussian_tail(self):
        n = 8
        sigma = math.sqrt(float(box_green_diag(make_box(n), np.array([[0, 0]]))[0]))
        rec = ex.tail_probe("quadratic", n, u_grid=(0.0, 0.5, 1.0), g_hat=1 / (2 * math.pi),
                            replicas=20000, seed=41)
        assert rec.all_checks_passed
        for u, p_hat, se, bound, estimable in rec.tables["tail"]["rows"]:
            exact = 0.5 * math.erfc(u / (sigma * math.sqrt(2)))
            assert abs(p_hat - exact) < 4 * max(se, 1e-4)

    def test_no_exceedance_is_an_error(self):
        with pytest.raises(ex.ExperimentError, match="exceedance"):
            ex.tail_probe("quadratic", 4, u_grid=(50.0,), g_hat=0.16, replicas=200, seed=42)

    def test_probe_needs_interior_distance(self):
        with pytest.raises(ex.ExperimentError):
            ex.tail_probe("quadratic", 4, v=(3, 0), u_grid=(0.5,), g_hat=0.16, replicas=200, seed=43)


class TestThinLayer:
    def test_wide_strip_captures_argmax(self):
        # delta near 1: the layer is almost everything, so the argmax lives there
        rec = ex.thin_layer_check("quadratic", 16, delta=0.95, g_hat=0.16, replicas=400, seed=51)
        assert rec.statistics["freq_argmax_in_strip"] > 0.9

    def test_frequencies_reported_with_se(self):
        rec = ex.thin_layer_check("quadratic", 16, delta=0.5, g_hat=0.16, replicas=400, seed=52)
        s = rec.statistics
        assert 0 <= s["freq_argmax_in_strip"] <= 1
        assert 0 <= s["freq_strip_max_event"] <= 1
        assert s["se_argmax_in_strip"] > 0 and s["se_strip_max_event"] > 0


class TestDhRecursion:
    def test_pair_max_dominates_and_fields(self):
        rec = ex.dh_recursion("quadratic", (4,), replicas_by_power={4: 500, 6: 500}, seed=61)
        assert rec.all_checks_passed
        row = rec.tables["recursion"]["rows"][0]
        stats = rec.statistics["per_scale"]["4"]
        assert stats["e_max_pair"] >= stats["e_m"]
        assert stats["gap_se"] > 0 and stats["tightness"] > 0

    def test_scale_precondition(self):
        with pytest.raises(ex.ExperimentError):
            ex.dh_recursion("quadratic", (3,), seed=1)

    def test_determinism(self):
        kw = dict(replicas_by_power={4: 120, 6: 120}, seed=62)
        assert ex.dh_recursion("quadratic", (4,), **kw).digest() == \
               ex.dh_recursion("quadratic", (4,), **kw).digest()


class TestHarmonicDecoupling:
    def test_quadratic_exactness(self):
        rec = ex.harmonic_decoupling("quadratic", 16, delta=0.75, gamma=0.5, replicas=400, seed=71)
        assert rec.statistics["ks_pvalue"] > 0.005
        assert rec.all_checks_passed

    def test_ordering_enforced(self):
        with pytest.raises(ex.ExperimentError):
            ex.harmonic_decoupling("quadratic", 16, delta=0.5, gamma=0.6, replicas=50, seed=1)

    def test_shrink_scale_precondition(self):
        with pytest.raises(ex.ExperimentError, match="thin"):
            ex.harmonic_decoupling("quadratic", 16, delta=0.75, gamma=0.25, replicas=50, seed=1)

    def test_workers_equivalence(self):
        k = dict(delta=0.75, gamma=0.5, replicas=80, seed=72)
        a = ex.harmonic_decoupling("quadratic", 16, workers=1, **k)
        b = ex.harmonic_decoupling("quadratic", 16, workers=2, **k)
        pa, pb = a.deterministic_payload(), b.deterministic_payload()
        pa["config"].pop("workers")
        pb["config"].pop("workers")
        assert json.dumps(pa, sort_keys=True) == json.dumps(pb, sort_keys=True)


class TestExactReports:
    def test_harmonic_split_scan_checks(self):
        rec = ex.harmonic_split_scan((16, 32, 64), seed=81)
        assert {c["name"] for c in rec.checks} == {
            "side_outer_variance_bounded", "top_inner_variance_slope"
        }

    def test_pair_increment_stability(self):
        rec = ex.pair_increment_record((32, 64), seed=82)
        assert "k_max_rel_dev" in rec.statistics

    def test_harnack_record(self):
        rec = ex.harnack_check(4, n_pairs=10, seed=83)
        assert rec.all_checks_passed
        assert len(rec.tables["pairs"]["rows"]) == 10

    def test_green_dump(self):
        rec = ex.green_table_dump(3, seed=84)
        assert rec.all_checks_passed
        assert len(rec.tables["diagonal"]["rows"]) == 25

    def test_kernel_dump(self):
        rec = ex.potential_kernel_dump(16, seed=85)
        assert rec.all_checks_passed
        assert abs(rec.statistics["d0_fit"] - 1.0294) < 2e-3


class TestRecords:
    def test_json_roundtrip_and_digest_stability(self, tmp_path):
        rec = ex.harnack_check(4, n_pairs=5, seed=91)
        paths = rec.write(tmp_path)
        payload = json.loads(paths[0].read_bytes())
        assert payload["experiment"] == "harnack_check"
        assert payload["seed"] == 91
        assert "timing" in payload
        # determinism: timing excluded from the digest
        rec.timing = {"wall_clock_s": -1.0}
        again = ex.harnack_check(4, n_pairs=5, seed=91)
        assert rec.digest() == again.digest()

    def test_csv_full_precision_roundtrip(self, tmp_path):
        rec = ex.green_table_dump(2, seed=92)
        paths = rec.write(tmp_path)
        csv_path = [p for p in paths if p.name.endswith("diagonal.csv")][0]
        lines = csv_path.read_text().strip().split("\n")
        header = lines[0].split(",")
        assert header == ["x", "y", "g_vv"]
        for line, row in zip(lines[1:], rec.tables["diagonal"]["rows"]):
            cells = line.split(",")
            assert float(cells[2]) == row[2]  # repr round-trips exactly

    def test_filenames_embed_experiment_and_seed(self, tmp_path):
        rec = ex.harnack_check(4, n_pairs=5, seed=93)
        paths = rec.write(tmp_path)
        assert all(p.name.startswith("harnack_check_seed93") for p in paths)
