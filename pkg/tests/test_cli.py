"""CLI tests: config validation, round-trips, exit codes, and the catalog."""

import json

import pytest

from glmax.cli import (
    EXPERIMENTS,
    ConfigError,
    catalog,
    main,
    parse_overrides,
    run_config,
    validate_config,
)


def write_cfg(tmp_path, name="cfg.json", **kw):
    p = tmp_path / name
    p.write_text(json.dumps(kw))
    return p


BASE = dict(experiment="green_table", n=3, seed=5)


class TestValidation:
    def test_defaults_filled(self):
        cfg = validate_config(dict(BASE))
        assert cfg["out_dir"] == "runs" and cfg["workers"] == 1
        assert cfg["convention"] == "covariance"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            validate_config(dict(BASE, bogus=1))

    def test_missing_required_rejected(self):
        with pytest.raises(ConfigError, match="missing required"):
            validate_config(dict(experiment="green_table", seed=5))
        with pytest.raises(ConfigError, match="missing required"):
            validate_config(dict(experiment="green_table", n=3))  # no seed

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="unknown experiment"):
            validate_config(dict(experiment="nope", seed=1))

    def test_type_checks(self):
        with pytest.raises(ConfigError, match="expected int"):
            validate_config(dict(BASE, n="three"))
        with pytest.raises(ConfigError, match="expected int"):
            validate_config(dict(BASE, seed=True))
        # int where float is expected is promoted
        cfg = validate_config(dict(experiment="harmonic_split_scan", n_list=[16, 32],
                                   seed=1, eps=1 / 4, spread_tol=1))
        assert isinstance(cfg["spread_tol"], float)

    def test_roundtrip_identity(self):
        cfg = validate_config(dict(BASE))
        again = validate_config(json.loads(json.dumps(cfg)))
        assert cfg == again

    def test_override_parsing(self):
        ov = parse_overrides(["seed=9", "eps=0.3", "n_list=[16,32]", "p_name=quadratic", "a=null"])
        assert ov == {"seed": 9, "eps": 0.3, "n_list": [16, 32], "p_name": "quadratic", "a": None}
        with pytest.raises(ConfigError):
            parse_overrides(["not-a-pair"])


class TestCatalog:
    def test_expected_ids(self):
        mc = {e["id"] for e in catalog() if e["kind"] == "mc"}
        exact = {e["id"] for e in catalog() if e["kind"] == "exact"}
        assert mc == {
            "bl_variance", "bl_exponential", "max_statistics", "lln_scan",
            "tail_probe", "thin_layer", "dh_recursion", "harmonic_decoupling",
        }
        assert exact == {
            "green_table", "potential_kernel", "harmonic_split_scan",
            "pair_increment_scan", "harnack_check",
        }

    def test_machine_and_human_forms_agree(self, capsys):
        assert main(["list-experiments", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert [e["id"] for e in payload] == sorted(EXPERIMENTS)
        assert main(["list-experiments"]) == 0
        human = capsys.readouterr().out
        for e in payload:
            assert e["id"] in human and e["claim"] in human

    def test_every_entry_has_claim_and_seed(self):
        for e in catalog():
            assert e["claim"]
            keys = {p["key"] for p in e["params"]}
            assert "seed" in keys and "out_dir" in keys


class TestRun:
    def test_run_writes_artifacts_exit_zero(self, tmp_path):
        cfg = write_cfg(tmp_path, **BASE, out_dir=str(tmp_path / "out"))
        record, paths = run_config(cfg)
        assert record.all_checks_passed
        assert all(p.parent == tmp_path / "out" for p in paths)
        assert main(["run", str(cfg)]) == 0

    def test_overrides_applied(self, tmp_path):
        cfg = write_cfg(tmp_path, **BASE, out_dir=str(tmp_path / "out"))
        record, _ = run_config(cfg, ["n=2", "seed=6"])
        assert record.config["n"] == 2 and record.seed == 6

    def test_bit_identical_reruns(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            experiment="max_statistics", p_name="quadratic", n=8, replicas=200,
            seed=42, out_dir=str(tmp_path / "out"),
        )
        _, paths1 = run_config(cfg)
        blobs1 = {p.name: p.read_bytes() for p in paths1 if p.suffix == ".csv"}
        _, paths2 = run_config(cfg)
        blobs2 = {p.name: p.read_bytes() for p in paths2 if p.suffix == ".csv"}
        assert blobs1 == blobs2

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, **BASE)
        assert main(["run", str(cfg), "bogus=1"]) == 2
        assert main(["run", str(tmp_path / "missing.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", str(bad)]) == 2

    def test_ordering_violation_exit_2(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            experiment="harmonic_decoupling", p_name="quadratic", n=16,
            delta=0.4, gamma=0.5, replicas=40, seed=1, out_dir=str(tmp_path / "out"),
        )
        assert main(["run", str(cfg)]) == 2

    def test_check_failure_exit_1(self, tmp_path):
        # impossible tolerance forces a failing assertion-class check
        cfg = write_cfg(
            tmp_path,
            experiment="harmonic_split_scan", n_list=[16, 32, 64], seed=1,
            slope_tol=0.0, out_dir=str(tmp_path / "out"),
        )
        assert main(["run", str(cfg)]) == 1

    def test_io_error_exit_3(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("file, not a directory")
        cfg = write_cfg(tmp_path, **BASE, out_dir=str(blocker / "sub"))
        assert main(["run", str(cfg)]) == 3

    def test_writes_stay_in_out_dir(self, tmp_path):
        out = tmp_path / "only_here"
        cfg = write_cfg(tmp_path, **BASE, out_dir=str(out))
        _, paths = run_config(cfg)
        assert all(str(p).startswith(str(out)) for p in paths)
        everything = {p for p in tmp_path.rglob("*") if p.is_file()}
        assert everything == set(paths) | {cfg}


class TestSuite:
    def test_summary_table_and_exit(self, tmp_path, capsys):
        ok = write_cfg(tmp_path, "ok.json", **BASE, out_dir=str(tmp_path / "out"))
        bad = write_cfg(
            tmp_path, "bad.json",
            experiment="harmonic_split_scan", n_list=[16, 32, 64], seed=1,
            slope_tol=0.0, out_dir=str(tmp_path / "out"),
        )
        code = main(["suite", str(ok), str(bad)])
        out = capsys.readouterr().out
        assert code == 1
        assert "PASS" in out and "FAIL" in out
