"""Command-line pipeline: config validation, artifacts, determinism."""

import json

import numpy as np
import pytest
import yaml

from smvrft.cli import ConfigError, apply_seed_override, load_config, main
from smvrft.scenario import min_sample_size

MINI = {
    "example": "example1",
    "N_d": 60,
    "dbar": 0.1,
    "scenario": {"epsilon": 0.3, "beta": 0.01, "p": 1, "validate": False},
    "synthesis": {"mode": "ff", "vertex_budget": 64},
    "evaluation": {"bode_points": 32},
}

ARTIFACTS = [
    "dataset.csv", "dataset.meta.json", "alpha.json", "alphas.csv", "alphas.png",
    "fps.json", "controller_ff.json", "summary_ff.json",
    "trajectories_ff.csv", "trajectory_ff.png", "bode_ff.csv", "bode_ff.png",
]


def _write_cfg(path, extra=None):
    cfg = json.loads(json.dumps(MINI))
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def smoke_runs(tmp_path_factory):
    """Two identical full runs plus one with a master-seed override."""
    root = tmp_path_factory.mktemp("cli")
    cfg = _write_cfg(root / "mini.yaml")
    outs = {}
    for name in ("a", "b"):
        out = root / name
        assert main(["full", "--config", str(cfg), "--out", str(out)]) == 0
        outs[name] = out
    out = root / "seeded"
    assert main(["full", "--config", str(cfg), "--out", str(out), "--seed", "99"]) == 0
    outs["seeded"] = out
    outs["cfg"] = cfg
    return outs


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("example: [unclosed\n")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(p)

    def test_non_mapping_root(self, tmp_path):
        p = tmp_path / "list.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(p)

    def test_unknown_key(self, tmp_path):
        p = _write_cfg(tmp_path / "c.yaml", {"typo_key": 1})
        with pytest.raises(ConfigError, match="typo_key"):
            load_config(p)

    def test_plant_required(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("N_d: 100\n")
        with pytest.raises(ConfigError, match="example"):
            load_config(p)

    def test_unknown_example(self, tmp_path):
        p = _write_cfg(tmp_path / "c.yaml", {"example": "example9"})
        with pytest.raises(ConfigError, match="example9"):
            load_config(p)

    def test_degenerate_sizes(self, tmp_path):
        with pytest.raises(ConfigError, match="N_d"):
            load_config(_write_cfg(tmp_path / "a.yaml", {"N_d": 4}))
        with pytest.raises(ConfigError, match="dbar"):
            load_config(_write_cfg(tmp_path / "b.yaml", {"dbar": 0.0}))

    def test_defaults_merge_deeply(self, tmp_path):
        cfg = load_config(_write_cfg(tmp_path / "c.yaml"))
        # overridden leaf applies, sibling defaults survive
        assert cfg["scenario"]["epsilon"] == 0.3
        assert cfg["scenario"]["M_cap"] == 1e6
        assert cfg["seeds"] == {"noise1": 101, "noise2": 202, "scenario": 1000, "eval": 31}
        assert cfg["input"]["seed"] == 17

    def test_config_error_exit_code(self, tmp_path):
        assert main(["full", "--config", str(tmp_path / "ghost.yaml")]) == 4


class TestApplySeedOverride:
    def test_none_is_identity(self, tmp_path):
        cfg = load_config(_write_cfg(tmp_path / "c.yaml"))
        assert apply_seed_override(cfg, None) == cfg

    def test_derived_seeds(self, tmp_path):
        cfg = load_config(_write_cfg(tmp_path / "c.yaml"))
        out = apply_seed_override(cfg, 50)
        assert out["seeds"] == {"noise1": 51, "noise2": 52, "scenario": 1050, "eval": 81}
        assert out["input"]["seed"] == 53
        # the input mapping is untouched
        assert cfg["seeds"]["noise1"] == 101


class TestFullPipeline:
    def test_artifacts_exist(self, smoke_runs):
        for name in ARTIFACTS:
            assert (smoke_runs["a"] / name).exists(), name

    def test_campaign_size_and_inflation(self, smoke_runs):
        doc = json.loads((smoke_runs["a"] / "alpha.json").read_text())
        assert doc["N"] == min_sample_size(0.3, 0.01, 1)
        assert doc["alpha_star"] >= 1.0
        assert len(doc["removed"]) == 1

    def test_controller_solved_and_audited(self, smoke_runs):
        doc = json.loads((smoke_runs["a"] / "controller_ff.json").read_text())
        assert doc["solver_status"] == "optimal"
        assert doc["feasibility_check"]["passed"]
        assert len(doc["K"]) == 5
        assert doc["mode"] == "ff"

    def test_summary_schema(self, smoke_runs):
        doc = json.loads((smoke_runs["a"] / "summary_ff.json").read_text())
        for key in ("fit", "max_spectral_radius", "robustly_stable", "diverged",
                    "true_plant_radius", "n_vertices", "provenance", "config"):
            assert key in doc
        assert isinstance(doc["fit"], float) and not doc["diverged"]

    def test_byte_determinism(self, smoke_runs):
        for name in ("dataset.csv", "alphas.csv", "trajectories_ff.csv", "bode_ff.csv"):
            a = (smoke_runs["a"] / name).read_bytes()
            b = (smoke_runs["b"] / name).read_bytes()
            assert a == b, name

    def test_json_determinism_modulo_paths(self, smoke_runs):
        # provenance blocks embed absolute paths (and hashes of files that
        # embed them), so they are excluded; the chain has its own test
        for name in ("alpha.json", "fps.json", "controller_ff.json", "summary_ff.json"):
            a = json.loads((smoke_runs["a"] / name).read_text())
            b = json.loads((smoke_runs["b"] / name).read_text())
            a.pop("provenance", None)
            b.pop("provenance", None)
            assert a == b, name

    def test_provenance_chain_verifies(self, smoke_runs):
        from smvrft.report import sha256_of_file

        out = smoke_runs["a"]
        summary = json.loads((out / "summary_ff.json").read_text())
        for entry in summary["provenance"].values():
            assert sha256_of_file(entry["path"]) == entry["sha256"]

    def test_seed_override_changes_data(self, smoke_runs):
        a = (smoke_runs["a"] / "dataset.csv").read_bytes()
        s = (smoke_runs["seeded"] / "dataset.csv").read_bytes()
        assert a != s

    def test_trajectory_table_matches_summary_fit(self, smoke_runs):
        from smvrft.evaluation import fit_index

        out = smoke_runs["a"]
        rows = np.genfromtxt(out / "trajectories_ff.csv", delimiter=",", names=True)
        summary = json.loads((out / "summary_ff.json").read_text())
        assert fit_index(rows["y"], rows["y_target"]) == pytest.approx(
            summary["fit"], abs=1e-9
        )


class TestStageErrors:
    def test_evaluate_without_artifacts(self, smoke_runs, tmp_path):
        rc = main(["evaluate", "--config", str(smoke_runs["cfg"]), "--out", str(tmp_path)])
        assert rc == 4

    def test_synthesize_without_fps(self, smoke_runs, tmp_path):
        rc = main(["synthesize", "--config", str(smoke_runs["cfg"]), "--out", str(tmp_path)])
        assert rc == 4

    def test_identify_alpha_flag_wins(self, smoke_runs, tmp_path):
        rc = main(["identify", "--config", str(smoke_runs["cfg"]), "--out", str(tmp_path),
                   "--alpha", "1.5"])
        assert rc == 0
        doc = json.loads((tmp_path / "fps.json").read_text())
        assert doc["alpha"] == 1.5 and doc["alpha_source"] == "flag"
