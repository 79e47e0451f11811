import csv
import io
import json

import jsonschema
import pytest

from nudgemdp.cli import main
from nudgemdp.config import ConfigError, load_config
from nudgemdp.emit import CSV_SCHEMA, MANIFEST_SCHEMA, columns, config_hash


def write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.world.n_states == 8 and cfg.gamma_app == 0.99 and cfg.profile == "maximal"

    def test_file_then_flags(self, tmp_path):
        path = write(tmp_path, "seed: 4\nworld:\n  n_states: 6\n  d_world: 0.2\n")
        cfg = load_config(path, {"seed": 9, "world": {"n_states": None}})
        assert cfg.seed == 9
        assert cfg.world.n_states == 6 and cfg.world.d_world == 0.2

    def test_unknown_field_names_its_line(self, tmp_path):
        path = write(tmp_path, "seed: 1\nworld:\n  n_states: 6\n  colour: red\n")
        with pytest.raises(ConfigError, match=r"run\.yaml:4: world\.colour"):
            load_config(path)

    def test_bad_value_names_its_line(self, tmp_path):
        path = write(tmp_path, "user:\n  burden: -1\n  p_user: 2\n")
        with pytest.raises(ConfigError, match=r":3: user\.p_user"):
            load_config(path)

    def test_type_error(self, tmp_path):
        path = write(tmp_path, "seed: lots\n")
        with pytest.raises(ConfigError, match="seed"):
            load_config(path)

    def test_yaml_syntax_error(self, tmp_path):
        path = write(tmp_path, "world: [\n")
        with pytest.raises(ConfigError, match=r"run\.yaml:\d+:\d+"):
            load_config(path)

    def test_unknown_preset(self, tmp_path):
        with pytest.raises(ConfigError, match="preset"):
            load_config(write(tmp_path, "preset: heroic\n"))

    def test_explicit_profile(self, tmp_path):
        cfg = load_config(write(tmp_path, "profile:\n  delta_gamma: 0.5\n  d_floor: -3\n"))
        prof = cfg.make_profile(cfg.theta())
        assert prof.delta_gamma == 0.5 and prof.delta_B == 0.0 and prof.d_floor == -3.0

    def test_start_state_checked_against_chain(self, tmp_path):
        with pytest.raises(ConfigError, match="start_w"):
            load_config(write(tmp_path, "start_w: 9\n"))

    def test_manifest_config_is_loadable(self, tmp_path):
        cfg = load_config(write(tmp_path, "preset: myopic\nseed: 3\n"))
        manifest = {"config": cfg.to_dict(), "config_hash": config_hash(cfg.to_dict())}
        again = load_config(write(tmp_path, json.dumps(manifest), "manifest.json"))
        assert again.to_dict() == cfg.to_dict()


class TestExitCodes:
    def test_ok(self, capsys):
        assert main(["solve-user"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert rows[0]["delta"] == "1"
        assert float(rows[0]["v_star"]) == pytest.approx(125 / 19, abs=1e-12)

    def test_myopic_policy_only_acts_next_to_goal(self, capsys):
        assert main(["solve-user", "--preset", "myopic"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [r["policy"] for r in rows] == ["1"] + ["0"] * 6

    def test_malformed_config_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = write(tmp_path, "world:\n  n_states: one\n")
        assert main(["plan", "--config", path, "--out", str(out)]) == 2
        assert not out.exists()
        assert "n_states" in capsys.readouterr().err

    def test_singular_user(self, tmp_path):
        path = write(tmp_path, "user:\n  gamma_user: 1.0\n  p_user: 0.0\n")
        assert main(["solve-user", "--config", path]) == 3

    def test_singular_after_intervention(self, tmp_path):
        path = write(tmp_path, "user:\n  p_user: 0.0\n")
        assert main(["plan", "--config", path]) == 3

    def test_pattern_failure(self, tmp_path):
        # the overconfident user shows no B/D-only window on eight states
        out = tmp_path / "figs"
        assert main(["reproduce-figures", "--out", str(out)]) == 4
        assert (out / "manifest.json").exists()

    def test_calibrated_figures_pass(self, tmp_path):
        assert main(["reproduce-figures", "--n-states", "10", "--out", str(tmp_path / "f")]) == 0

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            main(["explode"])
        assert info.value.code == 2


class TestOutputs:
    def test_plan_manifest(self, tmp_path):
        out = tmp_path / "plan"
        assert main(["plan", "--preset", "myopic", "--out", str(out), "--format", "csv", "--format", "json"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
        assert manifest["results"]["window2"] == ["gamma"]
        assert manifest["config_hash"] == config_hash(manifest["config"])
        assert sorted(manifest["outputs"]) == ["policy_map.csv", "results.json"]

    @pytest.mark.parametrize(
        "argv,table",
        [
            (["solve-user"], "solve_user"),
            (["plan", "--preset", "farsighted"], "policy_map"),
            (["min-effect", "--preset", "underconfident"], "effectiveness"),
            (["simulate", "--episodes", "300"], "simulate"),
            (["sensitivity", "--trials", "3"], "sensitivity"),
        ],
    )
    def test_csv_columns_follow_schema(self, tmp_path, argv, table):
        out = tmp_path / "o"
        assert main(argv + ["--out", str(out)]) == 0
        path = out / CSV_SCHEMA["tables"][table]["file"]
        header = path.read_text().splitlines()[0].split(",")
        assert header == columns(table)
        jsonschema.validate(json.loads((out / "manifest.json").read_text()), MANIFEST_SCHEMA)

    @pytest.mark.parametrize(
        "argv",
        [
            ["solve-user", "--preset", "myopic"],
            ["plan", "--preset", "underconfident", "--n-states", "6"],
            ["simulate", "--episodes", "500", "--seed", "17"],
            ["sensitivity", "--trials", "3", "--seed", "2"],
            ["min-effect", "--preset", "overconfident"],
        ],
    )
    def test_manifest_round_trip_is_byte_identical(self, tmp_path, argv):
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--out", str(first)]) == 0
        cmd = argv[0]
        assert main([cmd, "--config", str(first / "manifest.json"), "--out", str(second)]) == 0
        for name in json.loads((first / "manifest.json").read_text())["outputs"]:
            if name.endswith(".csv"):
                assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_simulate_always_inducing(self, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--episodes", "400", "--out", str(out), "--trajectories", "2"]) == 0
        row = read_csv(out / "simulate.csv")[0]
        assert float(row["goal_rate"]) == 1.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert "trajectories.ndjson" in manifest["outputs"]
        assert manifest["results"]["analytic_absorption"]["goal"] == pytest.approx(1.0)

    def test_sensitivity_few_trials(self, tmp_path):
        out = tmp_path / "sens"
        assert main(["sensitivity", "--trials", "5", "--out", str(out), "--format", "json"]) == 0
        counts = json.loads((out / "results.json").read_text())["counts"]
        assert counts["pass"] >= 4 and counts["fail"] == 0

    def test_svg(self, tmp_path):
        out = tmp_path / "svg"
        assert main(["plan", "--preset", "myopic", "--out", str(out), "--format", "svg"]) == 0
        assert (out / "policy_map.svg").read_text().startswith("<svg")

    def test_missing_values_marked(self, tmp_path):
        out = tmp_path / "me"
        assert main(["min-effect", "--preset", "underconfident", "--out", str(out)]) == 0
        rows = read_csv(out / "effectiveness.csv")
        assert any(r["min_effectiveness"] == "NA" for r in rows)
