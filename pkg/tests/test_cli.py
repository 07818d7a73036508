import csv
import json

import pytest

from nearcrash.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from nearcrash.pipeline import OUTPUT_FILES, REPORT_FILE, ConfigError, load_config
from nearcrash.synthetic import HEADER


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def quiet_trip(path, ax=0.0):
    rows = [["1", "1", k * 1000, "42.0", f"{-83.0 + k * 1e-5:.6f}", "10.0", ax, "1", "5.0",
             "2012-10-02T08:00:00"] for k in range(70)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        w.writerows(rows)
    return path


def test_missing_segments_exit_config_without_outputs(corpus, tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--trajectory", str(corpus.trajectory), "--segments", str(tmp_path / "nope.geojson"),
                 "--out-dir", str(out)])
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_bad_threshold_is_config_error(corpus, tmp_path):
    assert main(["run", "--config", str(corpus.config), "--min-support", "0",
                 "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_malformed_trajectory_is_data_error(corpus, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(",".join(HEADER) + "\n1,1,0,abc,-83,1,0,1,5,2012-10-02T08:00:00\n")
    code = main(["extract", "--trajectory", str(bad), "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_DATA
    assert main(["extract", "--trajectory", str(bad), "--lenient", "--out-dir", str(tmp_path / "o")]) == EXIT_OK


def test_zero_brakes_writes_header_only_tables(corpus, tmp_path, capsys):
    traj = quiet_trip(tmp_path / "t.csv")
    out = tmp_path / "out"
    code = main(["run", "--trajectory", str(traj), "--segments", str(corpus.segments), "--out-dir", str(out)])
    assert code == EXIT_OK
    assert "warning: no near-crash events" in capsys.readouterr().out
    for name in OUTPUT_FILES:
        assert len(read(out / name)) == 1, name
    report = json.loads((out / REPORT_FILE).read_text())
    assert report["stages"]["classify"]["events_in"] == 0


def test_subcommands_chain_matches_run(corpus, tmp_path):
    cfg = ["--config", str(corpus.config)]
    stage_dir, run_dir = tmp_path / "stages", tmp_path / "run"
    assert main(["extract", *cfg, "--out-dir", str(stage_dir)]) == EXIT_OK
    assert main(["conflate", *cfg, "--events", str(stage_dir / "events.csv"),
                 "--out-dir", str(stage_dir)]) == EXIT_OK
    assert main(["mine", *cfg, "--conflated", str(stage_dir / "conflated.csv"),
                 "--out-dir", str(stage_dir)]) == EXIT_OK
    assert main(["report", *cfg, "--rules", str(stage_dir / "rules.csv"), "--out-dir", str(stage_dir)]) == EXIT_OK
    assert main(["run", *cfg, "--out-dir", str(run_dir)]) == EXIT_OK
    for name in OUTPUT_FILES:
        assert (stage_dir / name).read_bytes() == (run_dir / name).read_bytes(), name


def test_missing_stage_input_is_config_error(corpus, tmp_path):
    assert main(["mine", "--config", str(corpus.config), "--conflated", str(tmp_path / "x.csv"),
                 "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_scatter_agrees_with_rule_tables(corpus, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(corpus.config), "--out-dir", str(out), "--top-k", "1000"]) == EXIT_OK
    scatter = {(r[4], r[5]): r[:3] for r in read(out / "rule_scatter.csv")[1:]}
    tabled = 0
    for name, cons in (("rules_trivial.csv", "nv_severity=trivial"), ("rules_non_trivial.csv", "nv_severity=non-trivial")):
        rows = read(out / name)
        n_items = sum(h.startswith("item_") for h in rows[0])
        for r in rows[1:]:
            ante = " & ".join(c for c in r[2:2 + n_items] if c != "--")
            assert scatter[(cons, ante)] == r[2 + n_items:5 + n_items]
            tabled += 1
    assert tabled == len(scatter)


def test_precedence_file_env_flags(corpus, tmp_path):
    assert load_config(corpus.config, env={}).min_support == 0.1
    env = {"NEARCRASH_MIN_SUPPORT": "0.2", "NEARCRASH_DROP_UNKNOWN": "false"}
    cfg = load_config(corpus.config, env=env)
    assert (cfg.min_support, cfg.drop_unknown) == (0.2, False)
    assert load_config(corpus.config, {"min_support": 0.3}, env=env).min_support == 0.3
    with pytest.raises(ConfigError):
        load_config(None, env={"NEARCRASH_COLOUR": "red"})
    with pytest.raises(ConfigError):
        load_config(None, env={"NEARCRASH_DROP_UNKNOWN": "perhaps"})


def test_env_override_through_cli(corpus, tmp_path, monkeypatch):
    monkeypatch.setenv("NEARCRASH_MIN_SUPPORT", "0.3")
    out = tmp_path / "o"
    assert main(["run", "--config", str(corpus.config), "--out-dir", str(out)]) == EXIT_OK
    report = json.loads((out / REPORT_FILE).read_text())
    assert report["config"]["min_support"] == 0.3
