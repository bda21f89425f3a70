from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from fairdispatch.cli import main
from fairdispatch.errors import ConfigError
from fairdispatch.manifest import load_scenario


def write_manifest(path: Path, **overrides) -> Path:
    doc = {
        "window_len": 60,
        "horizon": 300,
        "max_wait": 300,
        "seed": 3,
        "network": {"grid": {"rows": 3, "cols": 3, "edge_cost": 60}},
        "partition": {"grid": {"rows_per_area": 3, "cols_per_area": 3}},
        "requests": {"profile": {"rates": [[0, 0, 0.6]], "seed": 5}},
        "fleet": {"random": {"size": 2, "capacity": 2, "seed": 9}},
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc, indent=2))
    return path


def test_load_scenario_happy(tmp_path):
    manifest = write_manifest(tmp_path / "m.json")
    scenario = load_scenario(manifest)
    assert len(scenario.net.locations) == 9
    assert scenario.partition.num_areas == 1
    assert len(scenario.fleet) == 2
    assert scenario.config.n_windows == 5


def test_load_scenario_rejects_unknown_keys(tmp_path):
    manifest = write_manifest(tmp_path / "m.json", typo_key=1)
    with pytest.raises(ConfigError, match="unknown manifest keys"):
        load_scenario(manifest)


def test_load_scenario_reports_json_line(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{\n  \"window_len\": 60,\n  oops\n}")
    with pytest.raises(ConfigError, match=r":3"):
        load_scenario(path)


def test_load_scenario_from_files(tmp_path):
    (tmp_path / "net.csv").write_text("0,1,60\n1,0,60\n1,2,60\n2,1,60\n")
    (tmp_path / "part.csv").write_text("0,0\n1,0\n2,1\n")
    (tmp_path / "req.csv").write_text("0,2,30\n")
    (tmp_path / "fleet.csv").write_text("0,0,1\n")
    (tmp_path / "prices.csv").write_text("0,2.5\n")
    manifest = write_manifest(
        tmp_path / "m.json",
        network={"path": "net.csv"},
        partition={"path": "part.csv"},
        requests={"path": "req.csv"},
        fleet={"path": "fleet.csv"},
        pricing={"path": "prices.csv"},
    )
    scenario = load_scenario(manifest)
    assert scenario.config.pricing == {0: 2.5}
    assert len(scenario.requests) == 1


def test_load_scenario_with_table_and_delay_vfa(tmp_path):
    (tmp_path / "vfa.csv").write_text("0,1,0,0.5\n")
    manifest = write_manifest(
        tmp_path / "m.json", vfa={"kind": "table", "path": "vfa.csv", "bucket_seconds": 1800}
    )
    scenario = load_scenario(manifest)
    assert scenario.config.vfa.kind == "table"
    assert scenario.config.vfa.table == {(0, 1, 0): 0.5}
    assert scenario.config.vfa.bucket_seconds == 1800

    manifest = write_manifest(tmp_path / "m2.json", vfa={"kind": "delay", "omega": 0.002})
    scenario = load_scenario(manifest)
    assert scenario.config.vfa.kind == "delay"
    assert scenario.config.vfa.omega == 0.002

    manifest = write_manifest(tmp_path / "m3.json", vfa={"kind": "table"})
    with pytest.raises(ConfigError, match="vfa.path"):
        load_scenario(manifest)


def test_validate_config_command(tmp_path, capsys):
    manifest = write_manifest(tmp_path / "m.json")
    assert main(["validate-config", "--manifest", str(manifest)]) == 0
    assert "ok:" in capsys.readouterr().out


def test_validate_config_rejects_negative_beta(tmp_path, capsys):
    manifest = write_manifest(tmp_path / "m.json", weights={"beta": -1.0})
    assert main(["validate-config", "--manifest", str(manifest)]) == 2
    assert "beta" in capsys.readouterr().err


def test_run_happy_path(tmp_path, capsys):
    manifest = write_manifest(tmp_path / "m.json")
    out = tmp_path / "out"
    assert main(["run", "--manifest", str(manifest), "--out", str(out)]) == 0
    assert (out / "metrics.csv").exists()
    assert (out / "result.json").exists()
    assert (out / "summary.txt").exists()
    assert not list(out.glob("*.tmp"))
    result = json.loads((out / "result.json").read_text())
    assert 0.0 <= result["service_rate"] <= 1.0
    rows = (out / "metrics.csv").read_text().splitlines()
    assert len(rows) == 1 + 5  # header + one row per window


def test_run_refuses_overwrite_without_force(tmp_path):
    manifest = write_manifest(tmp_path / "m.json")
    out = tmp_path / "out"
    assert main(["run", "--manifest", str(manifest), "--out", str(out)]) == 0
    before = (out / "metrics.csv").read_bytes()
    assert main(["run", "--manifest", str(manifest), "--out", str(out)]) == 4
    assert (out / "metrics.csv").read_bytes() == before
    assert main(["run", "--manifest", str(manifest), "--out", str(out), "--force"]) == 0


def test_run_metrics_byte_identical_across_runs(tmp_path):
    manifest = write_manifest(tmp_path / "m.json")
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--manifest", str(manifest), "--out", str(out1)]) == 0
    assert main(["run", "--manifest", str(manifest), "--out", str(out2)]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


def test_run_invalid_manifest_exits_2(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["run", "--manifest", str(missing), "--out", str(tmp_path / "o")]) == 2


def test_run_runtime_failure_exits_3(tmp_path):
    # loads fine, but a request arrives beyond the horizon
    (tmp_path / "req.csv").write_text("0,1,9999\n")
    manifest = write_manifest(tmp_path / "m.json", requests={"path": "req.csv"})
    assert main(["run", "--manifest", str(manifest), "--out", str(tmp_path / "o")]) == 3


def test_sweep_degenerate_matches_run(tmp_path):
    manifest = write_manifest(tmp_path / "m.json")
    run_out, sweep_out = tmp_path / "run", tmp_path / "sweep"
    assert main(["run", "--manifest", str(manifest), "--out", str(run_out)]) == 0
    assert (
        main(
            [
                "sweep",
                "--manifest", str(manifest),
                "--out", str(sweep_out),
                "--beta", "0",
                "--delta", "0",
                "--variant", "si",
            ]
        )
        == 0
    )
    with open(sweep_out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    final_metrics = (run_out / "metrics.csv").read_text().splitlines()[-1].split(",")
    assert rows[0]["overall_service_rate"] == final_metrics[1]
    assert rows[0]["driver_var"] == final_metrics[7]


def test_sweep_default_grid_cardinality_and_order(tmp_path):
    manifest = write_manifest(
        tmp_path / "m.json",
        horizon=120,
        requests={"profile": {"rates": [[0, 0, 0.4]], "seed": 5}},
    )
    out = tmp_path / "sweep"
    assert main(["sweep", "--manifest", str(manifest), "--out", str(out), "--jobs", "2"]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7 * 7 * 4
    keys = [
        (float(r["beta"]), float(r["delta"]), r["passenger_plus"], r["driver_plus"])
        for r in rows
    ]
    assert keys == sorted(keys)


def test_sweep_jobs_do_not_change_output(tmp_path):
    manifest = write_manifest(tmp_path / "m.json", horizon=120)
    o1, o2 = tmp_path / "s1", tmp_path / "s2"
    args = ["--beta", "0,1", "--delta", "0", "--variant", "both"]
    assert main(["sweep", "--manifest", str(manifest), "--out", str(o1), *args]) == 0
    assert main(["sweep", "--manifest", str(manifest), "--out", str(o2), *args, "--jobs", "2"]) == 0
    assert (o1 / "sweep.csv").read_bytes() == (o2 / "sweep.csv").read_bytes()


@pytest.mark.parametrize("which", ["passenger", "driver"])
def test_theorem_check_command(tmp_path, which):
    out = tmp_path / "thm"
    code = main(["theorem-check", "--which", which, "--seeds", "3", "--out", str(out)])
    assert code == 0
    report = (out / "theorem_report.csv").read_text().splitlines()
    assert len(report) == 4  # header + 3 seeds
    assert not list(out.glob("theorem_fail_seed*.json"))


def test_theorem_check_failure_dumps_instance(tmp_path, monkeypatch):
    import fairdispatch.cli as cli
    from fairdispatch.sim import TheoremOutcome

    def always_fail(inst, ladder):
        return TheoremOutcome(inst.seed, True, 0.5, {1.0: 0.5}, False, '{"vehicles": []}')

    monkeypatch.setattr(cli, "check_passenger_theorem", always_fail)
    out = tmp_path / "thm"
    code = main(["theorem-check", "--which", "passenger", "--seeds", "2", "--out", str(out)])
    assert code == 5
    assert (out / "theorem_fail_seed0.json").exists()
    assert (out / "theorem_fail_seed1.json").exists()


def test_gen_network_and_demand_roundtrip(tmp_path):
    manifest = write_manifest(tmp_path / "m.json")
    gen = tmp_path / "gen"
    assert main(["gen-network", "--manifest", str(manifest), "--out", str(gen)]) == 0
    assert main(["gen-demand", "--manifest", str(manifest), "--out", str(gen)]) == 0

    replay = write_manifest(
        tmp_path / "replay.json",
        network={"path": "gen/network.csv"},
        partition={"path": "gen/partition.csv"},
        requests={"path": "gen/requests.csv"},
    )
    scenario = load_scenario(replay)
    original = load_scenario(manifest)
    assert scenario.net.locations == original.net.locations
    assert sorted(scenario.net.edges) == sorted(original.net.edges)
    assert [
        (r.pickup, r.dropoff, r.arrival) for r in scenario.requests
    ] == [(r.pickup, r.dropoff, r.arrival) for r in original.requests]
    out = tmp_path / "replay_out"
    assert main(["run", "--manifest", str(replay), "--out", str(out)]) == 0


def test_gen_demand_requires_profile(tmp_path):
    (tmp_path / "req.csv").write_text("0,1,30\n")
    manifest = write_manifest(tmp_path / "m.json", requests={"path": "req.csv"})
    assert main(["gen-demand", "--manifest", str(manifest), "--out", str(tmp_path / "g")]) == 2
