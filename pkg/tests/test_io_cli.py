import json
import os
from pathlib import Path

import numpy as np
import pytest

from hardspheres import cli
from hardspheres.cli import cli_dispatch, selftest_rows
from hardspheres.config import KEYS, ConfigError, RunConfig, load_config, parse_config
from hardspheres.dynamics import PathologicalStateError
from hardspheres.io import (SnapshotFormatError, build_id, provenance_lines, read_snapshot,
                            write_snapshot)
from hardspheres.phase import BoxSpec, HardSphereSystem

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestConfig:
    def test_defaults(self):
        cfg = parse_config('{"kind": "simulate"}')
        assert cfg == RunConfig("simulate", box=(10.0, 10.0))
        assert cfg.dim == 2 and cfg.N == 100 and cfg.sigma == 0.05 and cfg.seed == 0
        assert cfg.t_grid == (1.0,) and cfg.e == 1.0

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "simulate", "sigm": 0.1}')
        assert exc.value.key == "sigm" and "sigm" in str(exc.value)

    @pytest.mark.parametrize("e", [1.5, 0.0, -0.2])
    def test_restitution_range(self, e):
        with pytest.raises(ConfigError) as exc:
            parse_config(json.dumps({"kind": "granular", "e": e}))
        assert exc.value.key == "e"

    @pytest.mark.parametrize("text,key", [
        ('{"dim": 2}', "kind"),
        ('{"kind": "simulate", "N": "ten"}', "N"),
        ('{"kind": "simulate", "N": 2.5}', "N"),
        ('{"kind": "simulate", "dim": 4}', "dim"),
        ('{"kind": "simulate", "box": [1, 2, 3]}', "box"),
        ('{"kind": "simulate", "sigma": 2.0}', "sigma"),
        ('{"kind": "simulate", "e": 0.5}', "e"),
        ('{"kind": "simulate", "seed": -1}', "seed"),
        ('{"kind": "simulate", "g2_path": "nowhere.txt"}', "g2_path"),
        ('{"kind": "scaling", "scaling_mode": "correlation"}', "scaling_mode"),
        ('{"kind": "granular", "dim": 2}', "dim"),
        ('{"kind": "dsmc", "boundary": "open"}', "boundary"),
        ('[1, 2]', "<text>"),
    ])
    def test_errors_name_key(self, text, key):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.key == key

    def test_granular_defaults_to_one_dimension(self):
        assert parse_config('{"kind": "granular", "e": 0.9, "N": 20}').dim == 1

    def test_documented_keys(self):
        import hardspheres.config as mod
        for key in KEYS:
            assert f"\n{key} " in mod.__doc__

    def test_g2_path_relative_to_config(self):
        cfg = load_config(str(CONFIGS / "correlation.json"))
        assert os.path.isfile(cfg.g2_path)

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
    def test_example_configs_parse(self, name):
        cfg = load_config(str(CONFIGS / name))
        assert cfg.kind in name.replace(".json", "") or cfg.kind == "scaling"

    def test_digest_ignores_output_directory(self):
        a = parse_config('{"kind": "simulate", "out": "x"}')
        b = parse_config('{"kind": "simulate", "out": "y"}')
        c = parse_config('{"kind": "simulate", "seed": 1}')
        assert a.digest() == b.digest() != c.digest()


def random_system(n=7, d=3, seed=0):
    rng = np.random.default_rng(seed)
    box = BoxSpec((5.0, 6.0, 7.0)[:d])
    return HardSphereSystem(0.1, rng.random((n, d)) * np.asarray(box.lengths),
                            rng.normal(size=(n, d)), box, time=1.0 / 3.0)


class TestSnapshots:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_round_trip(self, tmp_path, d):
        s = random_system(d=d, seed=d)
        path = tmp_path / "s.txt"
        write_snapshot(s, path, ["config_sha256 abc"])
        back = read_snapshot(path)
        assert back == s
        assert np.array_equal(back.q, s.q) and np.array_equal(back.p, s.p)
        assert back.time == s.time and back.box == s.box

    def test_open_box_round_trip(self, tmp_path):
        s = HardSphereSystem(0.5, [[1.0, 1.0]], [[0.1, 0.2]], BoxSpec((4.0, 4.0), periodic=False))
        write_snapshot(s, tmp_path / "o.txt")
        assert read_snapshot(tmp_path / "o.txt") == s

    def test_header_only(self, tmp_path):
        s = HardSphereSystem(0.1, np.zeros((0, 2)), np.zeros((0, 2)), BoxSpec((3.0, 3.0)))
        write_snapshot(s, tmp_path / "e.txt")
        back = read_snapshot(tmp_path / "e.txt")
        assert back.n == 0 and back.dim == 2

    def test_truncated_row(self, tmp_path):
        path = tmp_path / "t.txt"
        write_snapshot(random_system(), path)
        lines = path.read_text().splitlines()
        bad = len(lines) - 2                      # 0-based index of the damaged row
        lines[bad] = "\t".join(lines[bad].split("\t")[:4])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SnapshotFormatError) as exc:
            read_snapshot(path)
        assert exc.value.line == bad + 1 and f"line {bad + 1}" in str(exc.value)

    def test_missing_rows(self, tmp_path):
        path = tmp_path / "m.txt"
        write_snapshot(random_system(), path)
        lines = path.read_text().splitlines()[:-2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SnapshotFormatError, match="expected 7 particle rows"):
            read_snapshot(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v.txt"
        write_snapshot(random_system(), path)
        path.write_text(path.read_text().replace("# format_version 1", "# format_version 9", 1))
        with pytest.raises(SnapshotFormatError, match="format_version 9") as exc:
            read_snapshot(path)
        assert exc.value.line == 1

    def test_seventeen_digits(self, tmp_path):
        s = HardSphereSystem(0.1, [[0.1]], [[1 / 3]], BoxSpec((1.0,)))
        write_snapshot(s, tmp_path / "d.txt")
        row = (tmp_path / "d.txt").read_text().splitlines()[-1]
        assert row.split("\t")[2] == "0.33333333333333331"


class TestProvenance:
    def test_lines(self):
        lines = provenance_lines("f" * 64, 7, {"collision_series": 0})
        assert lines[0] == "config_sha256 " + "f" * 64
        assert lines[1] == "master_seed 7"
        assert lines[2] == f"build {build_id()}" and len(build_id()) == 12
        assert lines[3] == "truncation collision_series=0"


def run_cli(argv, capsys):
    code = cli_dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


def provenance_ok(path):
    head = open(path).read().splitlines()[:6]
    assert head[0] == "# format_version 1", path
    joined = "\n".join(head)
    for key in ("config_sha256", "master_seed", "build", "truncation"):
        assert f"# {key} " in joined, (path, key)


class TestCli:
    def test_selftest(self, capsys, tmp_path):
        code, out, _ = run_cli(["combinatorics-selftest", "--out", str(tmp_path)], capsys)
        assert code == 0
        assert out.count("PASS") == len(selftest_rows()) and "FAIL" not in out
        assert (tmp_path / "selftest.txt").exists()

    def test_missing_config(self, capsys):
        code, _, err = run_cli(["simulate"], capsys)
        assert code == 1 and "usage:" in err and "--config" in err

    def test_unknown_subcommand(self, capsys):
        code, _, err = run_cli(["launch"], capsys)
        assert code == 1 and "usage:" in err

    def test_bad_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"kind": "simulate", "sigm": 0.1}')
        code, _, err = run_cli(["simulate", "--config", str(cfg)], capsys)
        assert code == 1 and "sigm" in err

    def test_kind_mismatch(self, capsys):
        code, _, err = run_cli(["dsmc", "--config", str(CONFIGS / "simulate.json")], capsys)
        assert code == 1 and "kind" in err

    def test_bad_seed(self, capsys):
        code, _, err = run_cli(["simulate", "--config", str(CONFIGS / "simulate.json"),
                                "--seed", "-3"], capsys)
        assert code == 1

    def test_runtime_failure(self, capsys, tmp_path, monkeypatch):
        def boom(cfg, out):
            raise PathologicalStateError("three-body contact")
        monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
        code, _, err = run_cli(["simulate", "--config", str(CONFIGS / "simulate.json"),
                                "--out", str(tmp_path)], capsys)
        assert code == 2 and "PathologicalStateError" in err

    def test_simulate_outputs(self, capsys, tmp_path):
        code, out, _ = run_cli(["simulate", "--config", str(CONFIGS / "simulate.json"),
                                "--out", str(tmp_path)], capsys)
        assert code == 0 and out.startswith("simulate:") and out.count("\n") == 1
        snaps = sorted(tmp_path.glob("snapshot_*.txt"))
        assert len(snaps) == 6
        for path in list(snaps) + [tmp_path / "simulate.jsonl"]:
            provenance_ok(path)
        s = read_snapshot(tmp_path / "snapshot_r1_t2.txt")
        assert s.time == 2.0 and s.n == 50

    def test_quiet(self, capsys, tmp_path):
        code, out, _ = run_cli(["simulate", "--config", str(CONFIGS / "simulate.json"),
                                "--out", str(tmp_path), "--quiet"], capsys)
        assert code == 0 and out == ""

    def test_seed_override_and_determinism(self, capsys, tmp_path):
        args = ["simulate", "--config", str(CONFIGS / "simulate.json")]
        run_cli(args + ["--out", str(tmp_path / "a")], capsys)
        run_cli(args + ["--out", str(tmp_path / "b")], capsys)
        run_cli(args + ["--out", str(tmp_path / "c"), "--seed", "99"], capsys)
        a = (tmp_path / "a" / "snapshot_r0_t2.txt").read_bytes()
        assert a == (tmp_path / "b" / "snapshot_r0_t2.txt").read_bytes()
        c = (tmp_path / "c" / "snapshot_r0_t2.txt").read_text()
        assert "# master_seed 99" in c and c.encode() != a

    @pytest.mark.parametrize("kind", ["dsmc", "granular", "estimate"])
    def test_other_commands(self, capsys, tmp_path, kind):
        code, out, err = run_cli([kind, "--config", str(CONFIGS / f"{kind}.json"),
                                  "--out", str(tmp_path)], capsys)
        assert code == 0, err
        assert out.startswith(kind)
        files = [p for p in tmp_path.iterdir() if p.name != "timing.json"]
        assert files
        for path in files:
            provenance_ok(path)

    def test_scaling_example_end_to_end(self, capsys, tmp_path):
        args = ["scaling", "--config", str(CONFIGS / "scaling.json")]
        code, out, err = run_cli(args + ["--out", str(tmp_path / "a")], capsys)
        assert code == 0, err
        assert "2 points" in out
        names = {p.name for p in (tmp_path / "a").iterdir()}
        assert {"report.jsonl", "summary.tsv", "timing.json"} <= names
        assert any(n.startswith("point1_") for n in names)
        for n in names - {"timing.json"}:
            provenance_ok(tmp_path / "a" / n)
        run_cli(args + ["--out", str(tmp_path / "b")], capsys)
        for n in names - {"timing.json"}:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_correlation_example(self, capsys, tmp_path):
        code, out, err = run_cli(["scaling", "--config", str(CONFIGS / "correlation.json"),
                                  "--out", str(tmp_path)], capsys)
        assert code == 0, err
        assert "correlation" in out
