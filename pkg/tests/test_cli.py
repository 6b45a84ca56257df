"""CLI: init/run/export/report round trips on session files."""

import json

from click.testing import CliRunner

from molsteer.cli import main
from molsteer.session import Session

SEEDS = "CCO\nCCN\nCCC\nc1ccc(cc1)O\nCC(=O)O\nCCCl\n"


def _init(runner, tmp_path, extra=()):
    dataset = tmp_path / "seeds.smi"
    dataset.write_text(SEEDS)
    session_path = tmp_path / "session.json"
    result = runner.invoke(main, [
        "init", "--dataset", str(dataset), "--out", str(session_path),
        "--seed", "7", "--population", "20", *extra,
    ])
    assert result.exit_code == 0, result.output
    return session_path


class TestInit:
    def test_creates_session_file(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        session = Session.load(path)
        assert session.config.rng_seed == 7
        assert session.config.population_size == 20
        assert len(session.snapshots) == 1

    def test_warnings_go_to_stderr(self, tmp_path):
        runner = CliRunner()
        dataset = tmp_path / "seeds.smi"
        dataset.write_text(SEEDS + "C((\n")
        result = runner.invoke(main, [
            "init", "--dataset", str(dataset),
            "--out", str(tmp_path / "s.json"),
        ])
        assert result.exit_code == 0
        assert "warning" in result.stderr

    def test_sample_and_dataset_are_exclusive(self, tmp_path):
        runner = CliRunner()
        dataset = tmp_path / "seeds.smi"
        dataset.write_text(SEEDS)
        result = runner.invoke(main, [
            "init", "--dataset", str(dataset), "--sample", "phenols",
            "--out", str(tmp_path / "s.json"),
        ])
        assert result.exit_code != 0

    def test_builtin_sample(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "init", "--sample", "fragments",
            "--out", str(tmp_path / "s.json"),
        ])
        assert result.exit_code == 0, result.output

    def test_config_file_with_flag_override(self, tmp_path):
        runner = CliRunner()
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"population_size": 8, "rng_seed": 1}))
        path = _init(runner, tmp_path, extra=["--config", str(config)])
        session = Session.load(path)
        assert session.config.population_size == 20  # flag wins
        assert session.config.rng_seed == 7


class TestRunAndExport:
    def test_run_updates_file_and_prints_progress(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        result = runner.invoke(main, [
            "run", "--session", str(path), "--generations", "2",
        ])
        assert result.exit_code == 0, result.output
        assert result.output.count("gen ") == 2
        assert "completed 2 generations" in result.output
        assert len(Session.load(path).snapshots) == 3

    def test_export_csv_to_stdout(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        result = runner.invoke(main, ["export", "--session", str(path)])
        assert result.exit_code == 0
        header = result.output.splitlines()[0]
        assert header.startswith("generation,canonical_smiles")

    def test_json_export_is_lossless(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        runner.invoke(main, ["run", "--session", str(path),
                             "--generations", "1"])
        out = tmp_path / "export.json"
        result = runner.invoke(main, [
            "export", "--session", str(path), "--format", "json",
            "--out", str(out),
        ])
        assert result.exit_code == 0
        assert Session.from_dict(
            json.loads(out.read_text())
        ).export_json() == out.read_text()

    def test_identical_init_run_pipelines_are_bit_identical(self, tmp_path):
        runner = CliRunner()
        blobs = []
        for name in ("a", "b"):
            sub = tmp_path / name
            sub.mkdir()
            path = _init(runner, sub)
            runner.invoke(main, ["run", "--session", str(path),
                                 "--generations", "2"])
            data = json.loads(path.read_text())
            data["id"] = "fixed"
            blobs.append(json.dumps(data, sort_keys=True))
        assert blobs[0] == blobs[1]


class TestReport:
    def test_report_writes_csv_and_figures(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        runner.invoke(main, ["run", "--session", str(path),
                             "--generations", "1"])
        out_dir = tmp_path / "report"
        result = runner.invoke(main, [
            "report", "--session", str(path), "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        names = sorted(p.name for p in out_dir.iterdir())
        assert names == ["population.csv", "projection.png",
                         "score_history.png", "structures.png"]
        for png in out_dir.glob("*.png"):
            assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        csv = (out_dir / "population.csv").read_text()
        assert csv.startswith("generation,canonical_smiles")

    def test_report_for_a_specific_generation(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        result = runner.invoke(main, [
            "report", "--session", str(path), "--out-dir",
            str(tmp_path / "r0"), "--generation", "0",
        ])
        assert result.exit_code == 0, result.output

    def test_report_rejects_missing_generation(self, tmp_path):
        runner = CliRunner()
        path = _init(runner, tmp_path)
        result = runner.invoke(main, [
            "report", "--session", str(path),
            "--out-dir", str(tmp_path / "r"), "--generation", "9",
        ])
        assert result.exit_code != 0
