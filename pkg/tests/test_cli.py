"""Tests for the moa-ffn command line."""

import pandas as pd
import pytest

from moa_ffn.cli import OUT_ENV, build_parser, main, resolve_config


class TestParser:
    def test_witness_defaults(self):
        args = build_parser().parse_args(["witness"])
        assert (args.suite, args.budget, args.tamper) == ("all", "quick", None)

    def test_witness_help_names_the_enforcing_budget(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["witness", "--help"])
        out = " ".join(capsys.readouterr().out.split())
        assert "only reports the representable" in out
        assert "'full' uses the fit.* config section" in out

    def test_repeatable_set(self):
        args = build_parser().parse_args(["train", "--set", "run.seed=1", "--set", "run.jobs=2"])
        assert args.overrides == ["run.seed=1", "run.jobs=2"]

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_ablate_needs_grid(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["ablate"])


class TestResolveConfig:
    def test_flags_win_over_set(self, monkeypatch):
        monkeypatch.delenv(OUT_ENV, raising=False)
        args = build_parser().parse_args(
            ["train", "--set", "run.seed=1", "--seed", "9", "--jobs", "3", "--out", "here", "--name", "x"]
        )
        config = resolve_config(args)
        assert config.seed == 9
        assert config.get("train.seeds") == "9"
        assert config.jobs == 3
        assert config.output_dir == "here"
        assert config.name == "x"

    def test_environment_wins_over_out(self, monkeypatch):
        monkeypatch.setenv(OUT_ENV, "from-env")
        args = build_parser().parse_args(["bench", "--out", "from-flag"])
        assert resolve_config(args).output_dir == "from-env"


class TestMain:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "none.cfg")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_override(self, tmp_path):
        assert main(["train", "--set", "model.colour=blue", "--out", str(tmp_path)]) == 2

    def test_grad_check(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUT_ENV, raising=False)
        code = main(["grad-check", "--d-model", "4", "--points", "3", "--out", str(tmp_path)])
        assert code == 0
        table = pd.read_csv(tmp_path / "grad-check" / "reports" / "gradcheck.csv")
        assert len(table) == 10

    def test_tampered_witness_fails(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUT_ENV, raising=False)
        argv = ["witness", "theorem1", "--tamper", "relu2=relu", "--budget", "full"]
        for item in (
            "fit.restarts=1",
            "fit.steps=5",
            "fit.polish=false",
            "fit.points_1d=21",
            "fit.points_2d=9",
            "grid.points_per_axis=41",
        ):
            argv += ["--set", item]
        assert main(argv + ["--out", str(tmp_path)]) == 4
        report = pd.read_csv(tmp_path / "witness" / "reports" / "witness_report.csv")
        failed = report[report["passed"] == False]  # noqa: E712
        assert "TLA_I" in set(failed["target"])
