import json

import pytest

from src.cskd.cli import main, parse_guidance_flag
from src.cskd.cli.commands import build_parser, resolve_config
from src.cskd.errors import ConfigurationError
from src.cskd.guidance.storage import save_condensed
from src.cskd.models.checkpoint import save_checkpoint

from tests.toys import make_toy_set, toy_run_config, write_fake_run


def _printed_config(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


class TestGuidanceFlag:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("none", {"guidance.mode": "none"}),
            ("condensed:sets/spc10", {"guidance.mode": "condensed", "guidance.path": "sets/spc10"}),
            ("fewshot:5", {"guidance.mode": "fewshot", "guidance.spc": 5}),
        ],
    )
    def test_valid(self, text, expected):
        assert parse_guidance_flag(text) == expected

    @pytest.mark.parametrize("text", ["", "condensed", "condensed:", "fewshot:many", "real:4", "none:x"])
    def test_invalid(self, text):
        with pytest.raises(ConfigurationError):
            parse_guidance_flag(text)


class TestResolveConfig:
    def test_precedence(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"seed": 1, "mode": "plus_cs", "kd": {"epochs": 7, "temperature": 2.0}}))
        args = build_parser().parse_args(
            ["distill", "--config", str(config), "--seed", "2", "--epochs", "9", "--set", "kd.epochs=11"]
        )
        cfg = resolve_config(args)
        assert cfg.seed == 2
        assert cfg.mode == "plus_cs"
        assert cfg.kd.epochs == 11
        assert cfg.kd.temperature == 2.0

    def test_guidance_flag_sets_nested_keys(self):
        args = build_parser().parse_args(["distill", "--seed", "0", "--guidance", "condensed:sets/a"])
        cfg = resolve_config(args)
        assert cfg.guidance.mode == "condensed" and cfg.guidance.path == "sets/a"
        assert cfg.uses_guidance
        args = build_parser().parse_args(["distill", "--seed", "0", "--mode", "datafree", "--guidance", "condensed:sets/a"])
        datafree = resolve_config(args)
        assert not datafree.uses_guidance

    def test_unknown_key(self):
        args = build_parser().parse_args(["distill", "--set", "kd.nonexistent=1"])
        with pytest.raises(ConfigurationError):
            resolve_config(args)

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            resolve_config(build_parser().parse_args(["distill", "--config", str(tmp_path / "absent.json")]))
        broken = tmp_path / "broken.json"
        broken.write_text("{seed: 1")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            resolve_config(build_parser().parse_args(["distill", "--config", str(broken)]))


def test_print_config(capsys, tmp_path):
    tree = _printed_config(
        capsys,
        ["distill", "--print-config", "--seed", "3", "--out", str(tmp_path), "--mode", "star",
         "--set", "inversion.weights.fa=0.25", "--set", "student.arch=\"mlp\""],
    )
    assert tree["seed"] == 3 and tree["mode"] == "star"
    assert tree["inversion"]["weights"]["fa"] == 0.25
    assert tree["student"]["arch"] == "mlp"
    assert tree["harness"]["out_dir"] == str(tmp_path)


def test_dry_run_validates_without_running(capsys, tmp_path):
    argv = ["distill", "--dry-run", "--seed", "0", "--teacher", str(tmp_path / "teacher"), "--out", str(tmp_path)]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert first.startswith("config ok: distill ")
    assert main(argv) == 0
    assert capsys.readouterr().out == first
    assert list(tmp_path.iterdir()) == []


@pytest.mark.parametrize(
    "argv",
    [
        ["distill", "--dry-run", "--teacher", "t"],
        ["distill", "--dry-run", "--seed", "0"],
        ["distill", "--dry-run", "--seed", "0", "--teacher", "t", "--guidance", "fewshot:x"],
        ["condense", "--dry-run", "--seed", "0"],
        ["condense", "--seed", "0", "--spc", "0"],
        ["distill", "--seed", "0", "--set", "mode=\"hybrid\""],
    ],
)
def test_configuration_errors_exit_nonzero(argv):
    assert main(argv) == 1


def test_missing_artifacts_exit_nonzero(tmp_path):
    missing = str(tmp_path / "nothing")
    assert main(["train-teacher", "--seed", "0", "--data-root", missing, "--out", str(tmp_path)]) == 1
    assert main(["distill", "--seed", "0", "--teacher", missing, "--data-root", missing, "--out", str(tmp_path)]) == 1


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["distill", "--mode", "hybrid"])
    assert info.value.code == 2


def test_report_ablation_from_run_directories(capsys, tmp_path):
    base = toy_run_config(tmp_path)
    run_dir = write_fake_run(tmp_path / "runs" / "a", base, [0.25, 0.5])
    report_dir = tmp_path / "report"
    assert main(["report", "--seed", "0", "--report-out", str(report_dir), "ablation", str(run_dir)]) == 0
    assert "class_specific" in capsys.readouterr().out
    assert (report_dir / "ablation.csv").is_file()


def test_report_projection_of_stored_sets(capsys, tmp_path, toy_teacher):
    save_checkpoint(toy_teacher, tmp_path / "teacher", seed=0)
    save_condensed(make_toy_set(per_class=4), tmp_path / "real")
    save_condensed(make_toy_set(per_class=2, seed=5, source="condensed"), tmp_path / "spc2")
    argv = [
        "report", "--seed", "0", "--device", "cpu", "--report-out", str(tmp_path / "report"),
        "tsne", str(tmp_path / "teacher"), str(tmp_path / "real"), str(tmp_path / "spc2"), "--method", "pca",
    ]
    assert main(argv) == 0
    assert "pca projection of 18 points" in capsys.readouterr().out
    rows = (tmp_path / "report" / "pca.csv").read_text().splitlines()
    assert len(rows) == 19
    assert {row.rsplit(",", 1)[1] for row in rows[1:]} == {"real:real", "condensed:spc2"}


def test_report_sample_grids_of_stored_sets(capsys, tmp_path):
    save_condensed(make_toy_set(per_class=5, source="synthetic"), tmp_path / "synthetic")
    save_condensed(make_toy_set(per_class=2, seed=5, source="condensed"), tmp_path / "spc2")
    argv = [
        "report", "--seed", "0", "--report-out", str(tmp_path / "report"),
        "samples", str(tmp_path / "synthetic"), str(tmp_path / "spc2"), "--per-class", "4",
    ]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "synthetic set of 15 records" in out and "condensed set of 6 records" in out
    assert (tmp_path / "report" / "synthetic.png").is_file()
    assert (tmp_path / "report" / "spc2.png").is_file()
    bad = [
        "report", "--seed", "0", "--report-out", str(tmp_path / "bad"),
        "samples", str(tmp_path / "spc2"), "--per-class", "0",
    ]
    assert main(bad) == 1
    assert not (tmp_path / "bad").exists()
