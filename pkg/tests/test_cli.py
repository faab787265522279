"""End-to-end checks of the command-line interface."""

import json

import numpy as np
import pytest

from ditvr.cli import build_parser, main
from ditvr.flow import read_flo
from ditvr.frame_io import read_frame
from ditvr.metrics import read_report_csv


def run(argv):
    assert main(argv) == 0


def gen_clip(folder, frames=2, size="16x16", extra=()):
    run(["gen", "--out", str(folder), "--frames", str(frames), "--size", size,
         "--pattern", "checker", "--du", "1", "--dv", "0", *extra])


class TestGen:
    def test_writes_frames_flows_and_spec(self, tmp_path):
        gen_clip(tmp_path / "clip", frames=3)
        names = sorted(p.name for p in (tmp_path / "clip").iterdir())
        assert names == [
            "flow_bwd_000.flo", "flow_bwd_001.flo",
            "flow_fwd_000.flo", "flow_fwd_001.flo",
            "frame_000.ppm", "frame_001.ppm", "frame_002.ppm",
            "spec.json",
        ]
        meta = json.loads((tmp_path / "clip" / "spec.json").read_text())
        assert meta["pattern"] == "checker" and meta["num_frames"] == 3
        fr = read_frame(tmp_path / "clip" / "frame_000.ppm")
        assert fr.shape[1:] == (16, 16)
        fl = read_flo(tmp_path / "clip" / "flow_fwd_000.flo")
        assert (fl.height, fl.width) == (16, 16)
        np.testing.assert_allclose(fl.du, 1.0)

    def test_png_variant(self, tmp_path):
        gen_clip(tmp_path / "clip", extra=["--png"])
        assert (tmp_path / "clip" / "frame_000.png").is_file()

    def test_bad_size_exits(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["gen", "--out", str(tmp_path), "--size", "64by64"])

    def test_out_root_env_prefixes_relative_paths(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DITVR_OUT_ROOT", str(tmp_path))
        gen_clip("clip")
        assert (tmp_path / "clip" / "frame_000.ppm").is_file()

    def test_absolute_path_ignores_out_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DITVR_OUT_ROOT", str(tmp_path / "elsewhere"))
        gen_clip(tmp_path / "clip")
        assert (tmp_path / "clip" / "frame_000.ppm").is_file()


class TestFlow:
    def test_writes_flo_between_frames(self, tmp_path, capsys):
        gen_clip(tmp_path / "clip", size="32x32")
        out = tmp_path / "shift.flo"
        run(["flow", str(tmp_path / "clip" / "frame_001.ppm"),
             str(tmp_path / "clip" / "frame_000.ppm"),
             "--out", str(out), "--block", "8", "--radius", "2"])
        fl = read_flo(out)
        assert (fl.height, fl.width) == (32, 32)
        assert "mean |flow|" in capsys.readouterr().out


class TestMetrics:
    def test_identical_folders_perfect_scores(self, tmp_path, capsys):
        gen_clip(tmp_path / "clip")
        run(["metrics", str(tmp_path / "clip"), str(tmp_path / "clip"),
             "--flows", str(tmp_path / "clip")])
        out = capsys.readouterr().out
        assert "PSNR inf" in out
        assert "SSIM 1.000000" in out
        assert "WE_e3 0.000000" in out
        assert "FSim 1.000000" in out

    def test_csv_report(self, tmp_path):
        gen_clip(tmp_path / "clip")
        csv_path = tmp_path / "scores.csv"
        run(["metrics", str(tmp_path / "clip"), str(tmp_path / "clip"),
             "--flows", str(tmp_path / "clip"), "--csv", str(csv_path),
             "--sequence", "myclip", "--task", "denoise50"])
        rows = read_report_csv(csv_path)
        assert len(rows) == 1
        assert rows[0]["sequence"] == "myclip"
        assert rows[0]["method"] == "external"
        assert rows[0]["SSIM"] == 1.0

    def test_frame_count_mismatch_exits(self, tmp_path):
        gen_clip(tmp_path / "a", frames=2)
        gen_clip(tmp_path / "b", frames=3)
        with pytest.raises(SystemExit):
            main(["metrics", str(tmp_path / "a"), str(tmp_path / "b")])

    def test_empty_folder_exits(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(SystemExit):
            main(["metrics", str(tmp_path / "empty"), str(tmp_path / "empty")])


def restore_flags(out, steps="1"):
    return ["restore", "--task", "denoise50", "--frames", "2", "--size", "16x16",
            "--pattern", "checker", "--steps", steps, "--out", str(out)]


class TestRestore:
    def test_synthetic_benchmark_writes_reports(self, tmp_path, capsys):
        run(restore_flags(tmp_path / "run"))
        assert (tmp_path / "run" / "report.csv").is_file()
        assert (tmp_path / "run" / "manifest.json").is_file()
        assert "PSNR" in capsys.readouterr().out

    def test_config_file_overrides_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"steps": 1}))
        run(["--config", str(cfg)] + restore_flags(tmp_path / "run", steps="9"))
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["config"]["num_steps"] == 1

    def test_unknown_config_key_exits(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stepz": 1}))
        with pytest.raises(SystemExit):
            main(["--config", str(cfg)] + restore_flags(tmp_path / "run"))

    def test_frame_folder_input(self, tmp_path):
        gen_clip(tmp_path / "clip")
        run(["restore", "--in", str(tmp_path / "clip"),
             "--flows", str(tmp_path / "clip"),
             "--task", "denoise50", "--steps", "1",
             "--out", str(tmp_path / "restored")])
        names = sorted(p.name for p in (tmp_path / "restored").iterdir())
        assert names == ["restored_000.ppm", "restored_001.ppm"]
        fr = read_frame(tmp_path / "restored" / "restored_000.ppm")
        assert fr.shape[1:] == (16, 16)


class TestAblate:
    def test_grid_prints_all_methods(self, tmp_path, capsys):
        run(["ablate", "--task", "denoise50", "--frames", "2", "--size", "16x16",
             "--pattern", "checker", "--steps", "1", "--out", str(tmp_path / "grid")])
        out = capsys.readouterr().out
        for method in ("per-frame", "warping", "tattn", "tattn+stnc1",
                       "tattn+stnc3", "ditvr"):
            assert method in out
        rows = read_report_csv(tmp_path / "grid" / "report.csv")
        assert len(rows) == 6


class TestVital:
    def test_layer_scores_printed_and_saved(self, tmp_path, capsys):
        run(["vital", "--task", "denoise50", "--frames", "2", "--size", "16x16",
             "--pattern", "checker", "--steps", "1", "--metric", "we",
             "--out", str(tmp_path / "vital")])
        out = capsys.readouterr().out
        assert "layer 0*" in out  # default model marks layer 0 as vital
        assert (tmp_path / "vital" / "vital.csv").is_file()


class TestParser:
    def test_no_command_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--help"])
        text = capsys.readouterr().out
        for name in ("gen", "flow", "restore", "ablate", "vital", "metrics"):
            assert name in text
