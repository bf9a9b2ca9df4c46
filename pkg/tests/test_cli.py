import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from hsunmix import SceneSpec, evaluate, generate_scene, sample_library
from hsunmix.cli import derive_seed, main
from hsunmix.cubeio import file_digest, read_cube, read_manifest, read_matrix_csv, write_matrix_csv

SCENE_CFG = """\
library = sample
grid_rows = 16
grid_cols = 16
block_size = 4
lowpass_window = 3
purity_threshold = 0.8
snr_db = 30
seed = 11
"""

SOLVER_CFG = """\
layer_count = 2
max_iters = 40
seed = 5
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "scene.cfg"
    spec.write_text(SCENE_CFG)
    solver = root / "solver.cfg"
    solver.write_text(SOLVER_CFG)
    scene_dir = root / "scene"
    assert run("synth", spec, "--out-dir", scene_dir) == 0
    est_dir = root / "est"
    assert run("unmix", scene_dir / "observations", "-p", 6,
               "--config", solver, "--out-dir", est_dir) == 0
    return root


class TestSynth:
    def test_writes_all_artifacts(self, workspace):
        scene_dir = workspace / "scene"
        for name in ("observations.f64", "observations.json", "endmembers_true.csv",
                     "abundances_true.f64", "abundances_true.json", "manifest.json"):
            assert (scene_dir / name).exists()

    def test_artifacts_reload_to_the_generated_scene(self, workspace):
        scene = generate_scene(sample_library(),
                               SceneSpec(grid=(16, 16), block_size=4, lowpass_window=3,
                                         snr_db=30.0, seed=11))
        observations, header = read_cube(workspace / "scene" / "observations")
        abundances, _ = read_cube(workspace / "scene" / "abundances_true")
        endmembers, names, _ = read_matrix_csv(workspace / "scene" / "endmembers_true.csv")
        assert np.array_equal(observations, scene.observations)
        assert np.array_equal(abundances, scene.abundances)
        assert np.array_equal(endmembers, scene.endmembers)
        assert tuple(names) == scene.names
        assert (header["rows"], header["cols"]) == (16, 16)

    def test_rerun_is_byte_identical(self, workspace):
        again = workspace / "scene_again"
        assert run("synth", workspace / "scene.cfg", "--out-dir", again) == 0
        for name in ("observations.f64", "observations.json", "endmembers_true.csv",
                     "abundances_true.f64", "abundances_true.json", "manifest.json"):
            assert file_digest(again / name) == file_digest(workspace / "scene" / name), name

    def test_invalid_purity_threshold_fails_with_message(self, tmp_path, caplog):
        spec = tmp_path / "bad.cfg"
        spec.write_text(SCENE_CFG.replace("purity_threshold = 0.8", "purity_threshold = 0"))
        assert run("synth", spec, "--out-dir", tmp_path / "out") == 1
        assert "purity_threshold" in caplog.text

    def test_unknown_key_fails(self, tmp_path, caplog):
        spec = tmp_path / "bad.cfg"
        spec.write_text(SCENE_CFG + "mystery = 1\n")
        assert run("synth", spec, "--out-dir", tmp_path / "out") == 1
        assert "mystery" in caplog.text


class TestUnmix:
    def test_writes_all_artifacts(self, workspace):
        est = workspace / "est"
        expected = ["endmembers.csv", "abundances.f64", "abundances.json",
                    "cost_trace.csv", "layer_factor_01.csv", "layer_factor_02.csv",
                    "manifest.json"]
        for name in expected:
            assert (est / name).exists()
        manifest = read_manifest(est / "manifest.json")
        assert manifest["config"]["method"] == "mlnmf"
        assert len(manifest["layers"]) == 2

    def test_exported_abundances_are_floored(self, workspace):
        abundances, _ = read_cube(workspace / "est" / "abundances")
        tiny = (abundances > 0) & (abundances < 1e-9)
        assert not tiny.any()

    def test_vca_endmembers_are_input_columns(self, workspace):
        out = workspace / "est_vca"
        assert run("unmix", workspace / "scene" / "observations", "-p", 6,
                   "--method", "vca", "--out-dir", out) == 0
        endmembers, _, _ = read_matrix_csv(out / "endmembers.csv")
        observations, _ = read_cube(workspace / "scene" / "observations")
        indices = read_manifest(out / "manifest.json")["vca_pixel_indices"]
        assert np.array_equal(endmembers, observations[:, indices])

    def test_l12nmf_aliases_single_layer_mlnmf(self, workspace, tmp_path):
        config = tmp_path / "alias.cfg"
        config.write_text("layer_count = 1\nalpha = 0\nmax_iters = 40\nseed = 5\n")
        out_a = tmp_path / "as_mlnmf"
        out_b = tmp_path / "as_l12nmf"
        cube = workspace / "scene" / "observations"
        assert run("unmix", cube, "-p", 6, "--method", "mlnmf",
                   "--config", config, "--out-dir", out_a) == 0
        assert run("unmix", cube, "-p", 6, "--method", "l12nmf",
                   "--config", config, "--out-dir", out_b) == 0
        for name in ("endmembers.csv", "abundances.f64", "cost_trace.csv",
                     "layer_factor_01.csv"):
            assert file_digest(out_a / name) == file_digest(out_b / name), name

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        out = tmp_path / "est_again"
        assert run("unmix", workspace / "scene" / "observations", "-p", 6,
                   "--config", workspace / "solver.cfg", "--out-dir", out) == 0
        for name in ("endmembers.csv", "abundances.f64", "abundances.json",
                     "cost_trace.csv", "layer_factor_01.csv", "layer_factor_02.csv"):
            assert file_digest(out / name) == file_digest(workspace / "est" / name), name

    def test_missing_cube_fails(self, tmp_path, caplog):
        assert run("unmix", tmp_path / "nope", "-p", 3, "--out-dir", tmp_path / "o") == 1


class TestEval:
    def test_truth_against_itself_is_zero(self, workspace, tmp_path):
        scene_dir = workspace / "scene"
        est = tmp_path / "perfect"
        est.mkdir()
        endmembers, names, _ = read_matrix_csv(scene_dir / "endmembers_true.csv")
        write_matrix_csv(est / "endmembers.csv", endmembers, names)
        shutil.copy(scene_dir / "abundances_true.f64", est / "abundances.f64")
        shutil.copy(scene_dir / "abundances_true.json", est / "abundances.json")
        out = tmp_path / "report"
        assert run("eval", est, "--truth-dir", scene_dir, "--out-dir", out) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["rms_sad"] == 0.0
        assert report["rms_aad"] == 0.0

    def test_permuted_estimate_gives_same_report(self, workspace, tmp_path):
        scene_dir = workspace / "scene"
        order = [3, 0, 5, 1, 4, 2]
        est = tmp_path / "permuted"
        est.mkdir()
        endmembers, names, _ = read_matrix_csv(scene_dir / "endmembers_true.csv")
        write_matrix_csv(est / "endmembers.csv", endmembers[:, order],
                         [f"endmember_{j}" for j in range(6)])
        abundances, header = read_cube(scene_dir / "abundances_true")
        from hsunmix.cubeio import write_cube

        write_cube(est / "abundances", abundances[order, :],
                   header.get("rows"), header.get("cols"))
        out = tmp_path / "report"
        assert run("eval", est, "--truth-dir", scene_dir, "--out-dir", out,
                   "--no-figures") == 0
        report = json.loads((out / "report.json").read_text())
        assert report["rms_sad"] == 0.0
        assert report["rms_aad"] == 0.0
        assert [report["permutation"][j] for j in range(6)] == order

    def test_report_matches_library_composition(self, workspace, tmp_path):
        scene_dir = workspace / "scene"
        est_dir = workspace / "est"
        out = tmp_path / "report"
        assert run("eval", est_dir, "--truth-dir", scene_dir, "--out-dir", out) == 0
        report = json.loads((out / "report.json").read_text())

        ref_e, _, _ = read_matrix_csv(scene_dir / "endmembers_true.csv")
        est_e, _, _ = read_matrix_csv(est_dir / "endmembers.csv")
        ref_a, _ = read_cube(scene_dir / "abundances_true")
        est_a, _ = read_cube(est_dir / "abundances")
        expected = evaluate(ref_e, est_e, ref_a, est_a)
        assert report["rms_sad"] == pytest.approx(expected.rms_sad, abs=1e-12)
        assert report["rms_aad"] == pytest.approx(expected.rms_aad, abs=1e-12)
        assert (out / "report.txt").read_text().splitlines()[-1].startswith("mlnmf ")

    def test_reference_csv_mode_skips_abundances(self, workspace, tmp_path):
        out = tmp_path / "report"
        assert run("eval", workspace / "est",
                   "--reference-csv", workspace / "scene" / "endmembers_true.csv",
                   "--out-dir", out, "--no-figures") == 0
        report = json.loads((out / "report.json").read_text())
        assert report["rms_aad"] is None
        assert report["rms_sad"] > 0.0

    def test_figures_rendered_alongside_report(self, workspace, tmp_path):
        out = tmp_path / "report"
        assert run("eval", workspace / "est", "--truth-dir", workspace / "scene",
                   "--out-dir", out) == 0
        assert (out / "signatures.png").stat().st_size > 0
        assert (out / "abundances.png").stat().st_size > 0

    def test_shape_mismatch_fails(self, workspace, tmp_path, caplog):
        est = tmp_path / "bad"
        est.mkdir()
        endmembers, names, _ = read_matrix_csv(workspace / "scene" / "endmembers_true.csv")
        write_matrix_csv(est / "endmembers.csv", endmembers[:, :3], names[:3])
        assert run("eval", est, "--truth-dir", workspace / "scene",
                   "--out-dir", tmp_path / "out") == 1
        assert "does not match" in caplog.text


class TestSweep:
    def test_row_count_columns_and_figures(self, workspace, tmp_path):
        out = tmp_path / "sweep"
        assert run("sweep", workspace / "scene.cfg", "--snr", "20,35",
                   "--methods", "vca,l12nmf", "--repeats", "2",
                   "--config", workspace / "solver.cfg", "--out-dir", out) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "snr_db,method,repeat,rms_sad,rms_aad,seconds,error"
        assert len(lines) == 1 + 2 * 2 * 2
        assert (out / "rms_sad_vs_snr.png").stat().st_size > 0
        assert (out / "rms_aad_vs_snr.png").stat().st_size > 0

    def test_rerun_identical_up_to_seconds(self, workspace, tmp_path):
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            assert run("sweep", workspace / "scene.cfg", "--snr", "25",
                       "--methods", "vca", "--repeats", "2",
                       "--out-dir", out, "--no-figures") == 0
            rows = (out / "sweep.csv").read_text().splitlines()
            outs.append([",".join(r.split(",")[:5]) for r in rows])
        assert outs[0] == outs[1]

    def test_failed_cells_recorded_and_exit_nonzero(self, tmp_path):
        spec = tmp_path / "impossible.cfg"
        # One block cannot host six endmembers: every cell fails.
        spec.write_text("grid_rows = 8\ngrid_cols = 8\nblock_size = 8\n")
        out = tmp_path / "sweep"
        assert run("sweep", spec, "--snr", "25", "--methods", "vca",
                   "--repeats", "1", "--out-dir", out, "--no-figures") == 1
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 2
        assert "ValueError" in lines[1]
        assert "nan" in lines[1]

    def test_seed_derivation_is_stable(self):
        assert derive_seed(0, 25.0, "vca", 1, "scene") == derive_seed(0, 25.0, "vca", 1, "scene")
        assert derive_seed(0, 25.0, "vca", 1, "scene") != derive_seed(0, 25.0, "vca", 2, "scene")
        assert derive_seed(0, 25.0, "vca", 1, "scene") != derive_seed(0, 25.0, "vca", 1, "fit")

    def test_unknown_method_rejected(self, workspace, tmp_path, caplog):
        assert run("sweep", workspace / "scene.cfg", "--snr", "25",
                   "--methods", "mystery", "--out-dir", tmp_path / "o") == 1
        assert "mystery" in caplog.text
