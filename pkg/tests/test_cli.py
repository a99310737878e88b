from importlib import resources

import numpy as np
import pytest

from haarlight.cli import main
from haarlight.haar2d import forward_transform, read_pyramid, write_pyramid
from haarlight.imageio import read_pfm, write_pfm
from haarlight.render import _thread_count
from haarlight.report import RunReport
from haarlight.scene import load_scene

TINY_SCENE = """\
camera.position = 0 0 3
camera.look_at = 0 0 0
camera.width = 6
camera.height = 6
camera.fov = 45
background = 0 0 0
env = procedural:sky
options.n = 5
options.D = 4
material.shiny.model = phong
material.shiny.diffuse = 0.2
material.shiny.specular = 0.6
material.shiny.exponent = 20
object.0.type = sphere
object.0.material = shiny
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def parse_text(out):
    return dict(line.split(": ", 1) for line in out.strip().splitlines())


@pytest.fixture
def tiny_scene(tmp_path):
    path = tmp_path / "tiny.scene"
    path.write_text(TINY_SCENE)
    return path


# -- transform / inverse ----------------------------------------------------------


def test_transform_inverse_round_trip(tmp_path, capsys, rng):
    img = rng.uniform(0, 4, (32, 32, 3))
    write_pfm(tmp_path / "in.pfm", img)
    code, out, _ = run(capsys, "transform", tmp_path / "in.pfm", tmp_path / "p.haar")
    assert code == 0 and float(parse_text(out)["results.parseval_residual"]) <= 1e-9
    assert run(capsys, "inverse", tmp_path / "p.haar", tmp_path / "out.pfm")[0] == 0
    assert np.max(np.abs(read_pfm(tmp_path / "out.pfm") - img)) <= 1e-6


def test_constant_image_has_zero_details(tmp_path, capsys):
    write_pfm(tmp_path / "c.pfm", np.full((16, 16, 3), 0.75))
    assert run(capsys, "transform", tmp_path / "c.pfm", tmp_path / "c.haar")[0] == 0
    pyr = read_pyramid(tmp_path / "c.haar")
    np.testing.assert_array_equal(pyr.scaling, 0.75)
    assert all(not g.any() for g in pyr.details)


def test_transform_levels_truncates(tmp_path, capsys, rng):
    write_pfm(tmp_path / "r.pfm", rng.uniform(0, 1, (16, 16, 1)))
    assert run(capsys, "transform", tmp_path / "r.pfm", tmp_path / "r.haar", "--levels", 2)[0] == 0
    pyr = read_pyramid(tmp_path / "r.haar")
    assert pyr.details[1].any() and not pyr.details[2].any() and not pyr.details[3].any()


def test_exit_codes(tmp_path, capsys):
    write_pfm(tmp_path / "odd.pfm", np.zeros((6, 6, 3)))
    assert run(capsys, "transform", tmp_path / "odd.pfm", tmp_path / "o.haar")[0] == 2
    code, _, err = run(capsys, "transform", tmp_path / "missing.pfm", tmp_path / "o.haar")
    assert code == 1 and "missing.pfm" in err
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "rotate", "fixture:phong:20:32", "--start-level", 5)[0] == 2
    assert run(capsys, "rotate", "fixture:phong:20:32", "--alpha", "nan")[0] == 2


# -- rotate -------------------------------------------------------------------------


def test_rotate_zero_angles_is_identity(tmp_path, capsys, rng):
    pyr = forward_transform(rng.standard_normal((3, 32, 32)))
    write_pyramid(tmp_path / "in.haar", pyr)
    code, _, _ = run(capsys, "rotate", tmp_path / "in.haar", tmp_path / "out.haar",
                     "--alpha", 0, "--beta", 0, "--gamma", 0)
    assert code == 0
    np.testing.assert_allclose(read_pyramid(tmp_path / "out.haar").to_vector(), pyr.to_vector(), atol=1e-10)


def test_rotate_verify_on_fixture(capsys):
    code, out, _ = run(capsys, "rotate", "fixture:phong:20:128", "--alpha", 33, "--beta", -71,
                       "--gamma", 12, "--start-level", 6, "--verify")
    assert code == 0 and float(parse_text(out)["results.psnr_db"]) >= 40.0


def test_rotate_spatial_mode_writes_oracle(tmp_path, capsys):
    code, out, _ = run(capsys, "rotate", "fixture:phong:20:32", tmp_path / "s.haar", "--mode", "spatial",
                       "--beta", 30, "--verify")
    assert code == 0 and (tmp_path / "s.haar").exists()
    assert float(parse_text(out)["results.psnr_db"]) > 30.0


def test_rotate_batch_is_seeded(capsys):
    args = ("rotate", "fixture:phong:20:64", "--random-trials", 3, "--seed", 4)
    first = parse_text(run(capsys, *args)[1])
    second = parse_text(run(capsys, *args)[1])
    assert first["results.mean_psnr_db"] == second["results.mean_psnr_db"]
    assert float(first["results.min_psnr_db"]) <= float(first["results.mean_psnr_db"])


# -- render ---------------------------------------------------------------------------


def test_render_is_deterministic(tmp_path, capsys, tiny_scene):
    a = parse_text(run(capsys, "render", tiny_scene, tmp_path / "a.pfm", "--K", 64)[1])
    b = parse_text(run(capsys, "render", tiny_scene, tmp_path / "b.pfm", "--K", 64, "--threads", 3)[1])
    assert a["results.image_sha256"] == b["results.image_sha256"]
    assert (tmp_path / "a.ppm").exists()
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), read_pfm(tmp_path / "b.pfm"))


def test_render_sweep_is_monotone(tmp_path, capsys, tiny_scene):
    code, out, _ = run(capsys, "render", tiny_scene, tmp_path / "v.pfm", "--sweep-k", "4,16,64,256")
    res = parse_text(out)
    assert code == 0 and res["results.sweep_monotone"] == "True"
    mses = [float(res[f"results.sweep_mse_K{k}"]) for k in (4, 16, 64, 256)]
    assert mses == sorted(mses, reverse=True)


def test_sample_scene_verify(tmp_path, capsys):
    with resources.as_file(resources.files("haarlight") / "data" / "sample.scene") as path:
        code, out, _ = run(capsys, "render", path, tmp_path / "s.pfm", "--K", 256, "--verify")
    assert code == 0 and float(parse_text(out)["results.verify_psnr_db"]) >= 40.0


def test_render_env_override_and_bad_options(tmp_path, capsys, tiny_scene):
    assert run(capsys, "render", tiny_scene, tmp_path / "e.pfm", "--env", "constant:0")[0] == 0
    assert not read_pfm(tmp_path / "e.pfm").any()
    assert run(capsys, "render", tiny_scene, tmp_path / "e.pfm", "--K", 0)[0] == 2
    assert run(capsys, "render", tiny_scene, tmp_path / "e.pfm", "--n", 5, "--start-level", 5)[0] == 2


def test_render_config_error_reports_line(tmp_path, capsys):
    path = tmp_path / "broken.scene"
    path.write_text("camera.width = 8\n\nobject.0.type = torus\n")
    code, _, err = run(capsys, "render", path, tmp_path / "x.pfm")
    assert code == 2 and "line 3" in err


def test_shipped_sample_scene_loads():
    with resources.as_file(resources.files("haarlight") / "data" / "sample.scene") as path:
        scene = load_scene(path)
    assert len(scene.spheres) == 1 and len(scene.meshes) == 1
    assert scene.options["n"] == 6 and scene.env.startswith("procedural:")


# -- compare -----------------------------------------------------------------------------


def test_compare_examples(tmp_path, capsys, rng):
    ref = rng.uniform(0.1, 0.9, (8, 8, 3))
    ref[0, 0] = 1.0
    write_pfm(tmp_path / "ref.pfm", ref)
    write_pfm(tmp_path / "off.pfm", ref + 0.01)
    res = parse_text(run(capsys, "compare", tmp_path / "ref.pfm", tmp_path / "ref.pfm")[1])
    assert (float(res["results.mse"]), float(res["results.psnr_db"])) == (0.0, 300.0)
    res = parse_text(run(capsys, "compare", tmp_path / "ref.pfm", tmp_path / "off.pfm")[1])
    # float32 storage perturbs the 0.01 offset slightly
    assert float(res["results.psnr_db"]) == pytest.approx(40.0, abs=1e-3)


def test_compare_background_only_warns(tmp_path, capsys):
    write_pfm(tmp_path / "bg.pfm", np.zeros((4, 4, 3)))
    code, out, _ = run(capsys, "compare", tmp_path / "bg.pfm", tmp_path / "bg.pfm")
    res = parse_text(out)
    assert code == 0 and float(res["results.mse"]) == 0.0 and "warnings.message" in res


def test_compare_size_mismatch(tmp_path, capsys):
    write_pfm(tmp_path / "a.pfm", np.zeros((4, 4, 3)))
    write_pfm(tmp_path / "b.pfm", np.zeros((4, 8, 3)))
    assert run(capsys, "compare", tmp_path / "a.pfm", tmp_path / "b.pfm")[0] == 2


# -- bench and reports --------------------------------------------------------------------


def test_bench_single_trial_csv(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "16,32", "--trials", 1, "--bench-csv", tmp_path / "b.csv")
    assert code == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "size,start_level,synthesis,fill_finer,seconds"
    assert len(lines) > 1 and "results.size_ratio_16->32" in parse_text(out)


def test_csv_and_text_agree(tmp_path, capsys):
    code, out, _ = run(capsys, "--csv", tmp_path / "r.csv", "rotate", "fixture:phong:20:32", "--beta", 45, "--verify")
    assert code == 0
    text = parse_text(out)
    rows = RunReport.parse_csv((tmp_path / "r.csv").read_text())
    shared = {f"{s}.{k}": v for (s, k), v in rows.items() if s != "command"}
    assert shared and all(text[key] == value for key, value in shared.items())


def test_thread_cap_env(monkeypatch):
    monkeypatch.setenv("HAARLIGHT_THREADS", "2")
    assert _thread_count(8) == 2
    monkeypatch.setenv("HAARLIGHT_THREADS", "junk")
    assert _thread_count(3) == 3
