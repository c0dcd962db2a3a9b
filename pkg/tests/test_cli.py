import json

import numpy as np
import pytest

from lctlab.cli import main
from lctlab.dataset import read_array, write_array
from lctlab.phantom import PhantomSpec, to_json as phantom_json

SMALL_GEOM = {
    "geometry": {
        "T": 5,
        "delta_theta_deg": 36.5,
        "theta0_deg": 0.0,
        "base": {
            "l_mm": 15.0, "h_mm": 40.0, "traj_len_mm": 20.0, "n_src": 101,
            "det_cells": 321, "det_cell_size_mm": 0.26, "det_offset_mm": 0.0,
        },
    },
    "grid": {"n": 48, "pixel_size_mm": 6.0 / 48},
    "phantom": {"name": "disk", "support_radius_mm": 2.4, "n_ellipses": 3},
}


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL_GEOM))
    return str(p)


def test_emit_config(capsys, cfg_file, tmp_path):
    rc = main(["bpf", "--config", cfg_file, "--out", str(tmp_path / "o"),
               "--emit-config"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["grid"]["n"] == 48
    assert doc["geometry"]["base"]["h_mm"] == 40.0


def test_flags_override_config(capsys, cfg_file, tmp_path):
    rc = main(["bpf", "--config", cfg_file, "--out", str(tmp_path / "o"),
               "--grid", "32", "--emit-config"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["grid"]["n"] == 32


def test_phantom_command(tmp_path, cfg_file):
    out = tmp_path / "ph"
    assert main(["phantom", "--config", cfg_file, "--out", str(out)]) == 0
    assert (out / "phantom.json").exists()
    assert (out / "phantom.lct").exists()
    assert (out / "phantom.png").exists()
    assert (out / "resolved_config.json").exists()


def test_phantom_unknown_name_exit3(tmp_path, capsys):
    rc = main(["phantom", "--out", str(tmp_path / "x"),
               "--phantom-name", "bogus"])
    assert rc == 3
    err = capsys.readouterr().err
    assert err.startswith("error: 3:") and "\n" not in err.strip()


def test_simulate_command(tmp_path, cfg_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg_file, "--out", str(out)]) == 0
    for i in range(5):
        arr, sidecar = read_array(out / f"sino_seg{i}.lct")
        assert arr.shape == (101, 321)
        assert "segment" in sidecar


def test_bpf_zero_phantom(tmp_path, cfg_file):
    empty = tmp_path / "empty.json"
    empty.write_text(phantom_json(PhantomSpec((), 2.4)))
    cfg = json.loads((json.dumps(SMALL_GEOM)))
    cfg["phantom"]["file"] = str(empty)
    cfgp = tmp_path / "cfg2.json"
    cfgp.write_text(json.dumps(cfg))
    out = tmp_path / "bpf0"
    assert main(["bpf", "--config", str(cfgp), "--out", str(out)]) == 0
    rec, _ = read_array(out / "recon.lct")
    assert not rec.any()
    assert (out / "recon.pgm").exists()
    assert (out / "recon.png").exists()
    assert (out / "metrics.json").exists()


def test_bpf_threads_do_not_change_output(tmp_path, cfg_file):
    outs = []
    for name, thr in (("t1", "1"), ("t2", "2")):
        out = tmp_path / name
        assert main(["bpf", "--config", cfg_file, "--out", str(out),
                     "--threads", thr]) == 0
        outs.append((out / "recon.lct").read_bytes())
    assert outs[0] == outs[1]


def test_dataset_determinism_cli(tmp_path, cfg_file):
    args = ["dataset", "--config", cfg_file, "--kind", "osnet",
            "--count", "10", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "d1")]) == 0
    assert main(args + ["--out", str(tmp_path / "d2")]) == 0
    m1 = (tmp_path / "d1" / "manifest.ndjson").read_bytes()
    m2 = (tmp_path / "d2" / "manifest.ndjson").read_bytes()
    assert m1 == m2
    import lctlab.dataset as ds

    man = ds.read_manifest(tmp_path / "d1" / "manifest.ndjson")
    for e in man.entries:
        assert ((tmp_path / "d1" / e.input_ref).read_bytes()
                == (tmp_path / "d2" / e.input_ref).read_bytes())
        assert ((tmp_path / "d1" / e.label_ref).read_bytes()
                == (tmp_path / "d2" / e.label_ref).read_bytes())


def test_dataset_refuses_nonempty_out(tmp_path, cfg_file):
    out = tmp_path / "d3"
    out.mkdir()
    (out / "junk.txt").write_text("x")
    rc = main(["dataset", "--config", cfg_file, "--kind", "osnet",
               "--count", "10", "--seed", "1", "--out", str(out)])
    assert rc == 3


def test_metrics_command(tmp_path, capsys):
    rng = np.random.Generator(np.random.Philox(0))
    a = rng.random((32, 32))
    write_array(tmp_path / "a.lct", a)
    write_array(tmp_path / "b.lct", a + 0.1)
    rc = main(["metrics", "--image", str(tmp_path / "a.lct"),
               "--reference", str(tmp_path / "b.lct"),
               "--data-range", "1.0", "--out", str(tmp_path / "m")])
    assert rc == 0
    doc = json.loads((tmp_path / "m" / "metrics.json").read_text())
    assert abs(doc["rmse"] - 0.1) < 1e-9
    assert abs(doc["psnr_db"] - 20.0) < 1e-9


def test_profile_command(tmp_path):
    img = np.arange(300 * 300, dtype=float).reshape(300, 300)
    write_array(tmp_path / "img.lct", img)
    out = tmp_path / "p"
    rc = main(["profile", "--image", str(tmp_path / "img.lct"),
               "--axis", "row", "--index", "150",
               "--start", "100", "--stop", "200", "--out", str(out)])
    assert rc == 0
    lines = (out / "profile.csv").read_text().splitlines()
    assert lines[0] == "index,value"
    assert len(lines) == 101
    first = lines[1].split(",")
    assert first[0] == "100" and float(first[1]) == img[150, 100]
    assert (out / "profile.png").exists()


def test_profile_bounds_exit3(tmp_path, capsys):
    img = np.zeros((10, 10))
    write_array(tmp_path / "img.lct", img)
    rc = main(["profile", "--image", str(tmp_path / "img.lct"),
               "--index", "99", "--out", str(tmp_path / "p2")])
    assert rc == 3


def test_sweep_command(tmp_path, cfg_file):
    out = tmp_path / "sw"
    rc = main(["sweep", "--config", cfg_file, "--axis", "n_src",
               "--values", "51,101", "--out", str(out)])
    assert rc == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "n_src,psnr_db,ssim,rmse"
    assert len(rows) == 3
    assert (out / "sweep.png").exists()
    assert (out / "resolved_config.json").exists()


def test_usage_error_exit2():
    with pytest.raises(SystemExit) as e:
        main(["not-a-command"])
    assert e.value.code == 2
