import subprocess
import sys

import numpy as np

from pdtomo import io
from pdtomo.cli import main

FAST = ["--solver.outer_iters", "3", "--solver.lsqr_iters", "20"]


def test_phantom_and_project(tmp_path, capsys):
    assert main(["phantom", "--model", "B", "--size", "32", "--out", str(tmp_path / "ph")]) == 0
    u = io.read_image_csv(tmp_path / "ph" / "u_true.csv")
    mask = io.read_matrix_csv(tmp_path / "ph" / "mask_true.csv")
    assert u.grid.nx == 32 and set(np.unique(mask)) == {0.0, 1.0}
    assert (tmp_path / "ph" / "u_true.pgm").read_bytes().startswith(b"P5")
    args = ["project", "--image", str(tmp_path / "ph" / "u_true.csv"), "--angles", "5",
            "--arc", "2*pi/3", "--snr-db", "20", "--out", str(tmp_path / "s.csv"),
            "--dump-operator", str(tmp_path / "w.csv")]
    assert main(args) == 0
    s = io.read_sinogram_csv(tmp_path / "s.csv")
    assert s.geometry.n_rows == 5 * 32 and s.geometry.kernel.value == "line"
    assert (tmp_path / "w.csv").read_text().startswith("row,col,weight")
    assert "160 rays" in capsys.readouterr().out


def test_reconstruct_from_flags_and_file(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("phantom.size = 32\ngeometry.angles = 8\nnoise.snr_db = 20\n")
    out = tmp_path / "rec"
    assert main(["reconstruct", "--config", str(cfgfile), "--geometry.angles", "6", "--out", str(out)] + FAST) == 0
    text = capsys.readouterr().out
    assert "SR=" in text and "baseline_SR=" in text
    sino = io.read_sinogram_csv(out / "sinogram.csv")
    assert len(sino.geometry.angles) == 6  # the flag wins over the file
    assert "geometry.angles = 6" in (out / "manifest.json").read_text()


def test_reconstruct_measured_sinogram(tmp_path, capsys):
    main(["phantom", "--model", "A", "--size", "32", "--out", str(tmp_path / "ph")])
    main(["project", "--image", str(tmp_path / "ph" / "u_true.csv"), "--angles", "20",
          "--out", str(tmp_path / "s.csv")])
    capsys.readouterr()
    rc = main(["reconstruct", "--sinogram", str(tmp_path / "s.csv"), "--phantom.size", "32",
               "--out", str(tmp_path / "rec")] + FAST)
    assert rc == 0
    out = capsys.readouterr().out
    assert "DR=" in out and "SR=" not in out


def test_benchmark_and_sweep(tmp_path, capsys):
    assert main(["benchmark", "--protocol", "binary", "--size", "32", "--out", str(tmp_path / "b")] + FAST) == 0
    assert main(["sweep", "--model", "A", "--size", "32", "--lambdas", "1e4,1e6",
                 "--out", str(tmp_path / "s")] + FAST) == 0
    out = capsys.readouterr().out
    assert "noise_norm=" in out and "plateau windows" in out
    assert len((tmp_path / "s" / "sweep.csv").read_text().splitlines()) == 3


def test_failures_exit_nonzero_with_marker(tmp_path, capsys):
    out = tmp_path / "bad"
    assert main(["reconstruct", "--geometry.inversion_kernel", "line", "--out", str(out)]) == 1
    assert "inverse crime" in (out / "FAILED").read_text()
    assert "error" in capsys.readouterr().err
    assert main(["reconstruct", "--pls.kappa", "-1", "--phantom.size", "32", "--out", str(out)]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pdtomo", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("phantom", "project", "reconstruct", "sweep", "benchmark"):
        assert cmd in res.stdout
