import hashlib
import json
import os

import numpy as np
import pytest
import torch
from PIL import Image

from pansharp.archive import read_archive, write_archive
from pansharp.baselines import pansharpen_classical
from pansharp.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from pansharp.imaging import Raster, Sample, load_raster, save_raster, synthetic_pair, upsample
from pansharp.imaging.raster import to_counts
from pansharp.metrics import evaluate, mean_report
from pansharp.net import TOY, DatsModel, write_checkpoint
from pansharp.report import parse_table, read_records


def digest(folder):
    h = hashlib.sha256()
    for name in sorted(os.listdir(folder)):
        h.update(name.encode())
        with open(os.path.join(folder, name), "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    pan, ms = synthetic_pair(512, seed=0)
    save_raster(d / "pan.psrk", pan)
    save_raster(d / "ms.psrk", ms)
    return d


@pytest.fixture(scope="module")
def archive(scene):
    out = scene / "samples"
    assert main(["prepare", "--pan", str(scene / "pan.psrk"), "--ms", str(scene / "ms.psrk"),
                 "--out", str(out), "--patch", "128", "--stride", "128"]) == EXIT_OK
    return out


@pytest.fixture
def zero_ckpt(tmp_path):
    model = DatsModel(TOY, seed=0)
    with torch.no_grad():
        model.decoder.final.weight.zero_()
        model.decoder.final.bias.zero_()
    path = tmp_path / "zero.ckpt"
    write_checkpoint(path, model)
    return path


# -- prepare -----------------------------------------------------------------


def test_prepare_tiles_sixteen_samples(archive):
    manifest = json.loads((archive / "manifest.json").read_text())
    assert manifest["count"] == 16
    files = [f for f in os.listdir(archive) if f.endswith(".psrk")]
    assert len(files) == 4 * manifest["count"]
    assert manifest["pan_shape"] == [32, 32, 1] and manifest["lrms_shape"] == [8, 8, 4]
    assert manifest["settings"]["blur_sigma"] == 2.0


def test_prepare_is_byte_identical_on_rerun(scene, archive, tmp_path):
    before = digest(archive)
    args = ["prepare", "--pan", str(scene / "pan.psrk"), "--ms", str(scene / "ms.psrk"),
            "--patch", "128", "--stride", "128"]
    assert main(args + ["--out", str(archive)]) == EXIT_OK
    assert digest(archive) == before
    # a fresh directory gives the same bytes too
    assert main(args + ["--out", str(tmp_path / "again")]) == EXIT_OK
    assert digest(tmp_path / "again") == before


def test_prepare_samples_load(archive):
    samples, manifest = read_archive(archive)
    assert len(samples) == 16 and manifest["reduced"]
    assert all(s.hrms_ref.shape == (32, 32, 4) for s in samples)


def test_prepare_size_ratio_violation_writes_nothing(scene, tmp_path):
    out = tmp_path / "bad"
    rc = main(["prepare", "--pan", str(scene / "ms.psrk"), "--ms", str(scene / "ms.psrk"), "--out", str(out)])
    assert rc == EXIT_USAGE
    assert not out.exists()


def test_prepare_missing_input(tmp_path):
    rc = main(["prepare", "--pan", str(tmp_path / "x.psrk"), "--ms", str(tmp_path / "y.psrk"), "--out", str(tmp_path / "o")])
    assert rc == EXIT_IO
    assert not (tmp_path / "o").exists()


# -- train -------------------------------------------------------------------


def test_train_missing_archive(tmp_path, capsys):
    rc = main(["train", "--archive", str(tmp_path / "none"), "--checkpoint", str(tmp_path / "m.ckpt")])
    assert rc == EXIT_IO
    assert "no sample archive" in capsys.readouterr().err
    assert not (tmp_path / "m.ckpt").exists()


def test_train_and_resume_continue_numbering(archive, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"archive = {archive}\ncheckpoint = m.ckpt\nlog = log.jsonl\nmodel = toy\nbatch_size = 4\n")
    assert main(["--config", str(cfg), "train", "--steps", "3"]) == EXIT_OK
    assert main(["--config", str(cfg), "train", "--steps", "7", "--resume", "--figure", str(tmp_path / "loss.png")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "trained steps 1-3" in out and "trained steps 4-7" in out
    steps = [json.loads(x)["step"] for x in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert steps == list(range(1, 8))
    assert (tmp_path / "loss.png").stat().st_size > 0


def test_train_is_deterministic_and_seed_flag_position_is_irrelevant(archive, tmp_path):
    common = ["--archive", str(archive), "--model", "toy", "--batch-size", "4", "--steps", "2"]
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    assert main(["--seed", "5", "train", "--checkpoint", str(a)] + common) == EXIT_OK
    assert main(["train", "--seed", "5", "--checkpoint", str(b)] + common) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_train_holdout_reported(archive, tmp_path, capsys):
    rc = main(["train", "--archive", str(archive), "--model", "toy", "--steps", "1", "--holdout", "4",
               "--checkpoint", str(tmp_path / "m.ckpt")])
    assert rc == EXIT_OK
    assert "holdout L1" in capsys.readouterr().out


def test_train_resume_without_checkpoint(archive, tmp_path):
    rc = main(["train", "--archive", str(archive), "--checkpoint", str(tmp_path / "m.ckpt"), "--resume"])
    assert rc == EXIT_IO


# -- pansharpen --------------------------------------------------------------


def _pansharpen(archive, out, *extra):
    return main(["pansharpen", "--pan", str(archive / "000005_pan.psrk"), "--lrms",
                 str(archive / "000005_lrms.psrk"), "--out", str(out), *extra])


def test_bicubic_equals_upsample(archive, tmp_path):
    assert _pansharpen(archive, tmp_path / "f.psrk", "--method", "bicubic") == EXIT_OK
    got = load_raster(tmp_path / "f.psrk")
    lrms = load_raster(archive / "000005_lrms.psrk")
    want = to_counts(upsample(Raster(lrms.values / 4095, 12, normalized=True)))
    np.testing.assert_array_equal(got.values, want)
    assert got.shape == (32, 32, 4)


def test_dats_with_zero_final_layer_is_bicubic(archive, tmp_path, zero_ckpt):
    assert _pansharpen(archive, tmp_path / "b.psrk", "--method", "bicubic") == EXIT_OK
    assert _pansharpen(archive, tmp_path / "d.psrk", "--method", "dats", "--checkpoint", str(zero_ckpt)) == EXIT_OK
    d = load_raster(tmp_path / "d.psrk").values
    b = load_raster(tmp_path / "b.psrk").values
    assert np.abs(d - b).max() <= 1  # float32 inference, at most one count of rounding


@pytest.mark.parametrize("method", ["ihs", "brovey", "hpf", "bicubic"])
def test_output_shape_and_preview(archive, tmp_path, method):
    png = tmp_path / "p.png"
    assert _pansharpen(archive, tmp_path / "f.tif", "--method", method, "--preview", str(png)) == EXIT_OK
    assert load_raster(tmp_path / "f.tif").shape == (32, 32, 4)
    img = np.asarray(Image.open(png))
    assert img.shape == (32, 32, 3) and img.dtype == np.uint8


def test_pansharpen_precondition_failures(archive, tmp_path, zero_ckpt):
    out = tmp_path / "f.psrk"
    assert _pansharpen(archive, out, "--method", "dats") == EXIT_USAGE
    assert _pansharpen(archive, out, "--method", "dats", "--checkpoint", str(tmp_path / "no.ckpt")) == EXIT_IO
    assert _pansharpen(archive, out, "--method", "ihs", "--checkpoint", str(zero_ckpt)) == EXIT_USAGE
    assert _pansharpen(archive, out, "--method", "pca") == EXIT_USAGE
    assert _pansharpen(archive, tmp_path / "f.png", "--method", "hpf") == EXIT_USAGE
    rc = main(["pansharpen", "--method", "bicubic", "--pan", str(archive / "000000_pan.psrk"),
               "--lrms", str(archive / "000000_hrms.psrk"), "--out", str(out)])
    assert rc == EXIT_USAGE
    assert not out.exists()


# -- evaluate ----------------------------------------------------------------


def test_evaluate_identity_row(archive, tmp_path, capsys):
    ref = archive / "000003_hrms.psrk"
    rc = main(["evaluate", "--fused", str(ref), "--ref", str(ref), "--label", "Same",
               "--report", str(tmp_path / "t.txt"), "--records", str(tmp_path / "r.jsonl"),
               "--figure", str(tmp_path / "bars.png")])
    assert rc == EXIT_OK
    printed = capsys.readouterr().out
    rows = parse_table(printed)
    assert [n for n, _ in rows] == ["Same", "Reference"]
    assert rows[0][1].values() == (0, 0, 1, 1, 1)
    assert printed.splitlines()[0].split() == ["Methods", "ERGAS", "SAM", "UIQI", "SCC", "SSIM"]
    assert (tmp_path / "t.txt").read_text() == printed
    assert read_records(tmp_path / "r.jsonl")[0][1].values() == pytest.approx((0, 0, 1, 1, 1), abs=1e-12)
    assert (tmp_path / "bars.png").stat().st_size > 0


def test_evaluate_round_trips_report(archive, tmp_path, capsys):
    assert _pansharpen(archive, tmp_path / "f.psrk", "--method", "hpf") == EXIT_OK
    capsys.readouterr()
    assert main(["evaluate", "--fused", str(tmp_path / "f.psrk"), "--ref", str(archive / "000005_hrms.psrk"),
                 "--records", str(tmp_path / "r.jsonl")]) == EXIT_OK
    printed = parse_table(capsys.readouterr().out)[0][1]
    exact = read_records(tmp_path / "r.jsonl")[0][1]
    assert printed.values() == tuple(round(v, 4) for v in exact.values())


def test_evaluate_shape_mismatch_writes_nothing(archive, tmp_path):
    rc = main(["evaluate", "--fused", str(archive / "000000_lrms.psrk"), "--ref", str(archive / "000000_hrms.psrk"),
               "--report", str(tmp_path / "t.txt")])
    assert rc == EXIT_USAGE
    assert not (tmp_path / "t.txt").exists()


def test_evaluate_undefined_metric_is_numeric_failure(tmp_path):
    v = np.random.default_rng(0).uniform(0.2, 0.8, (16, 16, 4))
    v[:, :, 1] = 0.0  # zero band mean makes ERGAS undefined
    save_raster(tmp_path / "z.psrk", Raster(v, 12, normalized=True))
    save_raster(tmp_path / "f.psrk", Raster(np.clip(v + 0.05, 0, 1), 12, normalized=True))
    assert main(["evaluate", "--fused", str(tmp_path / "f.psrk"), "--ref", str(tmp_path / "z.psrk")]) == EXIT_NUMERIC


# -- compare -----------------------------------------------------------------


def test_compare_row_order_and_averaging(archive, tmp_path, capsys):
    rc = main(["compare", "--archive", str(archive), "--methods", "hpf,bicubic,ihs",
               "--records", str(tmp_path / "r.jsonl"), "--figure", str(tmp_path / "b.png"),
               "--panel", str(tmp_path / "p.png")])
    assert rc == EXIT_OK
    rows = parse_table(capsys.readouterr().out)
    assert [n for n, _ in rows] == ["HPF", "Bicubic", "IHS", "Reference"]
    records = read_records(tmp_path / "r.jsonl")
    samples, _ = read_archive(archive)
    for (name, rep), method in zip(records, ["hpf", "bicubic", "ihs"]):
        want = mean_report([evaluate(pansharpen_classical(method, s.pan, s.lrms_up), s.hrms_ref) for s in samples])
        np.testing.assert_allclose(rep.values(), want.values(), rtol=0, atol=1e-12)
    assert (tmp_path / "p.png").stat().st_size > 0


def test_compare_identity_degradation_is_ideal(tmp_path, capsys):
    # scale-1 "degradation": every input already equals the reference
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(3):
        ref = Raster(np.rint(rng.uniform(400, 3600, (24, 24, 4))) / 4095, 12, normalized=True)
        pan = ref.with_values(ref.values.mean(axis=2, keepdims=True))
        samples.append(Sample(lrms=ref, pan=pan, lrms_up=ref, hrms_ref=ref))
    write_archive(tmp_path / "id", samples, {"scale": 1})
    assert main(["compare", "--archive", str(tmp_path / "id"), "--methods", "bicubic"]) == EXIT_OK
    (_, rep), _ = parse_table(capsys.readouterr().out)
    assert rep.values() == (0, 0, 1, 1, 1)


def test_compare_typical_needs_a_different_source(archive, tmp_path):
    ck = tmp_path / "m.ckpt"
    assert main(["train", "--archive", str(archive), "--model", "toy", "--steps", "1", "--checkpoint", str(ck)]) == EXIT_OK
    rc = main(["compare", "--split", "typical", "--test-archive", str(archive), "--checkpoint", str(ck)])
    assert rc == EXIT_USAGE
    assert main(["compare", "--split", "typical", "--methods", "bicubic"]) == EXIT_USAGE


def test_compare_with_dats(archive, tmp_path, zero_ckpt, capsys):
    assert main(["compare", "--archive", str(archive), "--methods", "bicubic,dats", "--checkpoint", str(zero_ckpt)]) == EXIT_OK
    (_, bic), (_, dats), _ = parse_table(capsys.readouterr().out)
    np.testing.assert_allclose(dats.values(), bic.values(), atol=2e-4)


# -- general -----------------------------------------------------------------


def test_usage_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["--config", str(tmp_path / "none.cfg"), "compare"]) == EXIT_IO
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["--config", str(bad), "compare"]) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "pansharpen" in capsys.readouterr().out
