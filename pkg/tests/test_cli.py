"""End-to-end CLI checks through main(argv)."""

import numpy as np
import pytest

from conftest import synth_image
from gtcnn.cli import format_count, main
from gtcnn.pnm import PnmImage, read_pnm, write_pnm


def write_corpus(directory, count=3, size=64, seed0=0):
    directory.mkdir(exist_ok=True)
    for i in range(count):
        image = PnmImage.from_tensor(synth_image(seed0 + i, h=size, w=size))
        write_pnm(image, str(directory / f"img{i}.pgm"))


@pytest.fixture(scope="module")
def tiny_weights(tmp_path_factory):
    """A quickly trained tiny model shared by the denoise/eval tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    write_corpus(data)
    out = str(root / "tiny.gtcw")
    rc = main(
        [
            "train", "--data", str(data), "--out", out,
            "--channels", "8", "--depth", "1", "--stages", "1",
            "--patch", "32", "--stride", "32", "--batch", "2",
            "--steps", "30", "--seed", "0",
        ]
    )
    assert rc == 0
    return root, out


class TestParams:
    def test_d1_default(self, capsys):
        assert main(["params", "--depth", "1", "--channels", "64", "--stages", "4"]) == 0
        assert capsys.readouterr().out.strip() == "851521 (851k)"

    def test_d6_with_1x1(self, capsys):
        rc = main(
            ["params", "--depth", "6", "--channels", "64", "--stages", "4", "--use-1x1"]
        )
        assert rc == 0
        assert capsys.readouterr().out.strip() == "5128001 (5128k)"

    def test_d3(self, capsys):
        assert main(["params", "--depth", "3", "--channels", "64", "--stages", "4"]) == 0
        assert capsys.readouterr().out.strip() == "2552129 (2552k)"

    def test_toy_config(self, capsys):
        rc = main(["params", "--depth", "1", "--channels", "2", "--stages", "0", "--c-in", "1"])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "239"

    def test_invalid_config_exits_2(self, capsys):
        assert main(["params", "--depth", "0"]) == 2
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_writes_loadable_weights_and_log(self, tiny_weights):
        from gtcnn.weights import load_weights

        root, out = tiny_weights
        model = load_weights(out)
        assert model.config.c == 8
        log_lines = (root / "tiny.gtcw.csv").read_text().splitlines()
        assert log_lines[0] == "step,loss,lr"
        assert len(log_lines) == 31

    def test_prints_heldout_psnr(self, tmp_path, capsys):
        data = tmp_path / "data"
        write_corpus(data, count=2)
        rc = main(
            [
                "train", "--data", str(data), "--out", str(tmp_path / "m.gtcw"),
                "--channels", "8", "--depth", "1", "--stages", "1",
                "--patch", "32", "--stride", "32", "--batch", "2", "--steps", "5",
            ]
        )
        assert rc == 0
        assert "held-out PSNR" in capsys.readouterr().out

    def test_zero_steps_rejected(self, tmp_path, capsys):
        data = tmp_path / "data"
        write_corpus(data, count=1)
        rc = main(
            ["train", "--data", str(data), "--out", str(tmp_path / "m.gtcw"), "--steps", "0"]
        )
        assert rc == 2

    def test_empty_dir_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(["train", "--data", str(empty), "--out", str(tmp_path / "m.gtcw")])
        assert rc == 2

    def test_same_seed_identical_weight_files(self, tmp_path):
        data = tmp_path / "data"
        write_corpus(data, count=2)
        files = []
        for name in ("a.gtcw", "b.gtcw"):
            rc = main(
                [
                    "train", "--data", str(data), "--out", str(tmp_path / name),
                    "--channels", "8", "--depth", "1", "--stages", "1",
                    "--patch", "32", "--stride", "32", "--batch", "2",
                    "--steps", "8", "--seed", "11",
                ]
            )
            assert rc == 0
            files.append((tmp_path / name).read_bytes())
        assert files[0] == files[1]


class TestDenoise:
    def test_demo_mode_roundtrip(self, tiny_weights, tmp_path, capsys):
        root, weights = tiny_weights
        src = tmp_path / "in.pgm"
        write_pnm(PnmImage.from_tensor(synth_image(50, h=48, w=48)), str(src))
        out = tmp_path / "out.pgm"
        rc = main(
            [
                "denoise", "--model", weights, "--in", str(src), "--out", str(out),
                "--sigma", "25", "--seed", "3",
            ]
        )
        assert rc == 0
        assert "denoised" in capsys.readouterr().out
        assert read_pnm(str(out)).to_tensor().shape == (1, 1, 48, 48)

    def test_lambda_zero_equals_omitted(self, tiny_weights, tmp_path):
        _, weights = tiny_weights
        src = tmp_path / "in.pgm"
        write_pnm(PnmImage.from_tensor(synth_image(51, h=48, w=48)), str(src))
        out_a, out_b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        base = ["denoise", "--model", weights, "--in", str(src), "--sigma", "20"]
        assert main(base + ["--out", str(out_a)]) == 0
        assert main(base + ["--out", str(out_b), "--lambda", "0", "--stage", "0"]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_lambda_extremes_differ(self, tiny_weights, tmp_path):
        _, weights = tiny_weights
        src = tmp_path / "in.pgm"
        write_pnm(PnmImage.from_tensor(synth_image(52, h=48, w=48)), str(src))
        outputs = []
        for name, lam in (("lo.pgm", "-0.5"), ("hi.pgm", "0.5")):
            rc = main(
                [
                    "denoise", "--model", weights, "--in", str(src),
                    "--out", str(tmp_path / name), "--sigma", "20",
                    "--lambda", lam, "--stage", "0",
                ]
            )
            assert rc == 0
            outputs.append((tmp_path / name).read_bytes())
        assert outputs[0] != outputs[1]

    def test_lambda_out_of_range_rejected(self, tiny_weights, tmp_path, capsys):
        _, weights = tiny_weights
        src = tmp_path / "in.pgm"
        write_pnm(PnmImage.from_tensor(synth_image(53, h=48, w=48)), str(src))
        rc = main(
            [
                "denoise", "--model", weights, "--in", str(src),
                "--out", str(tmp_path / "x.pgm"), "--lambda", "0.6",
            ]
        )
        assert rc == 2
        assert "lambda" in capsys.readouterr().err

    def test_missing_model_rejected(self, tmp_path, capsys):
        src = tmp_path / "in.pgm"
        write_pnm(PnmImage.from_tensor(synth_image(54, h=32, w=32)), str(src))
        rc = main(
            ["denoise", "--model", str(tmp_path / "nope.gtcw"), "--in", str(src),
             "--out", str(tmp_path / "o.pgm")]
        )
        assert rc == 2
        assert "model" in capsys.readouterr().err


class TestEval:
    def test_table_and_mean(self, tiny_weights, tmp_path, capsys):
        _, weights = tiny_weights
        data = tmp_path / "eval"
        write_corpus(data, count=2, size=48, seed0=60)
        rc = main(["eval", "--model", weights, "--data", str(data), "--sigma", "25"])
        assert rc == 0
        out = capsys.readouterr().out
        lines = [ln for ln in out.splitlines() if ln.strip()]
        assert lines[0].startswith("image")
        assert lines[-1].startswith("mean")
        img_rows = [ln for ln in lines[1:-1]]
        assert len(img_rows) == 2
        # mean equals arithmetic mean of the per-image rows
        noisy_vals = [float(ln.split()[-2]) for ln in img_rows]
        mean_noisy = float(lines[-1].split()[-2])
        assert mean_noisy == pytest.approx(sum(noisy_vals) / 2, abs=0.01)

    def test_sigma_zero_inf_sentinel(self, tiny_weights, tmp_path, capsys):
        _, weights = tiny_weights
        data = tmp_path / "eval0"
        write_corpus(data, count=1, size=48, seed0=70)
        rc = main(["eval", "--model", weights, "--data", str(data), "--sigma", "0"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "inf" in out

    def test_deterministic_across_runs(self, tiny_weights, tmp_path, capsys):
        _, weights = tiny_weights
        data = tmp_path / "evald"
        write_corpus(data, count=2, size=48, seed0=80)
        outputs = []
        for _ in range(2):
            assert main(["eval", "--model", weights, "--data", str(data), "--seed", "5"]) == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]

    def test_unreadable_skipped_with_warning(self, tiny_weights, tmp_path, capsys):
        _, weights = tiny_weights
        data = tmp_path / "evalskip"
        write_corpus(data, count=1, size=48, seed0=90)
        (data / "junk.pgm").write_bytes(b"not a pnm")
        rc = main(["eval", "--model", weights, "--data", str(data)])
        assert rc == 0
        captured = capsys.readouterr()
        assert "skipped" in captured.err
        assert "1 file(s) skipped" in captured.out


def test_format_count():
    assert format_count(851_521) == "851521 (851k)"
    assert format_count(239) == "239"
    assert format_count(1_000) == "1000 (1k)"
