import numpy as np
import pytest

from scaffusion.cli import main
from scaffusion.data import Dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--seed", "2", "--frames", "4",
                 "--sequences", "2", "--width", "64", "--height", "64"]) == 0
    common = ["--set", f"dataset={root / 'data'}", "--set", "epochs=1", "--set", "batch_size=4"]
    assert main(["train", "--stage", "scaffnet", "--out", str(root / "s1"), *common]) == 0
    scaff = root / "s1" / "checkpoints" / "final.npz"
    assert main(["train", "--stage", "fusionnet", "--out", str(root / "s2"), *common,
                 "--set", f"scaffnet_checkpoint={scaff}"]) == 0
    return root


def test_gen_data_output(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path), "--frames", "3", "--width", "32",
                 "--height", "32", "--sparsity", "uniform", "--points", "10"]) == 0
    out = capsys.readouterr().out
    assert "3 frames (1 triplets)" in out and "sparse density" in out
    assert (Dataset(tmp_path).stacked()["sparse"] > 0).sum(axis=(1, 2)).tolist() == [10, 10, 10]


def test_gen_data_is_idempotent(tmp_path):
    args = ["gen-data", "--frames", "3", "--width", "32", "--height", "32"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for p in (tmp_path / "a").rglob("*.png"):
        assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def test_train_writes_run_directory(workspace):
    assert (workspace / "s2" / "checkpoints" / "final.npz").is_file()
    assert "scaffnet_checkpoint" in (workspace / "s2" / "config.txt").read_text()


def test_eval_reports_finite_metrics(workspace, capsys):
    out = workspace / "eval"
    assert main(["eval", "--checkpoint", str(workspace / "s2" / "checkpoints" / "final.npz"),
                 "--dataset", str(workspace / "data"), "--out", str(out)]) == 0
    assert "MAE" in capsys.readouterr().out
    lines = (out / "metrics.csv").read_text().splitlines()
    assert len(lines) == 1 + 8 + 1
    assert np.isfinite([float(v) for v in lines[-1].split(",")[1:]]).all()
    assert len(list((out / "error_maps").glob("*.png"))) == 8


def test_eval_missing_file(workspace, capsys):
    code = main(["eval", "--checkpoint", str(workspace / "nope.npz"), "--dataset",
                 str(workspace / "data"), "--out", str(workspace / "x")])
    assert code != 0 and "nope.npz" in capsys.readouterr().err


def test_infer(workspace, capsys):
    ds = workspace / "data" / "seq000"
    out = workspace / "infer"
    assert main(["infer", "--checkpoint", str(workspace / "s2" / "checkpoints" / "final.npz"),
                 "--image", str(ds / "image" / "000001.png"),
                 "--sparse", str(ds / "sparse" / "000001.png"), "--out", str(out)]) == 0
    assert (out / "depth.png").is_file() and (out / "topology.png").is_file()


def test_infer_resolution_mismatch(workspace, tmp_path, capsys):
    from PIL import Image
    Image.new("RGB", (30, 30)).save(tmp_path / "i.png")
    Image.new("I;16", (30, 30)).save(tmp_path / "z.png")
    code = main(["infer", "--checkpoint", str(workspace / "s1" / "checkpoints" / "final.npz"),
                 "--image", str(tmp_path / "i.png"), "--sparse", str(tmp_path / "z.png"),
                 "--out", str(tmp_path)])
    assert code == 1 and "pad" in capsys.readouterr().err


def test_visualize(workspace):
    out = workspace / "vis"
    assert main(["visualize", "--checkpoint", str(workspace / "s1" / "checkpoints" / "final.npz"),
                 "--dataset", str(workspace / "data"), "--out", str(out), "--count", "2"]) == 0
    assert len(list(out.glob("*.png"))) == 2


def test_ablate_density_sweep(workspace, capsys):
    out = workspace / "ablate"
    assert main(["ablate", "--suite", "density-sweep", "--out", str(out),
                 "--set", f"dataset={workspace / 'data'}", "--set", "epochs=1",
                 "--set", f"scaffnet_checkpoint={workspace / 's1' / 'checkpoints' / 'final.npz'}"]) == 0
    assert "Verdict" in capsys.readouterr().out
    assert (out / "report.md").is_file() and (out / "report.csv").is_file()


def test_config_file_and_bad_key(tmp_path, capsys):
    cfg = tmp_path / "run.txt"
    cfg.write_text("stage = scaffnet\nlearning_rate = 0.1\n")
    assert main(["train", "--out", str(tmp_path / "o"), "--config", str(cfg)]) == 1
    assert "config.learning_rate" in capsys.readouterr().err
    assert main(["train", "--out", str(tmp_path / "o"), "--set", "epochs=zero"]) == 1
    assert "config.epochs" in capsys.readouterr().err


def test_unknown_suite_rejected(capsys):
    with pytest.raises(SystemExit) as e:
        main(["ablate", "--suite", "bogus"])
    assert e.value.code != 0
