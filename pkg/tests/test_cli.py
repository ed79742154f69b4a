import json

import numpy as np
import pytest

from modalformer import cli
from modalformer.autograd import grad_check
from modalformer.modalities import NAMES, load_bundle, load_corpus, read_png, write_png
from modalformer.network import build, save_model

TINY = {"base_channels": 4, "patch": 16, "batch": 1, "total_iters": 4, "log_every": 2, "eval_every": 2}


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "corpus"
    assert cli.main(["gen-data", "--out", str(d), "--count", "4", "--size", "16", "16", "--seed", "5"]) == 0
    return d


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    (d / "cfg.json").write_text(json.dumps({**TINY, "total_iters": 60, "lr_init": 2e-3}))
    assert cli.main(["train", "--config", str(d / "cfg.json"), "--data", str(corpus), "--out", str(d / "out"),
                     "--quiet"]) == 0
    return d / "out"


# -- gen-data / extract ----------------------------------------------------------------

def test_gen_data_file_contract(corpus):
    assert len(list((corpus / "gt").glob("*.png"))) == 4
    assert len(list((corpus / "low").glob("*.png"))) == 4
    assert len([p for p in (corpus / "bundles").iterdir() if p.is_dir()]) == 8
    assert len((corpus / "manifest.txt").read_text().split("\n")) == 5


def test_gen_data_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "gen-data", "--out", tmp_path / name, "--count", "2", "--size", "8", "16", "--seed", "9")[0] == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_severity_orders_input_psnr(tmp_path, capsys):
    from modalformer.losses import psnr

    means = {}
    for sev in ("low", "high"):
        run(capsys, "gen-data", "--out", tmp_path / sev, "--count", "4", "--size", "16", "16", "--seed", "2", "--severity", sev)
        means[sev] = np.mean([psnr(p.low, p.gt) for p in load_corpus(tmp_path / sev)])
    assert means["high"] < means["low"]


def test_gen_data_rejects_bad_size(tmp_path, capsys):
    code, _, err = run(capsys, "gen-data", "--out", tmp_path, "--count", "1", "--size", "12", "16")
    assert code == 1 and error_of(err)["error"] == "usage"


def test_gen_data_unwritable_dir(tmp_path, capsys):
    (tmp_path / "file").write_text("x")
    code, _, err = run(capsys, "gen-data", "--out", tmp_path / "file" / "sub", "--count", "1", "--size", "8", "8")
    assert code == 2 and error_of(err)["error"] == "data"


def test_extract_contract_and_determinism(corpus, tmp_path, capsys):
    img = corpus / "gt" / "0000.png"
    for name in ("x", "y"):
        assert run(capsys, "extract", "--image", img, "--out", tmp_path / name, "--seed", "1")[0] == 0
    a, b = load_bundle(tmp_path / "x", expect_hw=(16, 16)), load_bundle(tmp_path / "y")
    assert list(a.maps) == list(NAMES)
    assert all(np.array_equal(a.maps[n], b.maps[n]) for n in NAMES)


def test_extract_gray_input(tmp_path, capsys):
    write_png(tmp_path / "gray.png", np.full((8, 8, 3), 0.5))
    assert run(capsys, "extract", "--image", tmp_path / "gray.png", "--out", tmp_path / "g")[0] == 0
    b = load_bundle(tmp_path / "g")
    assert all(np.isfinite(m).all() for m in b.maps.values())


def test_extract_missing_image(tmp_path, capsys):
    code, _, err = run(capsys, "extract", "--image", tmp_path / "none.png", "--out", tmp_path / "o")
    assert code == 2 and "none.png" in error_of(err)["message"]


# -- train / infer / eval ------------------------------------------------------------------

def test_train_then_eval_beats_raw_input(trained, corpus, tmp_path, capsys):
    code, out, _ = run(capsys, "eval", "--ckpt", trained, "--data", corpus, "--json", tmp_path / "m.json")
    assert code == 0 and "mean" in out
    mean = json.loads((tmp_path / "m.json").read_text())["mean"]
    assert mean["psnr"] > mean["input_psnr"]


def test_training_outputs(trained):
    assert (trained / "best" / "params" / "manifest.txt").exists()
    assert (trained / "last" / "optim" / "manifest.txt").exists()
    lines = (trained / "log.jsonl").read_text().splitlines()
    assert all({"iter"} <= set(json.loads(x)) for x in lines)


def test_infer_keeps_source_dimensions(trained, corpus, tmp_path, capsys):
    low = read_png(corpus / "low" / "0001.png")[:12, :10]
    write_png(tmp_path / "crop.png", low)
    run(capsys, "extract", "--image", tmp_path / "crop.png", "--out", tmp_path / "b")
    code, _, _ = run(capsys, "infer", "--ckpt", trained, "--image", tmp_path / "crop.png", "--bundle", tmp_path / "b",
                     "--out", tmp_path / "out.png", "--dump-modalities", tmp_path / "dump")
    assert code == 0
    assert read_png(tmp_path / "out.png").shape == (12, 10, 3)
    assert (tmp_path / "dump" / "manifest.txt").exists()


def test_infer_bundle_size_mismatch(trained, corpus, capsys, tmp_path):
    code, _, err = run(capsys, "infer", "--ckpt", trained, "--image", corpus / "low" / "0000.png",
                       "--bundle", tmp_path / "missing", "--out", tmp_path / "o.png")
    assert code == 2


def test_eval_of_fresh_checkpoint_is_finite(corpus, tmp_path, capsys):
    model = build(base_channels=4)
    save_model(tmp_path / "fresh", model, model.config.to_dict())
    code, _, _ = run(capsys, "eval", "--ckpt", tmp_path / "fresh", "--data", corpus, "--json", tmp_path / "m.json")
    assert code == 0
    mean = json.loads((tmp_path / "m.json").read_text())["mean"]
    assert all(np.isfinite(v) for v in mean.values())


def test_eval_is_deterministic(trained, corpus, tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "eval", "--ckpt", trained, "--data", corpus, "--json", tmp_path / f"{name}.json")
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def test_train_bad_config(corpus, tmp_path, capsys):
    (tmp_path / "c.json").write_text('{"learning_rate": 1}')
    code, _, err = run(capsys, "train", "--config", tmp_path / "c.json", "--data", corpus, "--out", tmp_path / "o")
    assert code == 1 and "learning_rate" in error_of(err)["message"]


def test_train_missing_corpus(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(TINY))
    code, _, err = run(capsys, "train", "--config", tmp_path / "c.json", "--data", tmp_path / "nowhere", "--out", tmp_path / "o")
    assert code == 2 and error_of(err)["code"] == 2


def test_divergence_is_numeric_failure(corpus, tmp_path, capsys, monkeypatch):
    from modalformer import train as train_pkg

    def boom(*a, **k):
        raise train_pkg.TrainingDiverged(7)

    monkeypatch.setattr(train_pkg, "train", boom)
    (tmp_path / "c.json").write_text(json.dumps(TINY))
    code, _, err = run(capsys, "train", "--config", tmp_path / "c.json", "--data", corpus, "--out", tmp_path / "o")
    assert code == 3 and "iteration 7" in error_of(err)["message"]


# -- usage -------------------------------------------------------------------------------

@pytest.mark.parametrize("argv", [[], ["fly"], ["gen-data", "--out", "x", "--count", "1", "--size", "8", "8", "--bogus"],
                                  ["gradcheck", "--scope", "galaxy"], ["bench-attn", "--hw", "8", "--c", "x"]])
def test_usage_errors_exit_1(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 1 and error_of(err)["error"] == "usage"


# -- gradcheck / bench / ablate -------------------------------------------------------------

def test_gradcheck_op_scope_passes_and_is_deterministic(tmp_path, capsys):
    code, out, _ = run(capsys, "gradcheck", "--scope", "op", "--seed", "3", "--json", tmp_path / "a.json")
    assert code == 0 and "targets passed" in out
    run(capsys, "gradcheck", "--scope", "op", "--seed", "3", "--json", tmp_path / "b.json")
    a = [(r["target"], r["error"]) for r in json.loads((tmp_path / "a.json").read_text())]
    b = [(r["target"], r["error"]) for r in json.loads((tmp_path / "b.json").read_text())]
    assert a == b


def test_gradcheck_threshold_breach_exits_3(capsys, monkeypatch):
    from modalformer import gradcheck_suite

    monkeypatch.setitem(gradcheck_suite.THRESHOLDS, "op", 0.0)
    code, _, err = run(capsys, "gradcheck", "--scope", "op")
    assert code == 3 and error_of(err)["error"] == "numeric"


def test_gradcheck_without_parameters_is_vacuous():
    assert grad_check(lambda: None, []) == 0.0


def test_bench_attn_reports_exponents(tmp_path, capsys):
    code, out, _ = run(capsys, "bench-attn", "--hw", "8,16,8x32", "--c", "8,16", "--heads", "2", "--json", tmp_path / "b.json")
    assert code == 0 and "exponents" in out
    rep = json.loads((tmp_path / "b.json").read_text())
    assert rep["exponents"]["flops_vs_hw"] == pytest.approx(1.0, abs=1e-12)
    assert rep["exponents"]["flops_vs_c"] == pytest.approx(2.0, abs=1e-12)
    assert all(r["flops"] == r["expected_flops"] for r in rep["rows"])


def test_bench_vanilla_guard(capsys):
    code, _, err = run(capsys, "bench-attn", "--hw", "128", "--c", "8", "--mode", "vanilla")
    assert code == 1 and "limit" in error_of(err)["message"]
    code, _, _ = run(capsys, "bench-attn", "--hw", "8,16", "--c", "8", "--mode", "vanilla")
    assert code == 0


@pytest.mark.parametrize("axis,labels", [
    ("injection", ["Add", "Concat", "Q replace", "V p. mul.", "CM-MSA"]),
    ("modality-groups", ["without feature_embeddings", "without segmentation", "without geometry", "without color",
                         "all groups"]),
    ("loss", ["MSE + MM", "MSE + MS-SSIM", "MSE + Perc", "MSE + MS-SSIM + Perc", "all terms"]),
])
def test_ablate_axes(axis, labels, corpus, tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({**TINY, "total_iters": 2}))
    code, out, _ = run(capsys, "ablate", "--axis", axis, "--config", tmp_path / "c.json", "--data", corpus,
                       "--json", tmp_path / "r.json")
    assert code == 0
    rows = json.loads((tmp_path / "r.json").read_text())["rows"]
    assert [r["label"] for r in rows if not r["reference"]] == labels
    assert all(np.isfinite([r["psnr"], r["ssim"], r["ms_ssim"]]).all() for r in rows)
