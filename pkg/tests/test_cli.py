import json

import numpy as np
import pytest
from PIL import Image

from scsa.cli import main
from scsa.semantics import load_label_map
from scsa.synthetic import make_quadruple
from scsa.tensors import load_feature_map


def _save(path, arr):
    Image.fromarray(np.clip(np.rint(arr), 0, 255).astype(np.uint8)).save(path)
    return str(path)


@pytest.fixture(scope="module")
def quad_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("quad")
    quad, n = make_quadruple(11, size=32, regions=3)
    return {
        "content": _save(d / "c.png", quad.content),
        "content_sem": _save(d / "csem.png", quad.content_sem),
        "style": _save(d / "s.png", quad.style),
        "style_sem": _save(d / "ssem.png", quad.style_sem),
        "n": n,
    }


def quad_flags(q):
    return ["--content", q["content"], "--content-sem", q["content_sem"],
            "--style", q["style"], "--style-sem", q["style_sem"], "--clusters", str(q["n"])]


# ---- segment ----

def test_segment_histograms(tmp_path, rng):
    c = np.where((rng.random((6, 8)) < 0.3)[..., None], 255, 0).astype(np.uint8).repeat(3, axis=2)
    s = np.where((rng.random((5, 5)) < 0.6)[..., None], 255, 0).astype(np.uint8).repeat(3, axis=2)
    c[0, 0], c[0, 1], s[0, 0], s[0, 1] = 0, 255, 0, 255
    args = ["segment", "--content-sem", _save(tmp_path / "c.png", c), "--style-sem", _save(tmp_path / "s.png", s),
            "--clusters", "2", "--out-dir", str(tmp_path / "out")]
    assert main(args) == 0
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} == {
        "content_labels.png", "style_labels.png", "content_labels.scsal", "style_labels.scsal", "palette.json"}
    for img, name in ((c, "content"), (s, "style")):
        labels = load_label_map(out / f"{name}_labels.scsal")
        color_hist = sorted(np.unique(img[..., 0], return_counts=True)[1].tolist())
        label_hist = sorted(np.bincount(labels.flat()).tolist())
        assert color_hist == label_hist
    assert len(json.loads((out / "palette.json").read_text())["centers"]) == 2


def test_segment_single_cluster(tmp_path, rng):
    img = rng.integers(0, 256, (4, 4, 3))
    path = _save(tmp_path / "x.png", img)
    assert main(["segment", "--content-sem", path, "--style-sem", path, "--clusters", "1", "--out-dir", str(tmp_path)]) == 0
    assert load_label_map(tmp_path / "content_labels.scsal").labels.max() == 0
    assert load_label_map(tmp_path / "style_labels.scsal").labels.max() == 0


def test_segment_too_many_clusters(tmp_path, capsys):
    path = _save(tmp_path / "x.png", np.zeros((4, 4, 3)))
    code = main(["segment", "--content-sem", path, "--style-sem", path, "--clusters", "3", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "distinct colors" in capsys.readouterr().err


def test_segment_deterministic(tmp_path, quad_files):
    for run in ("a", "b"):
        assert main(["segment", "--content-sem", quad_files["content_sem"], "--style-sem", quad_files["style_sem"],
                     "--clusters", str(quad_files["n"]), "--seed", "5", "--out-dir", str(tmp_path / run)]) == 0
    for name in ("content_labels.scsal", "style_labels.scsal", "content_labels.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---- transfer ----

def test_transfer_cnn_preset(tmp_path, quad_files, caplog):
    out = tmp_path / "out.png"
    code = main(["transfer", *quad_flags(quad_files), "--preset", "cnn", "--out", str(out),
                 "--features-out", str(tmp_path / "f.scsaf"), "-v"])
    assert code == 0
    with Image.open(out) as im:
        assert im.size == (32, 32) and im.mode == "RGB"
    assert load_feature_map(tmp_path / "f.scsaf").shape == (12, 16, 16)
    assert "alpha1=0.7 alpha2=0.3" in caplog.text


def test_transfer_near_identity(tmp_path, quad_files):
    q = dict(quad_files, style=quad_files["content"], style_sem=quad_files["content_sem"])
    out = tmp_path / "id.png"
    assert main(["transfer", *quad_flags(q), "--preset", "custom", "--alpha1", "0", "--alpha2", "0", "--out", str(out)]) == 0
    with Image.open(out) as a, Image.open(q["content"]) as b:
        diff = np.abs(np.asarray(a).astype(int) - np.asarray(b).astype(int))
    assert diff.max() <= 2


def test_transfer_byte_identical(tmp_path, quad_files):
    for name in ("a.png", "b.png"):
        assert main(["transfer", *quad_flags(quad_files), "--preset", "transformer", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_transfer_conflicting_preset_value(tmp_path, quad_files, capsys):
    code = main(["transfer", *quad_flags(quad_files), "--preset", "cnn", "--alpha1", "0.2", "--out", str(tmp_path / "x.png")])
    assert code == 2
    assert "[config]" in capsys.readouterr().err


def test_transfer_missing_flag_is_usage_error(tmp_path, quad_files):
    assert main(["transfer", "--content", quad_files["content"], "--out", str(tmp_path / "x.png")]) == 1


def test_unknown_flag_is_usage_error():
    assert_exit = pytest.raises(SystemExit)
    with assert_exit as exc:
        main(["transfer", "--bogus"])
    assert exc.value.code == 1


def test_config_file_and_flag_precedence(tmp_path, quad_files):
    cfg = {"content": quad_files["content"], "content-sem": quad_files["content_sem"],
           "style": quad_files["style"], "style_sem": quad_files["style_sem"], "clusters": quad_files["n"],
           "preset": "custom", "alpha1": 0.5, "alpha2": 0.5}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["transfer", "--config", str(path), "--out", str(tmp_path / "a.png")]) == 0
    assert main(["transfer", *quad_flags(quad_files), "--preset", "custom", "--alpha1", "0.5", "--alpha2", "0.5",
                 "--out", str(tmp_path / "b.png")]) == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert main(["transfer", "--config", str(path), "--alpha1", "0.1", "--out", str(tmp_path / "c.png")]) == 0
    assert (tmp_path / "c.png").read_bytes() != (tmp_path / "a.png").read_bytes()


def test_config_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"alpha9": 1}))
    assert main(["transfer", "--config", str(path)]) == 1


def test_missing_image_is_data_error(tmp_path, quad_files):
    q = dict(quad_files, content=str(tmp_path / "nope.png"))
    assert main(["transfer", *quad_flags(q), "--out", str(tmp_path / "x.png")]) == 2


# ---- ssl ----

@pytest.fixture(scope="module")
def dumped(tmp_path_factory, quad_files):
    d = tmp_path_factory.mktemp("dump")
    assert main(["transfer", *quad_flags(quad_files), "--preset", "custom", "--out", str(d / "x.png"),
                 "--dump-dir", str(d)]) == 0
    return d


def test_ssl_identity(dumped, capsys):
    assert main(["ssl", "--stylized-features", str(dumped / "style.scsaf"), "--style-features", str(dumped / "style.scsaf"),
                 "--labels-out", str(dumped / "style_labels.scsal"), "--labels-style", str(dumped / "style_labels.scsal")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["total"] == 0.0
    assert {r["label"] for r in report["regions"]} == {0, 1, 2}


def test_ssl_after_s_adain(dumped, capsys):
    # alpha1 = alpha2 = 0 custom run: stylized features are exactly s_adain(F_c, F_s)
    assert main(["ssl", "--stylized-features", str(dumped / "stylized.scsaf"), "--style-features", str(dumped / "style.scsaf"),
                 "--labels-out", str(dumped / "content_labels.scsal"), "--labels-style", str(dumped / "style_labels.scsal")]) == 0
    total = json.loads(capsys.readouterr().out)["total"]
    print(total)
    assert total <= 1e-4


def test_ssl_malformed(tmp_path, dumped):
    bad = tmp_path / "bad.scsaf"
    bad.write_bytes(b"garbage")
    assert main(["ssl", "--stylized-features", str(bad), "--style-features", str(dumped / "style.scsaf"),
                 "--labels-out", str(dumped / "content_labels.scsal"), "--labels-style", str(dumped / "style_labels.scsal")]) == 2


# ---- dump-attn ----

def _dump(tmp_path, quad_files, which):
    out = tmp_path / f"{which}.scsaf"
    assert main(["dump-attn", *quad_flags(quad_files), "--which", which, "--out", str(out)]) == 0
    m = load_feature_map(out)
    assert m.channels == 1
    return m.data[0]


def test_dump_ssa_one_hot(tmp_path, quad_files):
    w = _dump(tmp_path, quad_files, "ssa")
    assert w.shape == (256, 256)
    assert np.all((w == 1.0).sum(axis=1) == 1) and np.all((w == 0) | (w == 1))


def test_dump_sca_zero_across_labels(tmp_path, quad_files, dumped):
    w = _dump(tmp_path, quad_files, "sca")
    lc = load_label_map(dumped / "content_labels.scsal").flat()
    ls = load_label_map(dumped / "style_labels.scsal").flat()
    cross = lc[:, None] != ls[None, :]
    assert np.all(w[cross] == 0) and np.all(w[~cross] > 0)


def test_dump_ua_rows_sum_to_one(tmp_path, quad_files):
    w = _dump(tmp_path, quad_files, "ua")
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-5)


# ---- sweep ----

def test_sweep_grid(tmp_path, quad_files, monkeypatch):
    monkeypatch.setenv("SCSA_THREADS", "2")
    vals = "0,0.25,0.5,0.75,1"
    assert main(["sweep", *quad_flags(quad_files), "--grid", f"alpha1={vals}", f"alpha2={vals}",
                 "--out-dir", str(tmp_path)]) == 0
    cells = sorted(tmp_path.glob("cell_*.png"))
    assert len(cells) == 25
    with Image.open(tmp_path / "sheet.png") as sheet:
        assert sheet.size == (5 * 32 + 4 * 2, 5 * 32 + 4 * 2)


def test_sweep_single_cell_matches_transfer(tmp_path, quad_files):
    assert main(["sweep", *quad_flags(quad_files), "--grid", "alpha1=0.7", "alpha2=0.3", "--out-dir", str(tmp_path / "s")]) == 0
    assert main(["transfer", *quad_flags(quad_files), "--preset", "cnn", "--out", str(tmp_path / "t.png")]) == 0
    (cell,) = (tmp_path / "s").glob("cell_*.png")
    assert cell.read_bytes() == (tmp_path / "t.png").read_bytes()


@pytest.mark.parametrize("grid", [["alpha1="], ["gamma=1,2"], ["alpha1"]])
def test_sweep_bad_grid(tmp_path, quad_files, grid):
    assert main(["sweep", *quad_flags(quad_files), "--grid", *grid, "--out-dir", str(tmp_path)]) == 1


def test_sweep_without_grid(tmp_path, quad_files):
    assert main(["sweep", *quad_flags(quad_files), "--out-dir", str(tmp_path)]) == 1
