import numpy as np
import pytest

import spader


def small_config(**extra):
    settings = {
        "seed": "3",
        "canvas_size": "28",
        "canvas_min_scale": "0.6",
        "canvas_max_scale": "1.0",
        "train_vae": "40",
        "train_reg_normal": "40",
        "train_reg_known": "20",
        "test_per_digit": "3",
        "vae_latent": "8",
        "vae_channels": "4,8,8,8",
        "vae_epochs": "1",
        "reg_channels": "4,8,8",
        "reg_epochs": "1",
        "trials": "2",
    }
    settings.update(extra)
    return spader.Config(settings)


def test_strategy_names():
    assert spader.STRATEGIES == [
        "VAE", "NAIVE_VAE_GRADCAM", "SPADE_NO_NORM", "SPADE", "CNN_REG", "VAE_CNN_REG", "SPADER",
    ]


def test_config_errors():
    with pytest.raises(spader.ConfigError):
        spader.Config({"no_such_key": "1"})
    cfg = small_config()
    cfg.set("vae_epochs", "2")
    assert "vae_epochs=2" in cfg.dump()


def test_auroc_matches_pairwise_count():
    rng = np.random.default_rng(0)
    scores = rng.integers(0, 5, size=60).astype(float)
    labels = rng.random(60) < 0.4
    normal, anomalous = scores[~labels], scores[labels]
    pairs = (normal[:, None] > anomalous[None, :]).sum() + 0.5 * (normal[:, None] == anomalous[None, :]).sum()
    expected = pairs / (normal.size * anomalous.size)
    assert spader.auroc(scores.tolist(), labels.tolist()) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        spader.auroc([1.0, 2.0], [False, False])


def test_loss_image_and_upsample():
    x = np.zeros((4, 4))
    y = np.full((4, 4), 0.25)
    assert np.allclose(spader.loss_image(x, y), 0.25)
    up = spader.upsample_bilinear(np.array([[0.0, 1.0], [2.0, 3.0]]), 3, 3)
    assert up[1, 1] == pytest.approx(1.5)
    assert up[0, 2] == pytest.approx(1.0)


def test_generate_splits():
    data = spader.generate(small_config())
    test = data["test"]
    assert test["images"].shape == (30, 28, 28)
    assert test["images"].min() >= 0.0 and test["images"].max() <= 1.0
    assert set(data["train_vae"]["roles"]) == {"normal"}
    assert set(data["train_reg"]["roles"]) == {"normal", "known_anomaly"}


def test_pipeline_and_scoring(tmp_path):
    cfg = small_config()
    result = spader.run_pipeline(cfg)
    assert len(result["scores"]) == 30 * 7
    assert len(result["vae_loss"]) == 1

    vae, reg = result["vae"], result["regressor"]
    x = spader.generate(cfg)["test"]["images"][0]
    scores = spader.score_image(x, 0, ["SPADER", "CNN_REG"], vae, reg, cfg)
    assert scores["CNN_REG"] == pytest.approx(reg.predict(x), abs=1e-15)

    identity = small_config(identity_reconstruction="true")
    same = spader.score_image(x, 0, ["VAE", "SPADE", "SPADER"], vae, reg, identity)
    assert same["VAE"] == 0.0 and same["SPADE"] == 0.0
    assert same["SPADER"] == reg.predict(x)

    cams = reg.cams(x)
    assert cams["signed"].shape == (28, 28)
    assert np.all(cams["signed"] >= cams["positive"] - 1e-12)

    vae.save(tmp_path / "vae.w")
    again = spader.load_vae(tmp_path / "vae.w")
    assert np.array_equal(again.reconstruct(x, seed=1)[0], vae.reconstruct(x, seed=1)[0])


def test_commands(tmp_path):
    cfg = small_config()
    spader.gen_data(cfg, tmp_path / "data")
    spader.train(cfg, tmp_path / "data", tmp_path / "weights")
    spader.score(cfg, tmp_path / "data", tmp_path / "weights", tmp_path / "scores.csv")
    rows = spader.read_scores(tmp_path / "scores.csv")
    assert len(rows) == 30 * 7
    summary = spader.evaluate([tmp_path / "scores.csv"], tmp_path / "results")
    assert [s["strategy"] for s in summary] == spader.STRATEGIES
    assert all(0.0 <= s["mean"] <= 1.0 for s in summary)

    with pytest.raises(spader.WeightsFormatError):
        (tmp_path / "bad.w").write_bytes(b"NOPE")
        spader.load_vae(tmp_path / "bad.w")
