"""Training stages: array assembly, determinism, schedules, checkpoints."""

import numpy as np
import pytest
import torch

from mf_train.corpus import load_diffusion_corpus
from mf_train.errors import ConfigError, DataError, TrainingError
from mf_train.model import ModelSpec, OperatorModel
from mf_train.records import NormStats, RecordId, Sample
from mf_train.train import (TrainConfig, adapt, build_xy, check_stats_match,
                            evaluate_model, few_shot, load_checkpoint, mse,
                            predict, pretrain, run_stage, save_checkpoint)


def small_config(**kw) -> TrainConfig:
    base = dict(lr_heads=2e-3, lr_backbone=5e-4, batch_size=4, epochs=3)
    base.update(kw)
    return TrainConfig(**base)


def small_model(in_c: int, out_c: int = 1, seed: int = 0) -> OperatorModel:
    return OperatorModel(ModelSpec(in_c, out_c, width=12, depth=2), seed=seed)


# ---------------------------------------------------------------------------
# configuration


@pytest.mark.parametrize("kw", [
    {"lr_heads": 0.0},
    {"lr_backbone": -1e-3},
    {"lr_calibration_scale": 0.0},
    {"lr_calibration_scale": 1.5},
    {"batch_size": 0},
    {"epochs": 0},
])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_config_json_round_trip():
    cfg = TrainConfig(epochs=7)
    blob = cfg.to_json()
    assert blob["epochs"] == 7
    assert TrainConfig(**blob) == cfg


# ---------------------------------------------------------------------------
# array assembly


def test_build_xy_steady_shapes_and_standardization(tiny_case_ds):
    ds = tiny_case_ds
    stats = ds.norm_stats()
    samples = ds.load_split("train", "high")
    x, y = build_xy(samples, stats, ds.power_channels)
    c = len(ds.power_channels)
    assert x.shape == (3, c, 16, 16) and y.shape == (3, 1, 16, 16)
    # standardization must invert back to the stored kelvin field
    back = stats.denormalize("temperature", y[0, 0])
    assert np.max(np.abs(back - samples[0].temp)) < 1e-3


def test_build_xy_transient_folds_frames_into_channels(tiny_transient_ds):
    ds = tiny_transient_ds
    samples = ds.load_split("train", "high")
    f = samples[0].temp.shape[0]
    c = len(ds.power_channels)
    assert samples[0].times is not None and len(samples[0].times) == f
    x, y = build_xy(samples, ds.norm_stats(), ds.power_channels)
    assert x.shape == (len(samples), f * c, 16, 16)
    assert y.shape == (len(samples), f, 16, 16)
    # frame-major folding: block k of x is frame k of the power tensor
    stats = ds.norm_stats()
    want = stats.normalize(ds.power_channels[0], samples[0].power[1, 0])
    assert np.array_equal(x[0, c], want)


def test_build_xy_rejects_unknown_rank(tiny_case_ds):
    bad = Sample(RecordId("train", "high", 0),
                 power=np.zeros((4, 4), dtype=np.float32),
                 pvec=np.zeros(1, dtype=np.float32),
                 temp=np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(DataError, match="rank"):
        build_xy([bad], tiny_case_ds.norm_stats(),
                 tiny_case_ds.power_channels)


# ---------------------------------------------------------------------------
# stage runner


def test_run_stage_overfits_single_sample(tiny_case_ds):
    ds = tiny_case_ds
    x, y = build_xy(ds.load_split("train", "high", limit=1),
                    ds.norm_stats(), ds.power_channels)
    model = small_model(x.shape[1])
    curve = run_stage(model, x, y, small_config(batch_size=1, epochs=250))
    assert curve[-1] < 1e-2 < curve[0]
    assert mse(model, x, y) < 1e-2


def test_run_stage_is_deterministic(tiny_case_ds):
    ds = tiny_case_ds
    x, y = build_xy(ds.load_split("train"), ds.norm_stats(),
                    ds.power_channels)
    curves, finals = [], []
    for _ in range(2):
        model = small_model(x.shape[1], seed=3)
        curves.append(run_stage(model, x, y, small_config(seed=3)))
        finals.append(predict(model, x))
    assert curves[0] == curves[1]
    assert np.array_equal(finals[0], finals[1])


def test_run_stage_rejects_empty_set():
    model = small_model(1)
    empty = np.zeros((0, 1, 8, 8), dtype=np.float32)
    with pytest.raises(TrainingError, match="empty"):
        run_stage(model, empty, empty[:, :1], small_config())


def test_divergence_reports_config():
    model = small_model(1)
    x = np.full((2, 1, 8, 8), np.nan, dtype=np.float32)
    y = np.zeros((2, 1, 8, 8), dtype=np.float32)
    with pytest.raises(TrainingError, match="diverged") as err:
        run_stage(model, x, y, small_config(epochs=1))
    assert "lr_heads" in str(err.value)


# ---------------------------------------------------------------------------
# schedules


def test_pretrain_reduces_held_out_loss(small_corpus):
    x, y, index = load_diffusion_corpus(small_corpus)
    per = x.shape[0] // len(index["stacks"])
    x_tr, y_tr = x[:-per], y[:-per]          # hold out the last stack
    x_ho, y_ho = x[-per:], y[-per:]
    model = small_model(x.shape[1], seed=0)
    before = mse(model, x_ho, y_ho)
    result = pretrain(model, x_tr, y_tr, small_config(epochs=80))
    assert result.init_loss == pytest.approx(mse(small_model(x.shape[1],
                                                             seed=0),
                                                 x_tr, y_tr))
    assert len(result.curve) == 80
    assert result.curve[-1] < result.init_loss / 3
    after = mse(result.model, x_ho, y_ho)
    assert after < 0.8 * before


def test_adapt_runs_both_stages(tiny_case_ds):
    ds = tiny_case_ds
    stats, chans = ds.norm_stats(), ds.power_channels
    lf = build_xy(ds.load_split("train", "low"), stats, chans)
    hf = build_xy(ds.load_split("train", "high"), stats, chans)
    val = build_xy(ds.load_split("val"), stats, chans)
    cfg = small_config(epochs=4)
    result = adapt(small_model(hf[0].shape[1]), lf, hf, cfg, val=val)
    assert set(result.curves) == {"stage1", "stage2"}
    assert len(result.curves["stage1"]) == len(result.curves["stage2"]) == 4
    assert set(result.val_mse) == {"stage1", "stage2"}
    assert all(np.isfinite(v) for v in result.val_mse.values())


def test_adapt_without_low_fidelity_degenerates(tiny_case_ds):
    ds = tiny_case_ds
    hf = build_xy(ds.load_split("train", "high"), ds.norm_stats(),
                  ds.power_channels)
    cfg = small_config(epochs=6)
    result = adapt(small_model(hf[0].shape[1]), None, hf, cfg)
    # stage 2 continues on the same data at reduced rates: no regression
    assert result.curves["stage2"][-1] <= 1.05 * result.curves["stage1"][-1]


def test_adapt_requires_high_fidelity(tiny_case_ds):
    ds = tiny_case_ds
    lf = build_xy(ds.load_split("train", "low"), ds.norm_stats(),
                  ds.power_channels)
    empty = (np.zeros((0,) + lf[0].shape[1:], dtype=np.float32),
             np.zeros((0,) + lf[1].shape[1:], dtype=np.float32))
    with pytest.raises(TrainingError, match="high-fidelity"):
        adapt(small_model(lf[0].shape[1]), lf, empty, small_config())
    with pytest.raises(TrainingError, match="high-fidelity"):
        adapt(small_model(lf[0].shape[1]), lf, None, small_config())


def test_few_shot_nested_subsets(tiny_case_ds):
    ds = tiny_case_ds
    pool = build_xy(ds.load_split("train"), ds.norm_stats(),
                    ds.power_channels)
    source = small_model(pool[0].shape[1], seed=2)
    frozen = [p.detach().clone() for p in source.parameters()]
    out = few_shot(source, pool, [1, 3], small_config(epochs=2))
    assert set(out) == {1, 3}
    for p, q in zip(source.parameters(), frozen):     # source untouched
        assert torch.equal(p, q)
    assert not np.array_equal(predict(out[1], pool[0]),
                              predict(out[3], pool[0]))


def test_few_shot_rejects_oversized_n(tiny_case_ds):
    ds = tiny_case_ds
    pool = build_xy(ds.load_split("train"), ds.norm_stats(),
                    ds.power_channels)
    with pytest.raises(TrainingError, match="exceeds"):
        few_shot(small_model(pool[0].shape[1]), pool, [999], small_config())


# ---------------------------------------------------------------------------
# evaluation and persistence


def test_evaluate_model_reports_kelvin_errors(tiny_case_ds):
    ds = tiny_case_ds
    samples = ds.load_split("test")
    report = evaluate_model(small_model(len(ds.power_channels)), samples,
                            ds.norm_stats(), ds.power_channels)
    assert report.n_samples == 2
    assert np.isfinite(report.rmse) and report.rmse > 0
    with pytest.raises(DataError, match="empty"):
        evaluate_model(small_model(1), [], ds.norm_stats(),
                       ds.power_channels)


def test_checkpoint_round_trip(tmp_path, tiny_case_ds):
    ds = tiny_case_ds
    x, _ = build_xy(ds.load_split("val"), ds.norm_stats(),
                    ds.power_channels)
    model = small_model(x.shape[1], seed=7)
    path = tmp_path / "ck" / "model.pt"
    save_checkpoint(path, model, ds.norm_stats(), {"kind": "test"})
    loaded, stats, meta = load_checkpoint(path)
    assert meta["kind"] == "test"
    assert stats.channels == ds.norm_stats().channels
    assert np.array_equal(predict(loaded, x), predict(model, x))
    with pytest.raises(DataError, match="no checkpoint"):
        load_checkpoint(tmp_path / "absent.pt")


def test_stats_mismatch_is_refused(tiny_case_ds):
    ds = tiny_case_ds
    good = ds.norm_stats()
    check_stats_match(good, ds)
    shifted = dict(good.channels)
    name, (m, s) = next(iter(shifted.items()))
    shifted[name] = (m + 1.0, s)
    with pytest.raises(DataError, match="mismatch"):
        check_stats_match(NormStats(channels=shifted), ds)
