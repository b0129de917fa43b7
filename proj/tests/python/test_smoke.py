"""Smoke tests for the python bindings (driven from the CMake build tree)."""

import json
import math

import pytest

sailab = pytest.importorskip("sailab")


def test_block_stats_oracle():
    s = sailab.block_stats([3.0, 4.0])
    assert s.g_norm == pytest.approx(5.0, abs=1e-15)
    assert s.g_var == pytest.approx(0.25, abs=1e-15)
    assert s.g_snr == pytest.approx(5.0 / (0.5 + 1e-8), rel=1e-12)


def test_normalize_scales():
    stats = [
        sailab.block_stats([3.0, 4.0], name="a"),
        sailab.block_stats([1.0, 2.0], name="b"),
    ]
    table = sailab.normalize(stats)
    assert table["scales"]["a"] == 1.0
    assert table["scales"]["b"] == pytest.approx(0.4472135954999579, rel=1e-9)
    assert not table["degenerate"]

    degenerate = sailab.normalize([sailab.block_stats([0.0, 0.0], name="z")])
    assert degenerate["degenerate"]
    assert degenerate["scales"]["z"] == 1.0


def test_memory_presets_match_published_numbers():
    presets = {p["name"] for p in sailab.arch_presets()}
    assert presets == {"gpt2-xl", "llama2-7b", "vit-s16", "vit-h14"}
    reported = {"sgdm": 5.93, "adamw": 11.86, "prodigy": 23.72, "sgd-sai": 5.93}
    for opt, gib in reported.items():
        est = sailab.estimate_state_memory("gpt2-xl", opt)
        assert abs(est["gibibytes"] - gib) / gib < 0.05
    mini = sailab.estimate_state_memory("gpt2-xl", "adam-mini")
    assert abs(mini["gibibytes"] - 6.52) / 6.52 < 0.10


def test_memory_ratio_identities():
    base = sailab.estimate_state_memory_spec(10_000, 1_000, 20, 30, 4, "sgdm")["bytes"]
    assert sailab.estimate_state_memory_spec(10_000, 1_000, 20, 30, 4, "adamw")["bytes"] == 2 * base
    assert sailab.estimate_state_memory_spec(10_000, 1_000, 20, 30, 4, "prodigy")["bytes"] == 4 * base
    assert (
        sailab.estimate_state_memory_spec(10_000, 1_000, 20, 30, 4, "sgd-sai")["bytes"]
        == base + 20 * 4
    )


TRAIN_CONFIG = {
    "model": {"type": "mlp", "input_dim": 2, "hidden_dims": [16], "output_dim": 2},
    "dataset": {"kind": "blobs", "size": 128, "noise": 0.1, "center": 5.0},
    "optimizer": "sgd-sai",
    "hyper": {"lr": 0.1, "weight_decay": 0.0},
    "steps": 200,
    "batch_size": 32,
    "seed": 42,
}


def test_run_training_solves_blobs_and_is_deterministic():
    rec1 = sailab.run_training(TRAIN_CONFIG)
    rec2 = sailab.run_training(json.dumps(TRAIN_CONFIG))
    assert rec1["final_metric"] >= 0.99
    assert not rec1["diverged"]
    assert rec1["losses"] == rec2["losses"]
    assert rec1["losses"][-1] < rec1["losses"][0]


def test_run_grid_summary_shape():
    grid = {
        "base": dict(TRAIN_CONFIG, steps=40),
        "lr": [0.1, 0.01],
        "wd": [0.001],
        "seeds": [1, 2],
    }
    res = sailab.run_grid(grid, ["sgdm", "sgd-sai"])
    assert len(res["cells"]) == 2 * 2 * 1 * 2
    names = {s["optimizer"] for s in res["summary"]}
    assert names == {"sgdm", "sgd-sai"}
    for s in res["summary"]:
        assert s["peak_mean"] >= s["avg_mean"] - 1e-12


def test_config_errors_raise():
    bad = dict(TRAIN_CONFIG, optimizer="nonesuch")
    with pytest.raises(Exception):
        sailab.run_training(bad)


def test_initial_copy_task_loss_is_ln_vocab():
    cfg = {
        "model": {
            "type": "tiny_transformer",
            "vocab_size": 64,
            "context_length": 16,
            "d_model": 32,
            "n_heads": 2,
            "n_layers": 1,
        },
        "dataset": {"kind": "copy_task", "size": 32},
        "optimizer": "sgdm",
        "hyper": {"lr": 0.001},
        "steps": 1,
        "batch_size": 16,
        "seed": 3,
    }
    rec = sailab.run_training(cfg)
    assert rec["losses"][0] == pytest.approx(math.log(64.0), rel=0.02)
