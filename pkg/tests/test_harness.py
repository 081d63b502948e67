"""Experiment harness: config validation, derived seeds, artifacts,
reproducibility, the temperature sweep, and the ablation grid."""

import json

import numpy as np
import pytest

from promptlab import ConfigError, Dataset, VisualPrompt, load_prompt, save_raw
from promptlab.harness import (
    ExperimentConfig,
    default_config,
    export_prompt_image,
    run_ablation_grid,
    run_experiment,
    sweep_temperature,
)
from promptlab.metrics import read_metrics


def small_config(seed=0, out="runs/t", **tweaks):
    cfg = {
        "seed": seed,
        "output_dir": str(out),
        "source": {
            "spec": {
                "input_size": [1, 16, 16],
                "conv_blocks": [[6, 3, 2]],
                "hidden_width": 24,
                "n_classes": 8,
            },
            "regime": "standard",
            "hyper": {"epochs": 3, "batch_size": 16, "learning_rate": 0.05, "momentum": 0.9},
            "at_hyper": {"epochs": 2, "learning_rate": 0.02},
            "attack": {"epsilon": 0.05},
            "checkpoint": None,
        },
        "prompt": {
            "pad_width": 4,
            "lm": "ilm",
            "temperature": 2,
            "temperature_grid": [1, 2, 4],
            "hyper": {"epochs": 3, "batch_size": 16, "learning_rate": 0.2, "momentum": 0.9},
            "adversarial": False,
            "attack": {"epsilon": 0.05},
        },
        "eval": {"epsilon_grid": [0.0, 0.05], "metrics_epsilon": 0.05},
        "data": {
            "source": {
                "n_classes": 8,
                "samples_per_class": 8,
                "test_samples_per_class": 4,
                "image_size": [1, 16, 16],
                "noise_level": 0.45,
            },
            "downstream": {
                "n_classes": 2,
                "samples_per_class": 8,
                "test_samples_per_class": 6,
                "image_size": [1, 8, 8],
                "noise_level": 0.40,
            },
        },
    }
    for dotted, value in tweaks.items():
        node = cfg
        *head, leaf = dotted.split("__")
        for key in head:
            node = node[key]
        node[leaf] = value
    return cfg


# ---------------------------------------------------------------------------
# config parsing and validation


def test_default_config_is_valid():
    cfg = ExperimentConfig.from_dict(default_config())
    assert cfg.temperature == 2
    assert cfg.temperature_grid == [1, 2, 4]
    assert cfg.source_spec.n_classes == 20


def test_overrides_replace_seed_and_output(tmp_path):
    cfg = ExperimentConfig.from_dict(
        small_config(seed=3), seed_override=9, out_override=tmp_path / "x"
    )
    assert cfg.seed == 9
    assert cfg.raw["seed"] == 9
    assert cfg.output_dir == tmp_path / "x"


def test_derived_seed_oracle():
    """Slot layout: one generate_state call on the master sequence."""
    cfg = ExperimentConfig.from_dict(small_config(seed=17))
    state = np.random.SeedSequence(17).generate_state(8, dtype=np.uint64)
    expected = {
        "source_train_data": int(state[0]),
        "source_test_data": int(state[1]),
        "downstream_train_data": int(state[2]),
        "downstream_test_data": int(state[3]),
        "source_init": int(state[4]),
        "source_train": int(state[5]),
        "prompt_train": int(state[6]),
        "source_at": int(state[7]),
    }
    assert cfg.derived_seeds == expected
    assert len(set(expected.values())) == 8  # no slot collisions


def test_hyper_accessors_bind_derived_seeds():
    cfg = ExperimentConfig.from_dict(small_config(seed=17))
    assert cfg.source_hyper().seed == cfg.derived_seeds["source_train"]
    assert cfg.prompt_hyper().seed == cfg.derived_seeds["prompt_train"]
    at = cfg.source_at_hyper()
    assert at.seed == cfg.derived_seeds["source_at"]
    # adversarial phase inherits batch size and momentum from the base recipe
    assert at.batch_size == 16
    assert at.momentum == 0.9
    assert at.epochs == 2


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda c: c.pop("seed"), "missing key 'seed'"),
        (lambda c: c["source"].pop("spec"), "source.spec"),
        (lambda c: c["source"]["hyper"].pop("epochs"), "source.hyper"),
        (lambda c: c["source"].__setitem__("regime", "fast"), "regime"),
        (lambda c: c["prompt"].__setitem__("lm", "xlm"), "prompt.lm"),
        (lambda c: c["eval"].__setitem__("epsilon_grid", [-0.1]), "non-negative"),
        (lambda c: c["prompt"].__setitem__("temperature", 8), r"m=1 < K_t=2"),
        (lambda c: c["prompt"].__setitem__("pad_width", 3), "prompt interior"),
        (lambda c: c["source"].__setitem__("checkpoint", "no/such.ckpt"), "checkpoint"),
    ],
)
def test_config_validation_messages(mutate, fragment):
    raw = small_config()
    mutate(raw)
    with pytest.raises(ConfigError, match=fragment):
        ExperimentConfig.from_dict(raw)


def test_from_file_round_trip_and_errors(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_config(seed=5)))
    cfg = ExperimentConfig.from_file(path)
    assert cfg.seed == 5
    with pytest.raises(ConfigError, match="not found"):
        ExperimentConfig.from_file(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.from_file(bad)


# ---------------------------------------------------------------------------
# dataset construction


def test_datasets_have_the_configured_geometry():
    data = ExperimentConfig.from_dict(small_config()).datasets()
    assert data["source_train"].images.shape == (64, 1, 16, 16)
    assert data["source_test"].images.shape == (32, 1, 16, 16)
    assert data["downstream_train"].images.shape == (16, 1, 8, 8)
    assert data["downstream_test"].images.shape == (12, 1, 8, 8)
    assert data["source_test"].split == "test"
    assert data["downstream_train"].n_classes == 2


def test_datasets_are_deterministic_and_split_independent():
    a = ExperimentConfig.from_dict(small_config()).datasets()
    b = ExperimentConfig.from_dict(small_config()).datasets()
    for key in a:
        assert a[key].images.tobytes() == b[key].images.tobytes()
    # train and test draw from different derived seeds
    assert a["source_train"].images[:32].tobytes() != a["source_test"].images.tobytes()


def test_file_backed_datasets(tmp_path):
    synthetic = ExperimentConfig.from_dict(small_config()).datasets()
    files = {}
    for key, ds in synthetic.items():
        path = tmp_path / f"{key}.vpds"
        save_raw(path, ds)
        files[key] = str(path)
    raw = small_config()
    raw["data"] = {"files": files}
    loaded = ExperimentConfig.from_dict(raw).datasets()
    for key in files:
        assert loaded[key].images.shape == synthetic[key].images.shape
        assert np.array_equal(loaded[key].labels, synthetic[key].labels)


def test_file_backed_datasets_require_existing_paths(tmp_path):
    raw = small_config()
    raw["data"] = {
        "files": {
            "source_train": str(tmp_path / "a.vpds"),
            "source_test": str(tmp_path / "b.vpds"),
            "downstream_train": str(tmp_path / "c.vpds"),
            "downstream_test": str(tmp_path / "d.vpds"),
        }
    }
    with pytest.raises(ConfigError, match="does not exist"):
        ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# full pipeline runs


@pytest.fixture(scope="module")
def experiment_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    report = run_experiment(small_config(out=out))
    return out, report


def test_run_writes_all_artifacts(experiment_run):
    out, _ = experiment_run
    for name in (
        "source_metrics.csv",
        "source.ckpt",
        "prompt_metrics.csv",
        "prompt.ckpt",
        "prompt.ppm",
        "report.json",
        "config.json",
        "timing.json",
    ):
        assert (out / name).exists(), name


def test_report_matches_metrics_and_disk(experiment_run):
    out, report = experiment_run
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk == report
    prompt_records = read_metrics(out / "prompt_metrics.csv")
    assert report["final_std_acc"] == pytest.approx(prompt_records[-1].std_acc, abs=5e-7)
    assert report["final_adv_acc"] == pytest.approx(prompt_records[-1].adv_acc, abs=5e-7)
    assert report["temperature"] == 2
    mapping = report["label_mapping"]
    assert mapping["kind"] == "ilm"
    assert len(mapping["indices"]) == 2
    assert len(set(mapping["indices"])) == 2  # injective
    eval_rows = report["prompt_eval"]
    assert [row["epsilon"] for row in eval_rows] == [0.0, 0.05]
    zero = eval_rows[0]
    # a zero-budget attack cannot flip anything that was already correct
    assert zero["adversarial_accuracy"] == 1.0
    assert zero["n_survived_attack"] == zero["n_correct"]


def test_saved_prompt_checkpoint_is_loadable(experiment_run):
    out, report = experiment_run
    prompt, temperature = load_prompt(out / "prompt.ckpt")
    assert temperature == report["temperature"]
    assert prompt.canvas == (1, 16, 16)
    assert prompt.pad_width == 4
    assert not prompt.params.data[~prompt.mask].any()


def test_config_json_records_derived_seeds(experiment_run):
    out, _ = experiment_run
    stored = json.loads((out / "config.json").read_text())
    assert stored["derived_seeds"] == ExperimentConfig.from_dict(small_config()).derived_seeds
    assert stored["seed"] == 0


def test_rerun_is_bitwise_identical(experiment_run, tmp_path):
    out, report = experiment_run
    again = run_experiment(small_config(out=tmp_path / "again"))
    assert again == report
    for name in ("source_metrics.csv", "prompt_metrics.csv", "source.ckpt", "prompt.ckpt", "prompt.ppm"):
        assert (tmp_path / "again" / name).read_bytes() == (out / name).read_bytes(), name


def test_seed_changes_results(experiment_run, tmp_path):
    out, _ = experiment_run
    other = run_experiment(small_config(seed=1, out=tmp_path / "other"))
    assert (tmp_path / "other" / "source.ckpt").read_bytes() != (out / "source.ckpt").read_bytes()
    assert other["seed"] == 1


def test_checkpoint_reuse_skips_source_training(experiment_run, tmp_path):
    out, _ = experiment_run
    cfg = small_config(out=tmp_path / "reuse", source__checkpoint=str(out / "source.ckpt"))
    run_experiment(cfg)
    reused = tmp_path / "reuse"
    assert not (reused / "source_metrics.csv").exists()
    assert (reused / "source.ckpt").read_bytes() == (out / "source.ckpt").read_bytes()
    # same frozen source + same derived prompt seed => identical prompt phase
    assert (reused / "prompt_metrics.csv").read_bytes() == (out / "prompt_metrics.csv").read_bytes()


def test_adversarial_regime_extends_source_metrics(tmp_path):
    run_experiment(small_config(out=tmp_path, source__regime="adversarial"))
    records = read_metrics(tmp_path / "source_metrics.csv")
    assert [r.epoch for r in records] == [0, 1, 2, 3, 4]  # 3 standard + 2 adversarial


# ---------------------------------------------------------------------------
# sweep and ablation


def test_sweep_t1_delta_is_exactly_zero(tmp_path):
    rows = sweep_temperature(small_config(out=tmp_path), temperatures=[1, 2])
    assert [r["T"] for r in rows] == [1, 2]
    assert rows[0]["std_delta"] == 0.0
    assert rows[0]["adv_delta"] == 0.0
    assert rows[0]["m"] == 8
    assert rows[1]["m"] == 4
    text = (tmp_path / "sweep.csv").read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "T,m,std_acc,adv_acc,std_delta,adv_delta"
    assert len(lines) == 3
    assert lines[1].startswith("1,8,")


def test_ablation_grid_cells_and_costs(tmp_path):
    rows = run_ablation_grid(small_config(out=tmp_path))
    assert [(r["pbl"], r["at"]) for r in rows] == [
        (False, False),
        (False, True),
        (True, False),
        (True, True),
    ]
    assert [r["T"] for r in rows] == [1, 1, 2, 2]
    by_cell = {(r["pbl"], r["at"]): r for r in rows}
    for pbl in (False, True):
        assert (
            by_cell[(pbl, True)]["wall_ms_per_epoch"] > by_cell[(pbl, False)]["wall_ms_per_epoch"]
        )
    lines = (tmp_path / "ablation.csv").read_text().strip().split("\n")
    assert lines[0] == "pbl,at,T,std_acc,adv_acc,wall_ms_per_epoch,peak_mem_bytes"
    assert len(lines) == 5


# ---------------------------------------------------------------------------
# prompt image export


def test_export_prompt_image_bytes(tmp_path):
    prompt = VisualPrompt((1, 4, 4), 1)
    prompt.params.data[prompt.mask] = 1.0
    path = tmp_path / "p.ppm"
    export_prompt_image(prompt, path)
    blob = path.read_bytes()
    header = b"P6\n4 4\n255\n"
    assert blob.startswith(header)
    body = np.frombuffer(blob[len(header):], dtype=np.uint8).reshape(4, 4, 3)
    assert (body[0] == 255).all()  # top border row
    assert (body[1, 1] == 128).all()  # mid-gray interior, replicated to RGB
    assert body.shape == (4, 4, 3)


def test_export_prompt_image_rejects_two_channels(tmp_path):
    prompt = VisualPrompt((2, 4, 4), 1)
    with pytest.raises(ConfigError, match="channels"):
        export_prompt_image(prompt, tmp_path / "p.ppm")
