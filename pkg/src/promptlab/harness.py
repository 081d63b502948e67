"""Config-driven experiment orchestration.

A single JSON config describes the source model (architecture, training
regime, hyperparameters), the prompt (frame width, label mapping,
temperature, hyperparameters, optional adversarial training), the
evaluation grid, and the data (a synthetic source/downstream pair or
paths to binary dataset files).  Everything a run writes — metrics
CSVs, checkpoints, the final report — is a pure function of
(config, seed); real elapsed times go to a separate timing sidecar
that is excluded from that guarantee.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .attack import AttackConfig, adversarial_accuracy, standard_accuracy
from .checkpoint import load_model, save_model, save_prompt
from .data import Dataset, SynthSpec, generate_synthetic, load_raw, peek_raw_header
from .errors import ConfigError
from .mapping import PblConfig
from .metrics import write_metrics
from .nets import ConvNetSpec, ModelParams, init_params
from .prompt import VisualPrompt
from .train import TrainHyper, train_adversarial, train_prompt, train_standard

__all__ = [
    "ExperimentConfig",
    "default_config",
    "run_experiment",
    "sweep_temperature",
    "run_ablation_grid",
    "export_prompt_image",
]

# fixed positions in the seed-derivation table; changing them changes every run
_SEED_SLOTS = {
    "source_train_data": 0,
    "source_test_data": 1,
    "downstream_train_data": 2,
    "downstream_test_data": 3,
    "source_init": 4,
    "source_train": 5,
    "prompt_train": 6,
    "source_at": 7,
}


def _derive_seeds(seed: int) -> dict[str, int]:
    state = np.random.SeedSequence(seed).generate_state(len(_SEED_SLOTS), dtype=np.uint64)
    return {name: int(state[slot]) for name, slot in _SEED_SLOTS.items()}


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"config is missing key '{where}.{key}'" if where else f"config is missing key '{key}'")
    return d[key]


def default_config(seed: int = 0, output_dir: str = "runs/default") -> dict:
    """The desk-scale default grid; every key is overridable."""
    return {
        "seed": seed,
        "output_dir": output_dir,
        "source": {
            "spec": {
                "input_size": [1, 32, 32],
                "conv_blocks": [[8, 3, 2], [16, 3, 2]],
                "hidden_width": 64,
                "n_classes": 20,
            },
            "regime": "standard",
            # Standard recipe; in the adversarial regime it doubles as the
            # warm-start phase before the adversarial epochs below.
            "hyper": {"epochs": 10, "batch_size": 32, "learning_rate": 0.05, "momentum": 0.9},
            "at_hyper": {"epochs": 25, "learning_rate": 0.015},
            "attack": {"epsilon": 0.05},
            "checkpoint": None,
        },
        "prompt": {
            "pad_width": 4,
            "lm": "ilm",
            "temperature": 2,
            "temperature_grid": [1, 2, 4],
            "hyper": {"epochs": 20, "batch_size": 32, "learning_rate": 0.2, "momentum": 0.9},
            "adversarial": False,
            "attack": {"epsilon": 0.05},
        },
        "eval": {"epsilon_grid": [0.0, 0.02, 0.05, 0.1], "metrics_epsilon": 0.05},
        "data": {
            "source": {
                "n_classes": 20,
                "samples_per_class": 30,
                "test_samples_per_class": 10,
                "image_size": [1, 32, 32],
                "noise_level": 0.45,
            },
            "downstream": {
                "n_classes": 5,
                "samples_per_class": 40,
                "test_samples_per_class": 60,
                "image_size": [1, 24, 24],
                "noise_level": 0.40,
            },
        },
    }


@dataclass
class ExperimentConfig:
    """Validated view of one experiment's JSON config."""

    raw: dict
    seed: int
    output_dir: Path
    source_spec: ConvNetSpec
    source_regime: str
    source_attack: AttackConfig
    source_checkpoint: Path | None
    pad_width: int
    lm: str
    temperature: int
    temperature_grid: list[int]
    prompt_adversarial: bool
    prompt_attack: AttackConfig
    epsilon_grid: list[float]
    metrics_epsilon: float
    derived_seeds: dict[str, int]

    @classmethod
    def from_dict(cls, raw: dict, seed_override: int | None = None, out_override=None) -> "ExperimentConfig":
        raw = json.loads(json.dumps(raw))  # defensive deep copy
        seed = int(_need(raw, "seed", "")) if seed_override is None else int(seed_override)
        raw["seed"] = seed
        if out_override is not None:
            raw["output_dir"] = str(out_override)
        output_dir = Path(_need(raw, "output_dir", ""))

        src = _need(raw, "source", "")
        spec_d = _need(src, "spec", "source")
        spec = ConvNetSpec(
            input_size=tuple(_need(spec_d, "input_size", "source.spec")),
            conv_blocks=tuple(tuple(b) for b in _need(spec_d, "conv_blocks", "source.spec")),
            hidden_width=int(_need(spec_d, "hidden_width", "source.spec")),
            n_classes=int(_need(spec_d, "n_classes", "source.spec")),
        )
        regime = _need(src, "regime", "source")
        if regime not in ("standard", "adversarial"):
            raise ConfigError(f"source.regime must be 'standard' or 'adversarial', got {regime!r}")
        src_attack = AttackConfig(float(_need(_need(src, "attack", "source"), "epsilon", "source.attack")))
        ckpt = src.get("checkpoint")
        ckpt_path = Path(ckpt) if ckpt else None
        if ckpt_path is not None and not ckpt_path.exists():
            raise ConfigError(f"source.checkpoint path does not exist: {ckpt_path}")

        pr = _need(raw, "prompt", "")
        pad_width = int(_need(pr, "pad_width", "prompt"))
        lm = _need(pr, "lm", "prompt")
        if lm not in ("rlm", "ilm"):
            raise ConfigError(f"prompt.lm must be 'rlm' or 'ilm', got {lm!r}")
        temperature = int(_need(pr, "temperature", "prompt"))
        grid = [int(t) for t in pr.get("temperature_grid", [1, 2, 4])]
        adversarial = bool(_need(pr, "adversarial", "prompt"))
        pr_attack = AttackConfig(float(_need(_need(pr, "attack", "prompt"), "epsilon", "prompt.attack")))

        ev = _need(raw, "eval", "")
        eps_grid = [float(e) for e in _need(ev, "epsilon_grid", "eval")]
        if any(e < 0 for e in eps_grid):
            raise ConfigError(f"eval.epsilon_grid must be non-negative, got {eps_grid}")
        metrics_eps = float(ev.get("metrics_epsilon", 0.05))

        derived = _derive_seeds(seed)
        cfg = cls(
            raw=raw,
            seed=seed,
            output_dir=output_dir,
            source_spec=spec,
            source_regime=regime,
            source_attack=src_attack,
            source_checkpoint=ckpt_path,
            pad_width=pad_width,
            lm=lm,
            temperature=temperature,
            temperature_grid=grid,
            prompt_adversarial=adversarial,
            prompt_attack=pr_attack,
            epsilon_grid=eps_grid,
            metrics_epsilon=metrics_eps,
            derived_seeds=derived,
        )
        cfg._validate()
        return cfg

    @classmethod
    def from_file(cls, path, seed_override=None, out_override=None) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw, seed_override=seed_override, out_override=out_override)

    # -- hyper / data accessors -------------------------------------------

    def _hyper(self, section: str, slot: str) -> TrainHyper:
        h = _need(_need(self.raw, section, ""), "hyper", section)
        return TrainHyper(
            epochs=int(_need(h, "epochs", f"{section}.hyper")),
            batch_size=int(_need(h, "batch_size", f"{section}.hyper")),
            learning_rate=float(_need(h, "learning_rate", f"{section}.hyper")),
            momentum=float(_need(h, "momentum", f"{section}.hyper")),
            seed=self.derived_seeds[slot],
        )

    def source_hyper(self) -> TrainHyper:
        return self._hyper("source", "source_train")

    def source_at_hyper(self) -> TrainHyper:
        """Adversarial-phase recipe; batch size and momentum follow source.hyper."""
        src = _need(self.raw, "source", "")
        at = _need(src, "at_hyper", "source")
        base = _need(src, "hyper", "source")
        return TrainHyper(
            epochs=int(_need(at, "epochs", "source.at_hyper")),
            batch_size=int(_need(base, "batch_size", "source.hyper")),
            learning_rate=float(_need(at, "learning_rate", "source.at_hyper")),
            momentum=float(_need(base, "momentum", "source.hyper")),
            seed=self.derived_seeds["source_at"],
        )

    def prompt_hyper(self) -> TrainHyper:
        return self._hyper("prompt", "prompt_train")

    def pbl(self, temperature: int | None = None) -> PblConfig | None:
        t = self.temperature if temperature is None else temperature
        return PblConfig(temperature=t, n=self.source_spec.n_classes)

    def _synth(self, section: dict, style: str, split: str, seed: int) -> Dataset:
        per_class = (
            section["samples_per_class"] if split == "train" else section["test_samples_per_class"]
        )
        spec = SynthSpec(
            n_classes=int(section["n_classes"]),
            samples_per_class=int(per_class),
            image_size=tuple(section["image_size"]),
            style=style,
            noise_level=float(section["noise_level"]),
            seed=seed,
        )
        return generate_synthetic(spec, split=split)

    def datasets(self) -> dict[str, Dataset]:
        data = _need(self.raw, "data", "")
        ds = self.derived_seeds
        if "files" in data:
            files = data["files"]
            out = {}
            for key in ("source_train", "source_test", "downstream_train", "downstream_test"):
                path = Path(_need(files, key, "data.files"))
                split = "train" if key.endswith("train") else "test"
                out[key] = load_raw(path, split=split)
            return out
        src = _need(data, "source", "data")
        dst = _need(data, "downstream", "data")
        for section, where in ((src, "data.source"), (dst, "data.downstream")):
            for key in ("n_classes", "samples_per_class", "test_samples_per_class", "image_size", "noise_level"):
                _need(section, key, where)
        return {
            "source_train": self._synth(src, "source", "train", ds["source_train_data"]),
            "source_test": self._synth(src, "source", "test", ds["source_test_data"]),
            "downstream_train": self._synth(dst, "downstream", "train", ds["downstream_train_data"]),
            "downstream_test": self._synth(dst, "downstream", "test", ds["downstream_test_data"]),
        }

    # -- validation --------------------------------------------------------

    def _data_geometry(self) -> tuple[int, tuple[int, int, int]]:
        """(K_t, downstream image size) without generating full datasets."""
        data = _need(self.raw, "data", "")
        if "files" in data:
            path = Path(_need(data["files"], "downstream_train", "data.files"))
            if not path.exists():
                raise ConfigError(f"data.files.downstream_train path does not exist: {path}")
            hdr = peek_raw_header(path)
            return hdr["n_classes"], (hdr["c"], hdr["h"], hdr["w"])
        dst = _need(data, "downstream", "data")
        return int(_need(dst, "n_classes", "data.downstream")), tuple(_need(dst, "image_size", "data.downstream"))

    def _validate(self) -> None:
        data = _need(self.raw, "data", "")
        if "files" in data:
            for key in ("source_train", "source_test", "downstream_train", "downstream_test"):
                path = Path(_need(data["files"], key, "data.files"))
                if not path.exists():
                    raise ConfigError(f"data.files.{key} path does not exist: {path}")
        k_t, (c, h, w) = self._data_geometry()
        for t in set(self.temperature_grid) | {self.temperature}:
            if t < 1:
                raise ConfigError(f"temperature must be >= 1, got {t}")
            m = PblConfig(temperature=t, n=self.source_spec.n_classes).m
            if m < k_t:
                raise ConfigError(
                    f"temperature T={t} reduces {self.source_spec.n_classes} source logits to "
                    f"m={m} < K_t={k_t} downstream classes"
                )
        sc, sh, sw = self.source_spec.input_size
        want = (sc, sh - 2 * self.pad_width, sw - 2 * self.pad_width)
        if (c, h, w) != want:
            raise ConfigError(
                f"downstream images {(c, h, w)} do not fill the prompt interior {want} "
                f"(canvas {self.source_spec.input_size}, pad_width {self.pad_width})"
            )
        # hyper blocks must parse (TrainHyper validates its own fields)
        self.source_hyper()
        self.prompt_hyper()


# ---------------------------------------------------------------------------
# experiment phases
# ---------------------------------------------------------------------------


def _prepare_source(cfg: ExperimentConfig, data: dict[str, Dataset], out: Path, timing: dict):
    """Train (or load) the source model; returns it frozen."""
    if cfg.source_checkpoint is not None:
        params = load_model(cfg.source_checkpoint, cfg.source_spec, frozen=True)
        save_model(out / "source.ckpt", params)
        return params
    t0 = time.perf_counter()
    params = init_params(cfg.source_spec, cfg.derived_seeds["source_init"])
    hyper = cfg.source_hyper()
    params, records = train_standard(
        params, data["source_train"], hyper,
        eval_dataset=data["source_test"], metrics_epsilon=cfg.metrics_epsilon,
    )
    if cfg.source_regime == "adversarial":
        # Adversarial training from scratch tends to fall into the
        # constant-output minimum on weak-signal tasks, so the robust
        # recipe warm-starts from the standard phase above and then
        # replaces every batch with its attacked counterpart.
        params, at_records = train_adversarial(
            params, data["source_train"], cfg.source_at_hyper(), cfg.source_attack,
            eval_dataset=data["source_test"], metrics_epsilon=cfg.metrics_epsilon,
        )
        offset = records[-1].epoch + 1
        records = records + [replace(r, epoch=r.epoch + offset) for r in at_records]
    timing["source_train_s"] = time.perf_counter() - t0
    write_metrics(records, out / "source_metrics.csv")
    save_model(out / "source.ckpt", params)
    params.freeze()
    return params


def _train_prompt_phase(cfg, source, data, temperature, adversarial):
    pbl = cfg.pbl(temperature) if temperature is not None else None
    return train_prompt(
        source,
        data["downstream_train"],
        cfg.lm,
        pbl,
        cfg.prompt_hyper(),
        adversarial=adversarial,
        attack=cfg.prompt_attack if adversarial else None,
        pad_width=cfg.pad_width,
        eval_dataset=data["downstream_test"],
        metrics_epsilon=cfg.metrics_epsilon,
    )


def _eval_grid(pipeline, dataset, grid) -> list[dict]:
    rows = []
    for eps in grid:
        report = adversarial_accuracy(pipeline, dataset, AttackConfig(eps))
        rows.append({"epsilon": eps, **asdict(report)})
    return rows


def run_experiment(config, seed_override=None, out_override=None) -> dict:
    """Full pipeline: source phase, prompt phase, evaluation sweep.

    ``config`` may be an ExperimentConfig, a dict, or a path to a JSON
    file.  Returns a summary dict mirroring what lands in report.json.
    """
    cfg = _coerce(config, seed_override, out_override)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    timing: dict[str, float] = {}
    data = cfg.datasets()
    source = _prepare_source(cfg, data, out, timing)

    t0 = time.perf_counter()
    prompt, clf, records = _train_prompt_phase(cfg, source, data, cfg.temperature, cfg.prompt_adversarial)
    timing["prompt_train_s"] = time.perf_counter() - t0
    write_metrics(records, out / "prompt_metrics.csv")
    save_prompt(out / "prompt.ckpt", prompt, temperature=cfg.temperature)
    export_prompt_image(prompt, out / "prompt.ppm")

    t0 = time.perf_counter()
    report = {
        "seed": cfg.seed,
        "temperature": cfg.temperature,
        "label_mapping": {"kind": cfg.lm, "indices": list(clf.mapping.indices)},
        "prompt_eval": _eval_grid(clf, data["downstream_test"], cfg.epsilon_grid),
        "final_std_acc": records[-1].std_acc,
        "final_adv_acc": records[-1].adv_acc,
    }
    timing["eval_s"] = time.perf_counter() - t0

    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / "config.json").write_text(
        json.dumps({**cfg.raw, "derived_seeds": cfg.derived_seeds}, indent=2, sort_keys=True) + "\n"
    )
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return report


def _coerce(config, seed_override=None, out_override=None) -> ExperimentConfig:
    if isinstance(config, ExperimentConfig):
        if seed_override is not None or out_override is not None:
            return ExperimentConfig.from_dict(config.raw, seed_override, out_override)
        return config
    if isinstance(config, dict):
        return ExperimentConfig.from_dict(config, seed_override, out_override)
    return ExperimentConfig.from_file(config, seed_override, out_override)


def sweep_temperature(config, temperatures=None, seed_override=None, out_override=None) -> list[dict]:
    """Improvement-versus-temperature table against the no-reduction baseline.

    Trains the source once, then one prompt per temperature with
    identical seeds, plus one run with the reduction stage removed.
    Deltas are relative to that baseline; the T=1 row is exactly zero
    by the identity semantics of temperature 1.
    """
    cfg = _coerce(config, seed_override, out_override)
    temps = temperatures if temperatures is not None else cfg.temperature_grid
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    timing: dict[str, float] = {}
    data = cfg.datasets()
    source = _prepare_source(cfg, data, out, timing)

    def _final_metrics(temperature):
        _, clf, records = _train_prompt_phase(cfg, source, data, temperature, cfg.prompt_adversarial)
        std = standard_accuracy(clf, data["downstream_test"])
        adv = adversarial_accuracy(
            clf, data["downstream_test"], AttackConfig(cfg.metrics_epsilon)
        ).adversarial_accuracy
        return std, adv, records

    base_std, base_adv, _ = _final_metrics(None)
    rows = []
    for t in temps:
        std, adv, _ = _final_metrics(t)
        rows.append(
            {
                "T": t,
                "m": cfg.pbl(t).m,
                "std_acc": std,
                "adv_acc": adv,
                "std_delta": std - base_std,
                "adv_delta": adv - base_adv,
            }
        )
    lines = ["T,m,std_acc,adv_acc,std_delta,adv_delta"]
    for r in rows:
        lines.append(
            f"{r['T']},{r['m']},{r['std_acc']:.6f},{r['adv_acc']:.6f},"
            f"{r['std_delta']:.6f},{r['adv_delta']:.6f}"
        )
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return rows


def run_ablation_grid(config, seed_override=None, out_override=None) -> list[dict]:
    """The four-cell {with/without reduction} x {with/without AT} grid.

    One source model serves all four prompt runs.  Each cell reports
    final accuracies plus mean per-epoch work and peak-memory figures.
    """
    cfg = _coerce(config, seed_override, out_override)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    timing: dict[str, float] = {}
    data = cfg.datasets()
    source = _prepare_source(cfg, data, out, timing)
    rows = []
    for use_pbl in (False, True):
        for use_at in (False, True):
            temperature = cfg.temperature if use_pbl else 1
            _, clf, records = _train_prompt_phase(cfg, source, data, temperature, use_at)
            rows.append(
                {
                    "pbl": use_pbl,
                    "at": use_at,
                    "T": temperature,
                    "std_acc": records[-1].std_acc,
                    "adv_acc": records[-1].adv_acc,
                    "wall_ms_per_epoch": sum(r.wall_ms for r in records) / len(records),
                    "peak_mem_bytes": max(r.peak_mem_bytes for r in records),
                }
            )
    lines = ["pbl,at,T,std_acc,adv_acc,wall_ms_per_epoch,peak_mem_bytes"]
    for r in rows:
        lines.append(
            f"{int(r['pbl'])},{int(r['at'])},{r['T']},{r['std_acc']:.6f},{r['adv_acc']:.6f},"
            f"{r['wall_ms_per_epoch']:.6f},{r['peak_mem_bytes']}"
        )
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return rows


def export_prompt_image(prompt: VisualPrompt, path) -> None:
    """Render the clamped frame over a mid-gray interior as binary P6.

    Pixels quantize as round(value * 255); single-channel prompts are
    replicated to gray RGB.
    """
    c, h, w = prompt.canvas
    canvas = np.clip(prompt.params.data, 0.0, 1.0) * prompt.mask
    canvas = canvas + 0.5 * (~prompt.mask)
    quant = np.rint(canvas * 255.0).astype(np.uint8)
    if c == 1:
        rgb = np.repeat(quant, 3, axis=0)
    elif c == 3:
        rgb = quant
    else:
        raise ConfigError(f"pixmap export supports 1 or 3 channels, got {c}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb.transpose(1, 2, 0)).tobytes())
