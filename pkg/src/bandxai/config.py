"""Pipeline configuration, loaded from one JSON file.

Every random stream is derived from the single global ``seed``; component
blocks therefore do not accept their own ``seed`` keys.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from bandxai.classifier import TrainConfig
from bandxai.errors import ConfigError
from bandxai.explain import METHODS, LrpConfig, RiseConfig, ShapConfig
from bandxai.hypercube import SplitSpec, SyntheticSpec

# offsets added to the global seed for each random stream
SEED_OFFSETS = {"synthetic": 0, "split": 1, "network": 2, "train": 3, "shap": 4,
                "rise": 5, "random_baseline": 6, "sample": 7}


@dataclass(frozen=True)
class DatasetConfig:
    """Either ``synthetic`` parameters or paths to a cube header and label raster."""

    synthetic: dict | None = field(default_factory=dict)
    header: str | None = None
    labels: str | None = None
    class_count: int | None = None
    name: str = "synthetic"
    patch_dims: tuple[int, int] = (3, 3)
    train_fraction: float = 0.3
    stratified: bool = True


@dataclass(frozen=True)
class ModelConfig:
    preset: str = "shallow"
    train: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExplainConfig:
    methods: tuple[str, ...] = METHODS
    lrp: dict = field(default_factory=dict)
    shap: dict = field(default_factory=dict)
    rise: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluateConfig:
    step: float = 0.2
    patch_sample: int = 200
    random_trials: int = 20


@dataclass(frozen=True)
class SelectConfig:
    k: tuple[int, ...] = (6, 12, 20)
    runs: int = 5
    retrain: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    explain: ExplainConfig = ExplainConfig()
    evaluate: EvaluateConfig = EvaluateConfig()
    select: SelectConfig = SelectConfig()
    seed: int = 0
    output_dir: str = "runs/default"

    def seed_for(self, stream: str) -> int:
        return int(self.seed) + SEED_OFFSETS[stream]

    # resolved component configs ------------------------------------------------

    def synthetic_spec(self) -> SyntheticSpec | None:
        if self.dataset.header is not None:
            return None
        return _build(SyntheticSpec, self.dataset.synthetic or {}, "dataset.synthetic",
                      seed=self.seed_for("synthetic"))

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.dataset.train_fraction, self.seed_for("split"), self.dataset.stratified, True)

    def train_config(self) -> TrainConfig:
        return _build(TrainConfig, self.model.train, "model.train", seed=self.seed_for("train"))

    def lrp_config(self) -> LrpConfig:
        return _build(LrpConfig, self.explain.lrp, "explain.lrp")

    def shap_config(self) -> ShapConfig:
        return _build(ShapConfig, self.explain.shap, "explain.shap", seed=self.seed_for("shap"))

    def rise_config(self) -> RiseConfig:
        return _build(RiseConfig, self.explain.rise, "explain.rise", seed=self.seed_for("rise"))

    def validate(self) -> "PipelineConfig":
        """Build every component config once so errors surface before any output is written."""
        spec = self.synthetic_spec()
        if spec is None and self.dataset.labels is None:
            raise ConfigError("dataset.labels is required with dataset.header")
        hp, wp = self.dataset.patch_dims
        if hp < 1 or wp < 1 or hp % 2 == 0 or wp % 2 == 0:
            raise ConfigError("dataset.patch_dims must be positive odd integers")
        self.split_spec()
        self.train_config()
        self.lrp_config()
        self.shap_config()
        self.rise_config()
        unknown = set(self.explain.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown explanation methods {sorted(unknown)}")
        if not 0.0 < self.evaluate.step <= 1.0:
            raise ConfigError("evaluate.step must lie in (0, 1]")
        if self.evaluate.patch_sample < 1 or self.evaluate.random_trials < 1:
            raise ConfigError("evaluate.patch_sample and evaluate.random_trials must be >= 1")
        if self.select.runs < 1:
            raise ConfigError("select.runs must be >= 1")
        if spec is not None and any(not 1 <= k < spec.bands for k in self.select.k):
            raise ConfigError(f"select.k values must lie in 1..{spec.bands - 1}")
        if self.model.preset not in ("shallow", "deep"):
            raise ConfigError(f"unknown model preset {self.model.preset!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, values: dict, where: str, **fixed):
    values = dict(values or {})
    if "seed" in values:
        raise ConfigError(f"{where}.seed is not configurable; set the global seed instead")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    values.update({k: v for k, v in fixed.items() if k in names})
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(v)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _block(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def config_from_dict(d: dict) -> PipelineConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    try:
        return PipelineConfig(
            dataset=_block(DatasetConfig, d.get("dataset"), "dataset"),
            model=_block(ModelConfig, d.get("model"), "model"),
            explain=_block(ExplainConfig, d.get("explain"), "explain"),
            evaluate=_block(EvaluateConfig, d.get("evaluate"), "evaluate"),
            select=_block(SelectConfig, d.get("select"), "select"),
            seed=int(d.get("seed", 0)),
            output_dir=str(d.get("output_dir", "runs/default")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str | Path | None, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    """Read a JSON config (or defaults when ``path`` is None) and apply CLI overrides."""
    d = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if isinstance(d, dict) and isinstance(d.get("dataset"), dict):
            ds = dict(d["dataset"])
            for key in ("header", "labels"):
                if ds.get(key) is not None and not Path(ds[key]).is_absolute():
                    ds[key] = str(path.parent / ds[key])
            d["dataset"] = ds
    cfg = config_from_dict(d)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    if out is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(out))
    return cfg.validate()
