"""Pipeline configuration: one JSON file, resolved and echoed into every output directory."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .classify import EnsembleConfig
from .errors import ConfigError
from .features import HistogramConfig, SegmentationScheme
from .skeleton import SkeletonTopology, default_topology, load_topology
from .viz import CapsuleRadii, OverlaySpec


@dataclass(frozen=True)
class SynthConfig:
    n_normal: int = 8
    n_abnormal: int = 4
    n_frames: int = 1000
    noise: float = 0.0


@dataclass(frozen=True)
class VizConfig:
    alpha: float = 0.45
    canvas: tuple[int, int] = (320, 320)
    limb_radius: float = 0.06
    torso_radius: float = 0.14
    head_radius: float = 0.10
    radius_scale: float = 0.25

    def overlay(self) -> OverlaySpec:
        return OverlaySpec(alpha=self.alpha)

    def radii(self) -> CapsuleRadii:
        return CapsuleRadii(self.limb_radius, self.torso_radius, self.head_radius, self.radius_scale)


@dataclass(frozen=True)
class Paths:
    data: str | None = "data"
    features: str | None = "features"
    models: str | None = "models"
    frames: str | None = None
    masks: str | None = None
    out: str | None = "out"


@dataclass(frozen=True)
class PipelineConfig:
    topology: str | None = None
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    segmentation: SegmentationScheme = field(default_factory=SegmentationScheme)
    segment_ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    fusion_ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    viz: VizConfig = field(default_factory=VizConfig)
    paths: Paths = field(default_factory=Paths)
    seed: int = 42

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed,
                       segment_ensemble=replace(self.segment_ensemble, seed=seed),
                       fusion_ensemble=replace(self.fusion_ensemble, seed=seed))

    def load_topology(self) -> SkeletonTopology:
        return load_topology(self.topology) if self.topology else default_topology()

    def fingerprint(self) -> str:
        """Identifies the feature layout a model was trained on."""
        blob = json.dumps({"topology": self.load_topology().fingerprint(),
                           "histogram": asdict(self.histogram),
                           "segmentation": asdict(self.segmentation)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["viz"]["canvas"] = list(self.viz.canvas)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {
    "histogram": HistogramConfig,
    "segmentation": SegmentationScheme,
    "segment_ensemble": EnsembleConfig,
    "fusion_ensemble": EnsembleConfig,
    "synth": SynthConfig,
    "viz": VizConfig,
    "paths": Paths,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    if cls is VizConfig and "canvas" in data:
        data = {**data, "canvas": tuple(int(v) for v in data["canvas"])}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(d: dict, base_dir: str | Path | None = None) -> PipelineConfig:
    """Build a config; relative paths resolve against ``base_dir``. The top-level seed wins."""
    unknown = set(d) - {"topology", "seed", *_SECTIONS}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    kw = {name: _build(cls, d.get(name, {}), name) for name, cls in _SECTIONS.items()}
    cfg = PipelineConfig(topology=d.get("topology"), seed=int(d.get("seed", 42)), **kw)
    if base_dir is not None:
        cfg = resolve_paths(cfg, Path(base_dir))
    return cfg.with_seed(cfg.seed)


def resolve_paths(cfg: PipelineConfig, base: Path) -> PipelineConfig:
    def res(p):
        return None if p is None else str((base / p).resolve())

    paths = Paths(**{f.name: res(getattr(cfg.paths, f.name)) for f in fields(Paths)})
    return replace(cfg, topology=res(cfg.topology), paths=paths)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(data, path.parent)
    if cfg.topology and not Path(cfg.topology).is_file():
        raise ConfigError(f"topology file {cfg.topology} does not exist")
    return cfg
