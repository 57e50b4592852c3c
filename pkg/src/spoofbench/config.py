"""Run configuration: one JSON document mirrored onto the sub-configs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .audio import VadConfig
from .detector.model import DetectorConfig
from .features import FeatureConfig
from .metrics import EvalProtocol


@dataclass(frozen=True)
class RunConfig:
    global_seed: int = 0
    sample_rate_hz: int = 8000
    vad: VadConfig = field(default_factory=VadConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    protocol: EvalProtocol = field(default_factory=EvalProtocol)
    parallelism: int = 1

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        kwargs = {}
        for key, sub in (
            ("vad", VadConfig),
            ("features", FeatureConfig),
            ("detector", DetectorConfig),
            ("protocol", EvalProtocol),
        ):
            if key in doc:
                kwargs[key] = sub(**doc.pop(key))
        kwargs.update(doc)
        return cls(**kwargs)


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(json.loads(Path(path).read_text()))


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
