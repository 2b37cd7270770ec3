"""Hyperparameter configuration and ablation variants."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class AblationVariant(str, enum.Enum):
    FULL = "Full"
    A_NO_LD = "A_NoLd"
    B_NO_CL1 = "B_NoCL1"
    C_NO_CL2 = "C_NoCL2"
    D_NO_AUX = "D_NoAux"
    E_NO_DISENTANGLE = "E_NoDisentangle"
    F_MOST_RECENT_INTENT = "F_MostRecentIntent"
    G_AVERAGE_POOLING = "G_AveragePooling"

    @classmethod
    def parse(cls, name: str) -> "AblationVariant":
        """Accept the enum value, the member name, or the bare letter (``"E"``)."""
        key = name.strip()
        for v in cls:
            if key in (v.value, v.name) or key.lower() == v.value.lower():
                return v
            if len(key) == 1 and v.value.startswith(key.upper() + "_"):
                return v
        if key.lower() in ("full", "idclrec"):
            return cls.FULL
        raise ValueError(f"unknown ablation variant {name!r}")

    @property
    def disentangle(self) -> bool:
        return self is not AblationVariant.E_NO_DISENTANGLE


ALL_VARIANTS = tuple(AblationVariant)


@dataclass
class TrainConfig:
    d: int = 64
    N: int = 50
    blocks: int = 2
    heads: int = 2
    dropout: float = 0.5
    tau: float = 1.0
    lr: float = 0.001
    batch: int = 256
    max_epochs: int = 300
    patience: int = 40
    delta: float = 0.7
    lambda_d: float = 0.3
    lambda_cl1: float = 0.5
    lambda_cl2: float = 0.1
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    variant: AblationVariant = AblationVariant.FULL
    min_len: int = 1
    dtype: str = "float32"
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    eval_every: int = 1

    def __post_init__(self) -> None:
        if isinstance(self.variant, str):
            self.variant = AblationVariant.parse(self.variant)
        self.betas = tuple(float(b) for b in self.betas)
        self.seeds = [int(s) for s in self.seeds]
        self.validate()

    def validate(self) -> None:
        for name in ("d", "N", "blocks", "heads", "batch", "max_epochs", "patience", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.tau <= 0 or self.lr <= 0:
            raise ValueError("tau and lr must be positive")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        for name in ("lambda_d", "lambda_cl1", "lambda_cl2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.seeds:
            raise ValueError("at least one seed required")
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    def loss_weights(self) -> tuple[float, float, float]:
        """(lambda_d, lambda_cl1, lambda_cl2) after the variant's loss switches."""
        ld, l1, l2 = self.lambda_d, self.lambda_cl1, self.lambda_cl2
        v = self.variant
        if v in (AblationVariant.A_NO_LD, AblationVariant.D_NO_AUX):
            ld = 0.0
        if v in (AblationVariant.B_NO_CL1, AblationVariant.D_NO_AUX):
            l1 = 0.0
        if v in (AblationVariant.C_NO_CL2, AblationVariant.D_NO_AUX):
            l2 = 0.0
        return ld, l1, l2

    def replace(self, **changes: Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["variant"] = self.variant.value
        out["betas"] = list(self.betas)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(names)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def digest(self, seed: int | None = None) -> str:
        payload = self.to_dict()
        if seed is not None:
            payload["seeds"] = [seed]
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _coerce(raw: str, template: Any) -> Any:
    if isinstance(template, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, (list, tuple)):
        parts = [p for p in raw.replace(",", " ").split() if p]
        elem = template[0] if template else 0
        return [_coerce(p, elem) for p in parts]
    return raw


def parse_overrides(pairs: dict[str, str]) -> dict[str, Any]:
    """Turn string values (from key=value text or CLI) into typed config values."""
    defaults = TrainConfig()
    out: dict[str, Any] = {}
    for key, raw in pairs.items():
        if not hasattr(defaults, key):
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _coerce(raw, getattr(defaults, key)) if isinstance(raw, str) else raw
    return out


def load_config(path: str | Path | None, **overrides: Any) -> TrainConfig:
    """Read a JSON or flat ``key=value`` config file; ``overrides`` win over file values."""
    data: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text()
        stripped = text.lstrip()
        if stripped.startswith("{"):
            data = json.loads(text)
        else:
            pairs = {}
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                k, v = line.split("=", 1)
                pairs[k.strip()] = v.strip()
            data = parse_overrides(pairs)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(data)
