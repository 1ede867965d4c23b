"""JSON checkpoints with hex-float arrays so float64 values round-trip exactly."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diffusion import DiffusionSchedule, build_schedule
from .nn import ConditionalINR, Dense, NetworkDims

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    theta: ConditionalINR
    psi: ConditionalINR
    history: list = field(default_factory=list, compare=False)

    @property
    def schedule(self) -> DiffusionSchedule:
        dc = self.config.diffusion
        return build_schedule(dc.T, dc.beta_min, dc.beta_max)

    def to_json(self) -> str:
        m = self.config.model
        doc = {
            "header": {
                "format_version": FORMAT_VERSION,
                "dims": {"d": m.d, "k": m.k, "hidden": m.hidden, "f": self.config.f, "layers": m.layers},
                "activation": m.activation,
                "omega0": float(m.omega0).hex(),
                "alphabet": self.config.alphabet.format(),
                "schedule": {"T": self.config.diffusion.T,
                             "beta_min": float(self.config.diffusion.beta_min).hex(),
                             "beta_max": float(self.config.diffusion.beta_max).hex()},
                "seed": self.config.train.seed,
                "config": {k: v.hex() if isinstance(v, float) else v for k, v in self.config.to_dict().items()},
            },
            "theta": _net_arrays(self.theta),
            "psi": _net_arrays(self.psi),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        doc = json.loads(text)
        header = doc["header"]
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header.get('format_version')!r}")
        raw = {k: float.fromhex(v) if isinstance(v, str) and v.startswith(("0x", "-0x")) else v
               for k, v in header["config"].items()}
        config = RunConfig.from_dict(raw)
        return cls(config, _net_from_arrays(doc["theta"], config), _net_from_arrays(doc["psi"], config))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x).hex() for x in a.ravel()]}


def _decode(obj: dict) -> np.ndarray:
    return np.array([float.fromhex(x) for x in obj["data"]], dtype=np.float64).reshape(obj["shape"])


def _net_arrays(net: ConditionalINR) -> list:
    return [{"weight": _encode(l.weight), "bias": _encode(l.bias)} for l in net.layers()]


def _net_from_arrays(layers: list, config: RunConfig) -> ConditionalINR:
    dims: NetworkDims = config.dims
    dense = [Dense(_decode(l["weight"]), _decode(l["bias"])) for l in layers]
    if len(dense) != 2 * dims.layers + 1:
        raise ValueError("checkpoint layer count does not match its header")
    widths = [dims.d] + [dims.hidden] * dims.layers + [dims.f]
    expected = [(widths[i + 1], widths[i]) for i in range(dims.layers + 1)]
    expected += [(dims.hidden, dims.k if i == 0 else dims.hidden + dims.k) for i in range(dims.layers)]
    for n, (layer, shape) in enumerate(zip(dense, expected)):
        if layer.weight.shape != shape or layer.bias.shape != shape[:1]:
            raise ValueError(f"checkpoint layer {n} has shape {layer.weight.shape}, expected {shape}")
    return ConditionalINR(dims, config.model.activation, config.model.omega0,
                          dense[:dims.layers + 1], dense[dims.layers + 1:])
