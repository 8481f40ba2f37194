"""Declarative experiment description, YAML loading and canonical hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..channel import SnrConvention, power_from_snr

SCHEMES = ("uncoded_bpsk", "bpsk_ldpc", "sparc", "superposition_2ldpc", "pam4_ldpc")

# output BER at which the outer staircase code takes over
TARGET_BER = 4.7e-3


@dataclass(frozen=True)
class StoppingRule:
    min_bit_errors: int = 100
    min_frame_errors: int = 20
    max_trials: int = 100_000

    def __post_init__(self):
        if min(self.min_bit_errors, self.min_frame_errors, self.max_trials) <= 0:
            raise ValueError("stopping thresholds must be positive")

    def done(self, bit_errors: int, frame_errors: int, frames: int) -> bool:
        enough = bit_errors >= self.min_bit_errors and frame_errors >= self.min_frame_errors
        return enough or frames >= self.max_trials


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    params: dict
    snr_grid: tuple[float, ...]        # transmit powers P (noise variance 1)
    master_seed: int = 0
    stopping: StoppingRule = field(default_factory=StoppingRule)
    fallback_on_failure: bool = False
    convention: str = SnrConvention.EBN0_DB.value  # axis used when printing
    noise_variance: float = 1.0
    batch_size: int = 32
    name: str = ""

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        grid = tuple(float(p) for p in self.snr_grid)
        if not grid:
            raise ValueError("SNR grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        if grid[0] <= 0:
            raise ValueError("grid powers must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        SnrConvention(self.convention)
        object.__setattr__(self, "snr_grid", grid)

    @property
    def n(self) -> int:
        return int(self.params["n"])

    @property
    def k(self) -> int:
        return int(self.params["k"])

    def with_grid(self, powers) -> "ExperimentConfig":
        return replace(self, snr_grid=tuple(powers))

    def with_params(self, **updates) -> "ExperimentConfig":
        params = copy.deepcopy(self.params)
        params.update(updates)
        return replace(self, params=params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid"] = list(self.snr_grid)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        grid = d.pop("snr_grid")
        params = dict(d.pop("params", {}))
        if d.get("scheme") == "uncoded_bpsk" and "k" in params:
            params.setdefault("n", params["k"])
        if "n" not in params or "k" not in params:
            raise ValueError("scheme parameters need both n and k")
        stopping = d.pop("stopping", None) or {}
        if not isinstance(stopping, StoppingRule):
            stopping = StoppingRule(**stopping)
        powers = parse_grid(grid, int(params["n"]), int(params["k"]))
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(params=params, snr_grid=tuple(powers), stopping=stopping, **d)


def parse_grid(grid, n: int, k: int) -> list[float]:
    """Accept a list of powers, or ``{convention, values}`` / ``{convention, start, stop, step}``."""
    if isinstance(grid, dict):
        conv = SnrConvention(grid.get("convention", SnrConvention.P_LINEAR.value))
        if "values" in grid:
            values = [float(v) for v in grid["values"]]
        else:
            start, stop, step = float(grid["start"]), float(grid["stop"]), float(grid["step"])
            count = int(round((stop - start) / step)) + 1
            values = [start + i * step for i in range(count)]
        return [power_from_snr(v, n, k, conv) for v in values]
    return [float(p) for p in grid]


def load_config(path) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text())
    base = Path(path).resolve().parent
    params = data.get("params", {})
    for key in ("code", "code1", "code2"):
        spec = params.get(key)
        if isinstance(spec, dict) and "path" in spec and not Path(spec["path"]).is_absolute():
            spec["path"] = str(_resolve(spec["path"], base))
    return ExperimentConfig.from_dict(data)


def _resolve(rel: str, base: Path) -> Path:
    cand = base / rel
    if cand.exists():
        return cand
    from importlib import resources
    return Path(str(resources.files("ercodes") / "data" / Path(rel).name))


def preset_path(name: str) -> Path:
    from importlib import resources
    path = Path(str(resources.files("ercodes") / "presets" / f"{name}.yaml"))
    if not path.exists():
        raise FileNotFoundError(f"no preset named {name!r}")
    return path


def list_presets() -> list[str]:
    from importlib import resources
    root = Path(str(resources.files("ercodes") / "presets"))
    return sorted(p.stem for p in root.glob("*.yaml"))
