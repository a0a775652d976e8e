"""Run configuration (TOML) and output manifests (JSON).

Every command writes CSV data plus a manifest carrying the config echo,
code version, kernel backend, Green-cache checksums, the critical-height
estimate with its CI, wall-clock, and a content hash for every output
file, so reruns are byte-auditable.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - 3.10 path
    import tomli as tomllib

from . import __version__
from .errors import ConfigError


@dataclass
class RunConfig:
    d: int = 3
    side: int = 21
    margin: int = 5
    seed: int = 1
    samples: int = 1000
    h_grid: list = field(default_factory=lambda: [-0.5, 0.0, 0.5])
    n_min: int = 1
    n_max: int = 20
    rho: float = 3.0
    delta: float = 0.5
    base_scale: int = 1
    reach: int = 5
    scale_cap: int = 4
    cap_constant: float = 8.0
    eps0: float = 0.35
    h_star: float | None = None
    workers: int = 1
    observables: list = field(default_factory=lambda: ["one", "size"])
    output_dir: str = "runs/out"
    green_tol: float = 1e-10

    def validate(self, potential_run: bool = True) -> None:
        if potential_run and self.d < 3:
            raise ConfigError(f"d = {self.d}: potential-theoretic runs need d >= 3")
        if self.d < 2:
            raise ConfigError(f"d = {self.d}: dimension must be >= 2")
        if self.side < 3:
            raise ConfigError(f"side = {self.side}: domain side must be >= 3")
        if self.margin < 1:
            raise ConfigError(f"margin = {self.margin}: margin must be >= 1")
        if self.margin >= self.side // 2:
            raise ConfigError(
                f"margin = {self.margin} leaves no interior in a side-{self.side} box"
            )
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.reach < 1:
            raise ConfigError("reach must be >= 1")
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ConfigError("need 1 <= n_min <= n_max")
        # events at the largest scale must be evaluable inside the margin
        if self.margin < (self.reach + 1) * min(self.scale_cap, self.side):
            raise ConfigError(
                f"margin {self.margin} cannot hold the reach-{self.reach} "
                f"enlargement of scale-{self.scale_cap} boxes; raise margin or "
                "lower scale_cap/reach"
            )

    @classmethod
    def from_toml(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            data = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if overrides:
            bad = set(overrides) - known
            if bad:
                raise ConfigError(f"unknown override fields: {sorted(bad)}")
            data.update(overrides)
        cfg = cls(**data)
        return cfg

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ManifestWriter:
    """Collects outputs and run metadata; one JSON per command run."""

    def __init__(self, config: RunConfig, command: str):
        self.config = config
        self.command = command
        self.t0 = time.time()
        self.outputs: dict[str, str] = {}
        self.extra: dict = {}

    def add_output(self, path) -> None:
        self.outputs[str(path)] = file_hash(path)

    def write(self, path) -> Path:
        from .kernels import BACKEND

        payload = {
            "command": self.command,
            "config": self.config.as_dict(),
            "version": __version__,
            "kernel_backend": BACKEND,
            "wall_clock_s": time.time() - self.t0,
            "outputs": self.outputs,
            **self.extra,
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        return path
