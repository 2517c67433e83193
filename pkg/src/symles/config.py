"""Run configuration: strict "key = value" files plus programmatic defaults.

Desk-scale defaults (64^3 DNS filtered to a 16^3 LES grid at nu = 2e-3)
keep every structural identity testable on a workstation; the full-scale
regime behind the reference results needs datacenter hardware and is out
of reach here.  Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .closures import MODEL_NAMES, TrainConfig
from .sim import SimConfig
from .spectral import Grid


@dataclass
class RunConfig:
    # grids and physics
    dns_n: int = 64
    les_n: int = 16
    viscosity: float = 2e-3
    cfl: float = 0.35
    box_length: float = 2.0 * math.pi
    init_energy: float = 0.2
    forced_shell_max: int = 2
    # sampling
    warmup_time: float = 1.0
    sample_every: int = 12
    n_snapshots: int = 30
    filter_width_factor: float = 4.0
    split_fraction: float = 0.5
    # training
    epochs: int = 40
    batch_size: int = 10
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # evaluation
    equi_time: float = 0.1
    dealias_closure: bool = True
    # run control
    seed: int = 0
    model: str = "tbnn"
    out_dir: str = "out"

    def validate(self) -> None:
        if self.dns_n <= self.les_n:
            raise ValueError("dns_n must exceed les_n")
        if self.dns_n % 2 or self.les_n % 2:
            raise ValueError("grid sizes must be even")
        if self.filter_width_factor < 1:
            raise ValueError("filter_width_factor must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be in (0, 1)")
        if self.model not in MODEL_NAMES:
            raise ValueError(f"model must be one of {MODEL_NAMES}")
        if self.equi_time <= 0:
            raise ValueError("equi_time must be positive")
        self.sim_config().validate()
        self.train_config().validate()

    # derived views
    def sim_config(self) -> SimConfig:
        return SimConfig(
            dns_n=self.dns_n,
            viscosity=self.viscosity,
            cfl=self.cfl,
            box_length=self.box_length,
            init_energy=self.init_energy,
            forced_shell_max=self.forced_shell_max,
            warmup_time=self.warmup_time,
            sample_every=self.sample_every,
            n_snapshots=self.n_snapshots,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            eps=self.adam_eps,
            seed=self.seed,
        )

    def dns_grid(self) -> Grid:
        return Grid(self.dns_n, self.box_length)

    def les_grid(self) -> Grid:
        return Grid(self.les_n, self.box_length)

    @property
    def delta(self) -> float:
        """Filter width: width factor times the LES grid spacing."""
        return self.filter_width_factor * self.box_length / self.les_n


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean '{raw}' for key {name}")
    return raw


def parse_config(path) -> RunConfig:
    """Read a key = value file; '#' starts a comment; unknown keys fail."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"{path}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate key '{key}'")
        values[key] = _convert(key, raw)
    config = RunConfig(**values)
    config.validate()
    return config
