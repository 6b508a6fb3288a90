"""
Configuration - environment settings and experiment config files
"""

import hashlib
import json
import logging
import math
import os
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from src.services.constellation import Constellation, QubitPull, build_constellation
from src.services.errors import ConfigError, PhaseDiscriminationError
from src.services.experiments import ExperimentConfig
from src.services.signal import DEFAULT_DT, DEFAULT_HORIZON, TimeGrid
from src.services.strategies import build_strategy

logger = logging.getLogger(__name__)

_PI_FORM = re.compile(
    r"^(?P<sign>[+-]?)\s*(?P<coef>\d+(?:\.\d*)?|\.\d+)?\s*\*?\s*pi\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?$"
)


def parse_angle(value: Any) -> float:
    """Radians from a number or a string like '4pi/10', '-pi/2', '100pi', '0.3'"""
    if isinstance(value, bool):
        raise ValueError("angle must be a number or a multiple of pi")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"cannot read an angle from {value!r}")
    text = value.strip().lower().replace("π", "pi")
    match = _PI_FORM.match(text)
    if match:
        coef = float(match.group("coef")) if match.group("coef") else 1.0
        den = float(match.group("den")) if match.group("den") else 1.0
        if den == 0:
            raise ValueError(f"zero denominator in {value!r}")
        sign = -1.0 if match.group("sign") == "-" else 1.0
        return sign * coef * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot read an angle from {value!r}")


Angle = Annotated[float, BeforeValidator(parse_angle)]
PositiveAngle = Annotated[float, BeforeValidator(parse_angle), Field(gt=0)]


@dataclass
class Settings:
    """Process-level settings from the environment (.env supported)"""

    log_level: str = "INFO"
    threads: int = 1
    out_dir: str = "results"


def get_settings() -> Settings:
    load_dotenv()
    threads = os.getenv("PHASEDISCRIM_THREADS", "1")
    try:
        threads = int(threads)
    except ValueError:
        raise ConfigError(f"PHASEDISCRIM_THREADS must be an integer, got {threads!r}")
    return Settings(
        log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
        threads=max(1, threads),
        out_dir=os.getenv("PHASEDISCRIM_OUT", "results"),
    )


class QubitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    g: float
    kappa: float = Field(gt=0)
    delta: float


class ConstellationSpec(BaseModel):
    """[constellation]: pulls in radians, or (g, kappa, delta) per qubit"""

    model_config = ConfigDict(extra="forbid")

    pulls: Optional[List[Angle]] = None
    qubits: Optional[List[QubitSpec]] = None
    amplitude: float = Field(5.0, ge=0)

    @model_validator(mode="after")
    def one_source(self):
        if (self.pulls is None) == (self.qubits is None):
            raise ValueError("give exactly one of 'pulls' or 'qubits'")
        return self

    def pull_angles(self) -> List[float]:
        if self.pulls is not None:
            return [float(p) for p in self.pulls]
        return [QubitPull(g=q.g, kappa=q.kappa, delta=q.delta).angle() for q in self.qubits]

    def build(self, amplitude: Optional[float] = None) -> Constellation:
        return build_constellation(self.pull_angles(), self.amplitude if amplitude is None else amplitude)


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: float = Field(DEFAULT_DT, gt=0)
    horizon: float = Field(DEFAULT_HORIZON, gt=0)


class StrategySpec(BaseModel):
    """[strategies.<name>]: kind plus its parameters"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["homodyne", "heterodyne", "adaptive", "optimal"]
    phase: Optional[Angle] = None
    rate: Optional[PositiveAngle] = None
    initial_phase: Angle = 0.0


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alphas: List[float] = Field(default_factory=lambda: [5.0], min_length=1)
    n_runs: int = Field(500, ge=1)
    seed: int = 0
    correct_state: Literal["fixed", "average"] = "fixed"
    correct_label: Optional[str] = None
    threshold: float = Field(0.5, gt=0, lt=1)
    times: List[float] = Field(default_factory=lambda: [0.2, 1.0])
    priors: Optional[List[float]] = None
    batch_size: int = Field(500, ge=1)
    dump_trajectories: int = Field(0, ge=0)
    rates: List[PositiveAngle] = Field(default_factory=list)


class ConfigFile(BaseModel):
    """A whole experiment config file"""

    model_config = ConfigDict(extra="forbid")

    constellation: ConstellationSpec
    grid: GridSpec = Field(default_factory=GridSpec)
    strategies: Dict[str, StrategySpec] = Field(default_factory=dict)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def checksum(self) -> str:
        """SHA-256 of the validated config; independent of key order and angle spelling"""
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_overrides(
        self,
        seed: Optional[int] = None,
        dt: Optional[float] = None,
        horizon: Optional[float] = None,
    ) -> "ConfigFile":
        grid = self.grid.model_copy(update={
            k: v for k, v in {"dt": dt, "horizon": horizon}.items() if v is not None
        })
        experiment = self.experiment
        if seed is not None:
            experiment = experiment.model_copy(update={"seed": seed})
        return self.model_copy(update={"grid": grid, "experiment": experiment})

    def to_experiment_config(self) -> ExperimentConfig:
        """Runtime config; strategies are ordered by name"""
        exp = self.experiment
        try:
            pulls = tuple(self.constellation.pull_angles())
            n_phases = 2 ** len(pulls)
            strategies = []
            for name in sorted(self.strategies):
                spec = self.strategies[name]
                params: Dict[str, Any] = {"initial_phase": spec.initial_phase}
                if spec.phase is not None:
                    params["phase"] = spec.phase
                params["rate"] = spec.rate if spec.rate is not None else default_heterodyne_rate(n_phases)
                strategies.append((name, build_strategy(spec.kind, **params)))
            return ExperimentConfig(
                pulls=pulls,
                strategies=tuple(strategies),
                alphas=tuple(float(a) for a in exp.alphas),
                n_runs=exp.n_runs,
                grid=TimeGrid(dt=self.grid.dt, horizon=self.grid.horizon),
                seed=exp.seed,
                correct_mode=exp.correct_state,
                correct_label=exp.correct_label,
                threshold=exp.threshold,
                times=tuple(float(t) for t in exp.times),
                priors=None if exp.priors is None else tuple(exp.priors),
                batch_size=exp.batch_size,
                dump_trajectories=exp.dump_trajectories,
            )
        except ConfigError:
            raise
        except PhaseDiscriminationError as e:
            raise ConfigError(str(e)) from e


def default_heterodyne_rate(n_phases: int) -> float:
    """100pi rad per unit time up to four phases, 300pi above"""
    return 100 * math.pi if n_phases <= 4 else 300 * math.pi


def load_config(path: Union[str, Path]) -> ConfigFile:
    """Parse and validate a TOML experiment config"""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    try:
        config = ConfigFile.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e
    logger.debug(f"Loaded config {path} (checksum {config.checksum()[:12]})")
    return config
