"""Run configuration: the flat ``key = value`` file mapped onto validated groups."""

from enum import StrEnum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(Exception):
    def __init__(self, key: str | None, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class MixingMode(StrEnum):
    PHASE_FIELD = "phase-field"
    LOCAL_LINEAR = "local-linear"
    LOCAL_STEP = "local-step"
    FULL = "full"
    SURROGATE = "surrogate"


class MaterialParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    E: float = Field(3130.0, gt=0)
    nu: float = Field(0.37, ge=0, lt=0.5)
    sigma_inf: float = 64.80
    delta_sigma: float = 33.60
    eps_ref: float = Field(0.003407, gt=0)

    @model_validator(mode="after")
    def _positive_initial_yield(self) -> "MaterialParams":
        if self.delta_sigma < 0 or self.sigma_inf - self.delta_sigma <= 0:
            raise ValueError("hardening law needs sigma_inf > delta_sigma >= 0")
        return self


class PhaseFieldParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps: float = Field(1e-2, gt=0)
    omega: float = Field(1e-3, ge=0)
    b: float = Field(1.0, ge=0)


class MixtureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float = Field(0.01, gt=0, lt=0.5)
    mode: MixingMode = MixingMode.PHASE_FIELD
    b: float = Field(1.0, ge=0)


class StepperConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    du0: float = Field(0.001, gt=0)
    gamma: float = Field(0.5, gt=0, lt=1)
    du_min: float | None = None
    du_max: float | None = None
    u_target: float = Field(0.2, gt=0)

    @model_validator(mode="after")
    def _bounds(self) -> "StepperConfig":
        lo, hi = self.min_increment, self.max_increment
        if not lo <= self.du0 <= hi:
            raise ValueError("need du_min <= du0 <= du_max")
        return self

    @property
    def min_increment(self) -> float:
        return self.du_min if self.du_min is not None else self.du0 * self.gamma**6

    @property
    def max_increment(self) -> float:
        return self.du_max if self.du_max is not None else self.du0


class StaggerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_max: int = Field(3, ge=1)
    tol_u: float = Field(1e-6, gt=0)
    floor: float = Field(1e-12, gt=0)


class DogboneParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    length: float = 10.0
    height: float = 2.0
    waist_height: float = 1.0
    waist_length: float = 4.0
    nx: int = 40
    ny: int = 8


class NotchedPlateParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    size: float = 1.0
    notch_width: float = 0.05
    notch_depth: float = 0.25
    notch_offset: float = 0.35  # notch centres at x = offset (top) and size - offset (bottom)
    fine: float = 0.02
    coarse: float = 0.05


class HolePlateParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: float = 2.0
    height: float = 1.0
    radius: float = 0.12
    centers: tuple[tuple[float, float], ...] = ((0.4, 0.3), (0.8, 0.7), (1.2, 0.3), (1.6, 0.7))
    nx: int = 60
    ny: int = 30


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    experiment: str = "dogbone"
    mesh: Path | None = None
    surrogate: Path | None = None
    output_dir: Path | None = None
    seed: int = 0
    record_fields: bool = False
    vtk: bool = True

    material: MaterialParams = MaterialParams()
    phasefield: PhaseFieldParams = PhaseFieldParams()
    mixture: MixtureConfig = MixtureConfig()
    stepper: StepperConfig = StepperConfig()
    stagger: StaggerConfig = StaggerConfig()
    dogbone: DogboneParams = DogboneParams()
    notched_plate: NotchedPlateParams = NotchedPlateParams()
    plate_with_holes: HolePlateParams = HolePlateParams()


# Flat file key -> (group, field). Keys without a group are top level.
_FLAT_KEYS: dict[str, tuple[str | None, str]] = {
    "experiment": (None, "experiment"),
    "mesh": (None, "mesh"),
    "surrogate": (None, "surrogate"),
    "output_dir": (None, "output_dir"),
    "seed": (None, "seed"),
    "record_fields": (None, "record_fields"),
    "vtk": (None, "vtk"),
    "E": ("material", "E"),
    "nu": ("material", "nu"),
    "sigma_inf": ("material", "sigma_inf"),
    "delta_sigma": ("material", "delta_sigma"),
    "eps_ref": ("material", "eps_ref"),
    "eps": ("phasefield", "eps"),
    "omega": ("phasefield", "omega"),
    "tau": ("mixture", "tau"),
    "mode": ("mixture", "mode"),
    "du0": ("stepper", "du0"),
    "gamma": ("stepper", "gamma"),
    "du_min": ("stepper", "du_min"),
    "du_max": ("stepper", "du_max"),
    "u_target": ("stepper", "u_target"),
    "k_max": ("stagger", "k_max"),
    "tol_u": ("stagger", "tol_u"),
}

_GEOMETRY_GROUPS = ("dogbone", "notched_plate", "plate_with_holes")


def parse_flat(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        values[key] = value
    return values


def build_run_config(values: dict[str, str]) -> RunConfig:
    """Map flat keys onto the nested model. ``b`` feeds both the phase field and
    the local mixing rules; geometry keys use a ``group.field`` prefix."""
    nested: dict[str, Any] = {}
    for key, value in values.items():
        if key == "b":
            nested.setdefault("phasefield", {})["b"] = value
            nested.setdefault("mixture", {})["b"] = value
            continue
        if "." in key:
            group, name = key.split(".", 1)
            if group not in _GEOMETRY_GROUPS:
                raise ConfigError(key, "unknown key")
            nested.setdefault(group, {})[name] = value
            continue
        if key not in _FLAT_KEYS:
            raise ConfigError(key, "unknown key")
        target, name = _FLAT_KEYS[key]
        if target is None:
            nested[name] = value
        else:
            nested.setdefault(target, {})[name] = value
    if isinstance(nested.get("plate_with_holes", {}).get("centers"), str):
        nested["plate_with_holes"]["centers"] = _parse_centers(nested["plate_with_holes"]["centers"])
    try:
        return RunConfig.model_validate(nested)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(".".join(str(p) for p in err["loc"]), err["msg"]) from exc


def _parse_centers(text: str) -> list[tuple[float, float]]:
    centers = []
    for chunk in text.split(";"):
        x, y = (float(v) for v in chunk.split(","))
        centers.append((x, y))
    return centers


def load_run_config(path: Path | str) -> RunConfig:
    return build_run_config(parse_flat(Path(path).read_text(encoding="utf-8")))
