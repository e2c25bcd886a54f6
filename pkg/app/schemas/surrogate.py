from pydantic import BaseModel, Field

SURROGATE_FORMAT_VERSION = 1


class KernelParams(BaseModel):
    sigma_f: float = Field(gt=0)
    length_scale: float = Field(gt=0)
    sigma_n: float = Field(gt=0)


class ComponentFile(BaseModel):
    kernel: KernelParams
    y: list[float]


class SurrogateFile(BaseModel):
    """On-disk form of a trained surrogate. Factors are recomputed on load."""

    format_version: int = SURROGATE_FORMAT_VERSION
    E: float
    nu: float
    X: list[tuple[float, float, float]]
    components: dict[str, ComponentFile]  # keys: sxx, syy, sxy
