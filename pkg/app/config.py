from pathlib import Path

from pydantic import model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="PHASEMIX_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Output
    output_dir: Path = Path("results")
    export_prometheus: bool = False

    # Mechanical Newton-Raphson
    newton_rtol: float = 1e-8
    newton_atol: float = 1e-10
    newton_max_iter: int = 25
    newton_max_backtracks: int = 4  # step halvings when |r| does not decrease

    # High-fidelity return mapping
    return_map_tol: float = 1e-12
    return_map_max_iter: int = 50
    plane_stress_tol: float = 1e-12  # |σzz| / E
    yield_tol: float = 1e-10  # f_trial / σ_y below which a step is elastic
    hf_tangent: str = "analytic"  # "analytic" | "fd"
    hf_fd_step: float = 1e-7

    # Phase field
    pf_tol: float = 1e-8
    pf_max_iter: int = 50

    # Gaussian processes
    gp_jitter_start: float = 1e-10  # × σ_f²
    gp_jitter_max: float = 1e-4  # × σ_f²
    gp_restarts: int = 20
    gp_sigma_f_bounds: tuple[float, float] = (1e-2, 1e3)
    gp_length_scale_bounds: tuple[float, float] = (1e-4, 1.0)
    gp_sigma_n_bounds: tuple[float, float] = (1e-6, 10.0)

    # Sentry
    sentry_dsn: str = ""
    sentry_environment: str = "development"

    # Logging
    log_level: str = "INFO"

    @model_validator(mode="after")
    def _check_tangent_mode(self) -> "Settings":
        if self.hf_tangent not in ("analytic", "fd"):
            raise ValueError(f"hf_tangent must be 'analytic' or 'fd', got {self.hf_tangent!r}")
        return self


settings = Settings()
