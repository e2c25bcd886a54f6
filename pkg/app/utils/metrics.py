"""Prometheus process metrics mirroring the per-run ledger."""

from pathlib import Path

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, write_to_textfile

# Constitutive metrics
hf_evaluations_total = Counter(
    "phasemix_hf_evaluations_total",
    "High-fidelity stress updates, including retraced history",
)
newton_iterations_total = Counter(
    "phasemix_newton_iterations_total",
    "Mechanical Newton iterations over all attempts",
)

# Stepping metrics
load_steps_total = Counter(
    "phasemix_load_steps_total",
    "Attempted load steps",
    ["outcome"],  # accepted, mechanical, phasefield
)
phasefield_solves_total = Counter(
    "phasemix_phasefield_solves_total",
    "Phase-field solves",
    ["result"],  # converged, failed
)
step_seconds = Histogram(
    "phasemix_step_seconds",
    "Wall time per attempted load step",
    buckets=(0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0),
)

# Mixture metrics
ips_by_phase = Gauge(
    "phasemix_ips_by_phase",
    "Integration points per regime at the last committed step",
    ["phase"],  # gp, mixed, hf
)


def export_textfile(path: Path) -> None:
    write_to_textfile(str(path), REGISTRY)
