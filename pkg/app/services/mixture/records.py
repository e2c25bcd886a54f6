"""Committed per-IP records, stored column-wise, and the HF evaluation counter."""

import threading
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from app.services.material import PlasticState
from app.utils import metrics


@dataclass
class IPRecord:
    """Read-only view of one integration point."""

    phi: float
    uncertainty: float
    plastic: PlasticState
    traced_through: int
    strain_history: list[NDArray[np.float64]]


@dataclass
class IPTable:
    n_ips: int
    phi: NDArray[np.float64] = field(init=False)
    uncertainty: NDArray[np.float64] = field(init=False)
    plastic: PlasticState = field(init=False)
    traced_through: NDArray[np.int64] = field(init=False)
    surrogate_vm: NDArray[np.float64] = field(init=False)
    history: list[NDArray[np.float64]] = field(init=False, default_factory=list)

    def __post_init__(self) -> None:
        self.phi = np.zeros(self.n_ips)
        self.uncertainty = np.zeros(self.n_ips)
        self.plastic = PlasticState.virgin(self.n_ips)
        self.traced_through = np.zeros(self.n_ips, dtype=np.int64)
        self.surrogate_vm = np.zeros(self.n_ips)

    @property
    def steps_committed(self) -> int:
        return len(self.history)

    def record(self, i: int) -> IPRecord:
        return IPRecord(
            phi=float(self.phi[i]),
            uncertainty=float(self.uncertainty[i]),
            plastic=self.plastic.take(np.array([i])),
            traced_through=int(self.traced_through[i]),
            strain_history=[h[i].copy() for h in self.history],
        )


class HFCounter:
    """Lock-protected tally of HF stress updates, attributed to load steps."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._total = 0
        self._per_step: dict[int, int] = defaultdict(int)

    def add(self, n: int, step: int) -> None:
        if n <= 0:
            return
        with self._lock:
            self._total += n
            self._per_step[step] += n
        metrics.hf_evaluations_total.inc(n)

    @property
    def total(self) -> int:
        with self._lock:
            return self._total

    def for_step(self, step: int) -> int:
        with self._lock:
            return self._per_step.get(step, 0)
