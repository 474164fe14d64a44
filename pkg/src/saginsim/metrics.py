"""Run-level performance accounting shared by the packet and fluid evaluators."""

from __future__ import annotations

from dataclasses import dataclass, field


class ConservationError(AssertionError):
    """Raised when generated bits do not equal delivered + dropped + in-flight."""


@dataclass
class MetricsReport:
    duration_s: float
    generated_bits: int
    delivered_bits: int
    dropped_bits: int
    in_flight_bits: int
    mean_delay_s: float
    per_link_utilization: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def throughput_bps(self) -> float:
        return self.delivered_bits / self.duration_s

    @property
    def loss_rate(self) -> float:
        if self.generated_bits == 0:
            return 0.0
        return self.dropped_bits / self.generated_bits

    def validate(self) -> "MetricsReport":
        if self.duration_s <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration_s}")
        balance = self.delivered_bits + self.dropped_bits + self.in_flight_bits
        if balance != self.generated_bits:
            raise ConservationError(
                f"bit conservation violated: generated={self.generated_bits} "
                f"delivered={self.delivered_bits} dropped={self.dropped_bits} "
                f"in_flight={self.in_flight_bits}")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError(f"loss rate out of range: {self.loss_rate}")
        for key, u in self.per_link_utilization.items():
            if not -1e-12 <= u <= 1.0 + 1e-12:
                raise ValueError(f"utilization of link {key} out of [0, 1]: {u}")
        return self
