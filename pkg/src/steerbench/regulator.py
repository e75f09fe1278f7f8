"""Per-period memory bandwidth budgeting.

A budget of B MB/s with period P ms allows floor(B * 1e6 * P / 1000) bytes
per period (MB = 10^6 bytes).  Periods are absolute windows counted from a
shared epoch timestamp; unused quota does not carry over, and a task sleeps
to the next period boundary only once the next chunk would exceed the
current period's quota (work conserving).  Enforcement is check-before-
transfer at chunk granularity, so actual traffic in any wall-clock period
never exceeds the budget by more than one chunk straddling the boundary.
"""

from dataclasses import dataclass


class RegulatorConfigError(ValueError):
    """Budget/chunk configuration that cannot be enforced."""


def budget_bytes_per_period(budget_mbps, period_ms):
    """Byte quota per regulation period. MB = 10^6 bytes."""
    if budget_mbps <= 0:
        raise RegulatorConfigError(f"budget must be positive, got {budget_mbps} MB/s")
    if period_ms <= 0:
        raise RegulatorConfigError(f"period must be positive, got {period_ms} ms")
    return int(budget_mbps * 1e6 * period_ms / 1000.0)


@dataclass(frozen=True)
class RegulatorBudget:
    """Bandwidth cap in MB/s enforced over fixed periods (default 1 ms)."""

    budget_mbps: float
    period_ms: float = 1.0

    def __post_init__(self):
        budget_bytes_per_period(self.budget_mbps, self.period_ms)  # validates

    @property
    def bytes_per_period(self):
        return budget_bytes_per_period(self.budget_mbps, self.period_ms)


def regulated_run(task, budget, duration_s=None, iterations=None, stop_event=None,
                  epoch=None, record_periods=False):
    """Run a bandwidth task under a per-period byte budget.

    Identical to task.run() but every chunk is admission-checked against the
    remaining quota of the current period first.  epoch lets several tasks
    share period boundaries.
    """
    return task.run(duration_s=duration_s, iterations=iterations, stop_event=stop_event,
                    budget=budget, epoch=epoch, record_periods=record_periods)
