"""Throughput curve fitting and cap detection.

Transfer times over an access link follow elapsed = t0 + bits/C to good
approximation once the connection has ramped up: t0 absorbs startup
overhead, C is the asymptotic channel rate.  The implied average-rate
curve R(S) = 8S / (t0/1000 + 8S/C) rises with size and approaches C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import Outcome, ProbeKind, ThroughputFit, TransferSample


class InsufficientDataError(ValueError):
    """Too few points (or too few distinct sizes) to fit."""


class IllConditionedFitError(ValueError):
    """The least-squares solution is unphysical; carries diagnostics."""

    def __init__(self, msg: str, ceiling_bps: float, startup_ms: float):
        super().__init__(f"{msg} (ceiling_bps={ceiling_bps:.1f}, startup_ms={startup_ms:.1f})")
        self.ceiling_bps = ceiling_bps
        self.startup_ms = startup_ms


class ComparisonDomainError(ValueError):
    """Fits being compared do not come from the same provider/line."""


@dataclass(frozen=True)
class SizeRatePoint:
    payload_bytes: int
    elapsed_ms: float
    effective_bps: float
    probe_kind: ProbeKind | None = None
    source_label: str = ""

    @classmethod
    def from_sample(cls, sample: TransferSample) -> "SizeRatePoint":
        if sample.outcome is not Outcome.OK:
            raise ValueError("only completed samples become fit points")
        return cls(
            payload_bytes=sample.payload_bytes,
            elapsed_ms=sample.elapsed_ms,
            effective_bps=sample.effective_bps,
            probe_kind=sample.probe_kind,
            source_label=sample.source_label,
        )


@dataclass(frozen=True)
class CapFinding:
    suspected: bool
    ratio: float
    ceiling_a_bps: float
    ceiling_b_bps: float
    n_a: int
    n_b: int


def _least_squares(bits: np.ndarray, elapsed: np.ndarray) -> tuple[float, float, float]:
    """Fit elapsed = t0 + bits/C; returns (t0_ms, ceiling_bps, rms_ms).

    bits/C with elapsed in ms means slope = 1000/C.
    """
    design = np.column_stack([np.ones_like(bits), bits])
    coef, *_ = np.linalg.lstsq(design, elapsed, rcond=None)
    t0, slope = float(coef[0]), float(coef[1])
    residuals = elapsed - design @ coef
    rms = float(np.sqrt(np.mean(residuals**2)))
    ceiling = 1000.0 / slope if slope > 0 else float("-inf")
    return t0, ceiling, rms


def fit_throughput(
    points: list[SizeRatePoint],
    sample_filter: str = "",
    trimmed: bool = False,
) -> ThroughputFit:
    """Least-squares fit of the linear time model over (bytes, elapsed) pairs.

    With ``trimmed`` the top and bottom 5% of points by residual are dropped
    and the model refit once, tolerating occasional anomalous transfers.
    """
    if len(points) < 3:
        raise InsufficientDataError(f"need >= 3 points, got {len(points)}")
    sizes = {p.payload_bytes for p in points}
    if len(sizes) < 2:
        raise InsufficientDataError("need >= 2 distinct payload sizes")

    bits = np.array([8.0 * p.payload_bytes for p in points])
    elapsed = np.array([p.elapsed_ms for p in points])
    t0, ceiling, rms = _least_squares(bits, elapsed)

    if trimmed and len(points) >= 10:
        residuals = elapsed - (t0 + bits * (1000.0 / ceiling))
        k = max(1, len(points) // 20)  # 5% each tail
        order = np.argsort(residuals)
        keep = order[k:-k]
        if len(keep) >= 3 and len({points[i].payload_bytes for i in keep}) >= 2:
            t0, ceiling, rms = _least_squares(bits[keep], elapsed[keep])

    if ceiling <= 0:
        raise IllConditionedFitError("fitted ceiling is non-positive", ceiling, t0)
    if t0 < 0:
        # A mildly negative intercept is numerically common under noise;
        # reject only when it is material relative to observed times.
        if abs(t0) > 0.05 * float(np.max(elapsed)):
            raise IllConditionedFitError("fitted startup time is negative", ceiling, t0)
        t0 = 0.0

    return ThroughputFit(
        ceiling_bps=ceiling,
        startup_ms=t0,
        n_samples=len(points),
        rms_residual_ms=rms,
        sample_filter=sample_filter,
    )


def predict_rate(fit: ThroughputFit, payload_bytes: float) -> float:
    """Average rate the fitted model implies for a transfer of this size."""
    if payload_bytes <= 0:
        return 0.0
    bits = 8.0 * payload_bytes
    return bits / (fit.startup_ms / 1000.0 + bits / fit.ceiling_bps)


def detect_cap(
    fit_a: ThroughputFit,
    fit_b: ThroughputFit,
    ratio_threshold: float = 0.5,
) -> CapFinding:
    """Flag a protocol-level speed cap: ceiling of A below a fraction of B's.

    Both fits must describe the same provider/line; the caller encodes the
    provider in each fit's sample_filter ("provider/..." prefix).
    """
    prov_a = fit_a.sample_filter.split("/", 1)[0]
    prov_b = fit_b.sample_filter.split("/", 1)[0]
    if prov_a != prov_b:
        raise ComparisonDomainError(
            f"cannot compare fits across providers: {prov_a!r} vs {prov_b!r}"
        )
    ratio = fit_a.ceiling_bps / fit_b.ceiling_bps
    return CapFinding(
        suspected=ratio < ratio_threshold,
        ratio=ratio,
        ceiling_a_bps=fit_a.ceiling_bps,
        ceiling_b_bps=fit_b.ceiling_bps,
        n_a=fit_a.n_samples,
        n_b=fit_b.n_samples,
    )
