"""Systematic-bias detection between two content sources.

Single measurements are noisy; only repeated observations over a window
support an inference.  The statistic is the relative difference of pooled
medians over size-matched buckets, with a bootstrap confidence interval;
a bias is flagged only when the interval excludes zero, the difference
exceeds the policy threshold, and both sides have enough samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..records import BiasReport, BucketStat, Outcome, TransferSample
from .analysis import bucket_index, bucket_label

WEB_KINDS = {"web_html", "web_element", "web_page_aggregate"}


@dataclass(frozen=True)
class BiasParams:
    """Policy knobs, not empirically derived constants."""

    rel_threshold: float = 0.05
    min_samples: int = 30
    bootstrap_n: int = 2000
    ci: float = 0.95
    seed: int | None = 0


def _bucket_arrays(records: list[TransferSample], provider_id: str,
                   source: str, window: tuple[int, int] | None,
                   probe_kinds: set[str]) -> dict[int, np.ndarray]:
    buckets: dict[int, list[float]] = {}
    for s in records:
        if s.outcome is not Outcome.OK or s.provider_id != provider_id:
            continue
        if s.source_label != source or s.probe_kind.value not in probe_kinds:
            continue
        if window is not None and not window[0] <= s.timestamp < window[1]:
            continue
        buckets.setdefault(bucket_index(s.payload_bytes), []).append(s.effective_bps)
    return {k: np.array(v) for k, v in buckets.items()}


def _rel_diff(median_a: float, median_b: float) -> float:
    # Midpoint-normalized so swapping the sources exactly negates the value.
    mid = 0.5 * (median_a + median_b)
    return (median_b - median_a) / mid if mid > 0 else 0.0


def detect_bias(
    records: list[TransferSample],
    provider_id: str,
    source_a: str,
    source_b: str,
    window: tuple[int, int] | None = None,
    params: BiasParams = BiasParams(),
    probe_kinds: set[str] = WEB_KINDS,
    echo_medians: dict[str, float] | None = None,
) -> BiasReport:
    """Compare effective rates of two sources for one provider.

    Positive median_diff_rel means source_b is faster.  Insufficient data
    yields an explicit insufficient_data report, never a silent pass.
    """
    # Canonical internal ordering makes the result exactly antisymmetric in
    # the source arguments (same bootstrap draws either way).
    if source_a > source_b:
        mirrored = detect_bias(records, provider_id, source_b, source_a,
                               window=window, params=params,
                               probe_kinds=probe_kinds,
                               echo_medians=echo_medians)
        return BiasReport(
            provider_id=provider_id, source_a=source_a, source_b=source_b,
            window=mirrored.window,
            buckets=tuple(
                BucketStat(size_bucket=b.size_bucket,
                           median_bps_a=b.median_bps_b,
                           median_bps_b=b.median_bps_a,
                           n_a=b.n_b, n_b=b.n_a)
                for b in mirrored.buckets),
            median_diff_rel=None if mirrored.median_diff_rel is None
            else -mirrored.median_diff_rel,
            ci_low=None if mirrored.ci_high is None else -mirrored.ci_high,
            ci_high=None if mirrored.ci_low is None else -mirrored.ci_low,
            n_a=mirrored.n_b, n_b=mirrored.n_a,
            flagged=mirrored.flagged, status=mirrored.status,
            latency_evidence=None if echo_medians is None else {
                source_a: echo_medians.get(source_a),
                source_b: echo_medians.get(source_b),
            },
        )

    buckets_a = _bucket_arrays(records, provider_id, source_a, window, probe_kinds)
    buckets_b = _bucket_arrays(records, provider_id, source_b, window, probe_kinds)
    matched = sorted(set(buckets_a) & set(buckets_b))

    bucket_stats = tuple(
        BucketStat(
            size_bucket=bucket_label(idx),
            median_bps_a=float(np.median(buckets_a[idx])),
            median_bps_b=float(np.median(buckets_b[idx])),
            n_a=len(buckets_a[idx]),
            n_b=len(buckets_b[idx]),
        )
        for idx in matched
    )
    n_a = sum(len(buckets_a[i]) for i in matched)
    n_b = sum(len(buckets_b[i]) for i in matched)
    win = window if window is not None else (0, 0)
    evidence = None if echo_medians is None else {
        source_a: echo_medians.get(source_a),
        source_b: echo_medians.get(source_b),
    }

    if not matched or n_a < params.min_samples or n_b < params.min_samples:
        return BiasReport(
            provider_id=provider_id, source_a=source_a, source_b=source_b,
            window=win, buckets=bucket_stats,
            median_diff_rel=None, ci_low=None, ci_high=None,
            n_a=n_a, n_b=n_b, flagged=False, status="insufficient_data",
            latency_evidence=evidence,
        )

    pooled_a = np.concatenate([buckets_a[i] for i in matched])
    pooled_b = np.concatenate([buckets_b[i] for i in matched])
    diff = _rel_diff(float(np.median(pooled_a)), float(np.median(pooled_b)))

    # Bootstrap within buckets, preserving each bucket's sample count.
    rng = np.random.default_rng(params.seed)
    boot = params.bootstrap_n
    resampled_a = np.hstack([
        buckets_a[i][rng.integers(0, len(buckets_a[i]), size=(boot, len(buckets_a[i])))]
        for i in matched
    ])
    resampled_b = np.hstack([
        buckets_b[i][rng.integers(0, len(buckets_b[i]), size=(boot, len(buckets_b[i])))]
        for i in matched
    ])
    med_a = np.median(resampled_a, axis=1)
    med_b = np.median(resampled_b, axis=1)
    mid = 0.5 * (med_a + med_b)
    diffs = np.where(mid > 0, (med_b - med_a) / mid, 0.0)
    alpha = 1.0 - params.ci
    ci_low = float(np.quantile(diffs, alpha / 2.0))
    ci_high = float(np.quantile(diffs, 1.0 - alpha / 2.0))

    excludes_zero = ci_low > 0.0 or ci_high < 0.0
    flagged = excludes_zero and abs(diff) > params.rel_threshold

    return BiasReport(
        provider_id=provider_id, source_a=source_a, source_b=source_b,
        window=win, buckets=bucket_stats,
        median_diff_rel=diff, ci_low=ci_low, ci_high=ci_high,
        n_a=n_a, n_b=n_b, flagged=flagged, status="ok",
        latency_evidence=evidence,
    )
