"""Uploading spooled records to the collector.

Records are marked uploaded only after the collector acknowledges them
with an accepted count; the collector's dedup key makes retries safe, so
the net effect is exactly-once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

from ..clock import Clock, SystemClock
from .spool import Spool

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 500


class UploadError(Exception):
    pass


@dataclass(frozen=True)
class BatchReceipt:
    accepted: int
    duplicates: int
    rejected: int


class CollectorClient(Protocol):
    def ingest(self, lines: list[str]) -> BatchReceipt: ...


class HttpCollectorClient:
    """POSTs newline-delimited records to the collector's /ingest."""

    def __init__(self, endpoint: str, timeout_s: float = 30.0):
        self._endpoint = endpoint.rstrip("/")
        self._timeout_s = timeout_s

    def ingest(self, lines: list[str]) -> BatchReceipt:
        import httpx

        body = "\n".join(lines) + "\n"
        try:
            resp = httpx.post(f"{self._endpoint}/ingest", content=body,
                              timeout=self._timeout_s)
            resp.raise_for_status()
            doc = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise UploadError(str(exc)) from None
        return BatchReceipt(accepted=int(doc.get("accepted", 0)),
                            duplicates=int(doc.get("duplicates", 0)),
                            rejected=len(doc.get("rejected", [])))


@dataclass
class UploadReport:
    uploaded: int = 0
    duplicates: int = 0
    rejected: int = 0
    remaining: int = 0
    quarantined: int = 0


def spool_and_upload(
    spool: Spool,
    client: CollectorClient,
    clock: Clock | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    max_attempts: int = 4,
    backoff_ms: float = 1000.0,
) -> UploadReport:
    """Upload pending spool lines in batches with exponential backoff.

    On collector failure, records simply stay spooled for the next round.
    The caller must only invoke this while no battery transfer is in
    flight.
    """
    clock = clock or SystemClock()
    report = UploadReport()
    while True:
        pending = spool.pending()
        report.quarantined = spool.quarantined
        if not pending:
            break
        batch = pending[:batch_size]
        receipt = None
        delay = backoff_ms
        for attempt in range(max_attempts):
            try:
                receipt = client.ingest(batch)
                break
            except UploadError as exc:
                logger.warning("upload attempt %d failed: %s", attempt + 1, exc)
                if attempt + 1 < max_attempts:
                    clock.sleep(delay)
                    delay *= 2
        if receipt is None:
            report.remaining = len(pending)
            return report
        # Every line was either stored, recognized as a duplicate, or
        # rejected as malformed; all three settle the line.
        settled = receipt.accepted + receipt.duplicates + receipt.rejected
        if settled < len(batch):
            logger.warning("collector settled %d of %d lines; keeping the rest",
                           settled, len(batch))
        spool.mark_acked(settled if settled <= len(batch) else len(batch))
        report.uploaded += receipt.accepted
        report.duplicates += receipt.duplicates
        report.rejected += receipt.rejected
        if settled == 0:
            break  # avoid spinning on a collector that settles nothing
    report.remaining = len(spool.pending())
    return report
