"""Client for the public GB carbon-intensity API.

Payloads are normalized into the canonical (timestamp, actual, forecast)
frame at this boundary and validated into a CarbonSeries.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Any, Tuple

import httpx
import pandas as pd
import simplejson as json
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

import config
from grid_data import CarbonSeries, GapError, GridDataError, TIMESTAMP_FORMAT, series_from_frame, as_utc
from response_cache import ResponseCache

logger = logging.getLogger(__name__)

NATIONAL_REGION_ID = 0


class HttpError(GridDataError):
    """The API could not be reached or answered with an error status."""


class SchemaDrift(GridDataError):
    """The API payload does not have the expected shape."""

    def __init__(self, message: str, timestamp: Optional[str] = None):
        self.timestamp = timestamp
        if timestamp:
            message = f"{message} at {timestamp}"
        super().__init__(message)


class UnknownRegion(GridDataError):
    pass


class _RetryableStatus(Exception):
    def __init__(self, response: httpx.Response):
        self.response = response
        super().__init__(f"HTTP {response.status_code} for {response.request.url}")


def load_regions(path: Optional[str] = None) -> Dict[int, str]:
    """Load the region registry (id -> name)."""
    path = Path(path or config.REGIONS_FILE)
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    return {int(entry["id"]): str(entry["name"]) for entry in entries}


def chunk_range(start: pd.Timestamp, end: pd.Timestamp, chunk_days: int) -> List[Tuple[pd.Timestamp, pd.Timestamp]]:
    """Split [start, end) into consecutive chunks of at most ``chunk_days``."""
    chunks = []
    a = start
    while a < end:
        b = min(a + pd.Timedelta(days=chunk_days), end)
        chunks.append((a, b))
        a = b
    return chunks


class CarbonIntensityClient:
    def __init__(
        self,
        base_url: str = config.CARBON_API_BASE_URL,
        cache: Optional[ResponseCache] = None,
        timeout: float = config.CARBON_API_TIMEOUT,
        chunk_days: int = config.CARBON_API_CHUNK_DAYS,
        workers: int = config.CARBON_API_WORKERS,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.cache = cache
        self.chunk_days = chunk_days
        self.workers = max(1, workers)
        self.client = httpx.Client(
            base_url=base_url,
            timeout=timeout,
            headers={"Accept": "application/json"},
            transport=transport,
        )

    def close(self):
        self.client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @retry(
        stop=stop_after_attempt(4),
        wait=wait_exponential(multiplier=0.5, max=8),
        retry=retry_if_exception_type((httpx.TransportError, _RetryableStatus)),
        reraise=True,
    )
    def _get(self, path: str) -> Any:
        response = self.client.get(path)
        if response.status_code == 429 or response.status_code >= 500:
            raise _RetryableStatus(response)
        response.raise_for_status()
        return response.json()

    def _request(self, path: str) -> Any:
        try:
            return self._get(path)
        except _RetryableStatus as e:
            logger.error(f"Request to {path} failed after retries: {e}")
            raise HttpError(str(e))
        except httpx.HTTPStatusError as e:
            logger.error(f"Request to {path} failed: {e}")
            raise HttpError(f"HTTP {e.response.status_code} for {path}")
        except httpx.HTTPError as e:
            logger.error(f"Request to {path} failed: {e}")
            raise HttpError(f"{type(e).__name__} for {path}: {e}")
        except ValueError as e:
            raise SchemaDrift(f"response is not JSON: {e}")

    @staticmethod
    def _path(region_id: int, a: pd.Timestamp, b: pd.Timestamp) -> str:
        # The API reports the half hour ending at ``from``, so ask one step early
        # and filter afterwards.
        a = (a - pd.Timedelta(minutes=30)).strftime(TIMESTAMP_FORMAT)
        b = b.strftime(TIMESTAMP_FORMAT)
        if region_id == NATIONAL_REGION_ID:
            return f"/intensity/{a}/{b}"
        return f"/regional/intensity/{a}/{b}/regionid/{region_id}"

    def _fetch_chunk(self, region_id: int, a: pd.Timestamp, b: pd.Timestamp) -> Any:
        logger.debug(f"Fetching region {region_id} {a} -> {b}")
        return self._request(self._path(region_id, a, b))

    def fetch(self, region_id: int, start, end, region_name: str = "", fill: Optional[str] = None) -> CarbonSeries:
        """Fetch [start, end) for one region, using the cache when possible."""
        start, end = as_utc(start), as_utc(end)
        if end <= start:
            raise ValueError(f"'to' ({end}) must be after 'from' ({start})")

        chunks = chunk_range(start, end, self.chunk_days)
        payloads: List[Any] = [None] * len(chunks)
        missing = []
        for i, (a, b) in enumerate(chunks):
            cached = self.cache.get(region_id, a.strftime(TIMESTAMP_FORMAT), b.strftime(TIMESTAMP_FORMAT)) if self.cache else None
            if cached is not None:
                payloads[i] = cached
            else:
                missing.append(i)
        logger.info(f"Region {region_id}: {len(chunks) - len(missing)} cached chunk(s), {len(missing)} to fetch")

        if missing:
            with ThreadPoolExecutor(max_workers=min(self.workers, len(missing))) as pool:
                fetched = list(pool.map(lambda i: self._fetch_chunk(region_id, *chunks[i]), missing))
            for i, payload in zip(missing, fetched):
                payloads[i] = payload

        frames = []
        for i, ((a, b), payload) in enumerate(zip(chunks, payloads)):
            frame = normalize_payload(payload, region_id)
            frame = frame[(frame["timestamp"] >= a) & (frame["timestamp"] < b)]
            frames.append(frame)
            # Only validated chunks are cached
            if self.cache is not None and i in missing:
                self.cache.put(region_id, a.strftime(TIMESTAMP_FORMAT), b.strftime(TIMESTAMP_FORMAT), payload)

        merged = pd.concat(frames, ignore_index=True)
        merged = merged.drop_duplicates(subset="timestamp", keep="first").sort_values("timestamp", kind="stable")
        if merged.empty or merged["timestamp"].iloc[0] != start:
            raise GapError(start)
        expected_last = end - pd.Timedelta(minutes=30)
        if merged["timestamp"].iloc[-1] != expected_last:
            raise GapError(merged["timestamp"].iloc[-1] + pd.Timedelta(minutes=30))
        return series_from_frame(merged, region_id, region_name or str(region_id), fill=fill)


def _entries(payload: Any, region_id: int) -> List[dict]:
    if not isinstance(payload, dict) or "data" not in payload:
        raise SchemaDrift("payload has no 'data' field")
    data = payload["data"]
    if region_id == NATIONAL_REGION_ID:
        if not isinstance(data, list):
            raise SchemaDrift("national 'data' is not a list")
        return data
    # Regional responses nest the series one level down, sometimes inside a list
    if isinstance(data, list):
        if len(data) != 1:
            raise SchemaDrift(f"expected one regional block, got {len(data)}")
        data = data[0]
    if not isinstance(data, dict) or not isinstance(data.get("data"), list):
        raise SchemaDrift("regional block has no 'data' list")
    return data["data"]


def normalize_payload(payload: Any, region_id: int) -> pd.DataFrame:
    """Convert an API payload to the canonical timestamp/actual/forecast frame.

    Regional entries carry only an estimate, which is stored as the actual
    value with no one-step forecast.
    """
    rows = []
    for entry in _entries(payload, region_id):
        try:
            stamp = entry["from"]
            intensity = entry["intensity"]
        except (KeyError, TypeError):
            raise SchemaDrift(f"entry missing 'from'/'intensity': {entry!r}")
        try:
            timestamp = pd.Timestamp(stamp)
        except ValueError:
            raise SchemaDrift(f"bad timestamp {stamp!r}")
        timestamp = timestamp.tz_localize("UTC") if timestamp.tzinfo is None else timestamp.tz_convert("UTC")

        if region_id == NATIONAL_REGION_ID:
            actual = intensity.get("actual")
            forecast = intensity.get("forecast")
            if forecast is None:
                raise SchemaDrift("null forecast intensity", stamp)
        else:
            actual = intensity.get("forecast")
            forecast = None
        if actual is None:
            raise SchemaDrift("null intensity", stamp)
        try:
            actual = float(actual)
            forecast = float(forecast) if forecast is not None else None
        except (TypeError, ValueError):
            raise SchemaDrift(f"non-numeric intensity {intensity!r}", stamp)
        rows.append((timestamp, actual, forecast))

    frame = pd.DataFrame(rows, columns=["timestamp", "actual", "forecast"])
    if region_id != NATIONAL_REGION_ID:
        frame = frame.drop(columns="forecast")
    return frame


def fetch_region(
    region_id: int,
    start,
    end,
    cache_dir: Optional[str] = None,
    regions_file: Optional[str] = None,
    fill: Optional[str] = None,
    client: Optional[CarbonIntensityClient] = None,
) -> CarbonSeries:
    """Fetch a gap-validated series for ``region_id`` covering [start, end).

    Args:
        region_id: Registry id; 0 is the national series.
        start: Inclusive start (UTC).
        end: Exclusive end (UTC).
        cache_dir: Directory for the sqlite response cache.
        regions_file: Alternative region registry.
        fill: ``"linear"`` to interpolate short gaps.
        client: Pre-built client (tests inject a mock transport here).
    """
    regions = load_regions(regions_file)
    if region_id not in regions:
        raise UnknownRegion(f"region {region_id} is not in the registry")
    if as_utc(end) <= as_utc(start):
        raise ValueError(f"'to' ({end}) must be after 'from' ({start})")

    if client is not None:
        return client.fetch(region_id, start, end, regions[region_id], fill=fill)
    cache = ResponseCache(cache_dir or config.CACHE_DIR)
    with CarbonIntensityClient(cache=cache) as owned:
        return owned.fetch(region_id, start, end, regions[region_id], fill=fill)
