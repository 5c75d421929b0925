"""Geodesic distance and the geolocation evaluation metrics."""

from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0
ACC_RADIUS_KM = 161.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass
class EvalReport:
    acc_at_161: float  # percent
    mean_km: float
    median_km: float
    per_user_errors: list  # (user_id, km) pairs


def haversine_km(a, b):
    """Great-circle distance in kilometres between two GeoPoints."""
    lat1, lon1, lat2, lon2 = map(np.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return float(2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(min(h, 1.0))))


def haversine_km_arrays(lat1, lon1, lat2, lon2):
    """Vectorized haversine over degree arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2))
    h = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def median_lower(values):
    """Median using the lower-middle element for even counts."""
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def evaluate(predictions, truths, user_ids=None):
    """Acc@161 (inclusive boundary), mean and median error in km."""
    if len(predictions) != len(truths):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths")
    if len(predictions) == 0:
        raise ValueError("empty evaluation set")
    if user_ids is None:
        user_ids = [str(i) for i in range(len(predictions))]
    errors = [haversine_km(p, t) for p, t in zip(predictions, truths)]
    acc = 100.0 * sum(1 for e in errors if e <= ACC_RADIUS_KM) / len(errors)
    return EvalReport(
        acc_at_161=acc,
        mean_km=float(np.mean(errors)),
        median_km=median_lower(errors),
        per_user_errors=list(zip(user_ids, errors)),
    )


def write_error_tsv(path, predictions, truths, user_ids):
    """Per-user error export: uid, true lat/lon, pred lat/lon, km error."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# median convention: lower-middle element for even counts\n")
        f.write("user_id\ttrue_lat\ttrue_lon\tpred_lat\tpred_lon\terror_km\n")
        for uid, p, t in zip(user_ids, predictions, truths):
            err = haversine_km(p, t)
            f.write(f"{uid}\t{t.lat!r}\t{t.lon!r}\t{p.lat!r}\t{p.lon!r}\t{err!r}\n")
