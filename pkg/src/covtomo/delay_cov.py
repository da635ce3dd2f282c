"""Delay-covariance estimation from packet-pair arrival logs.

The pipeline per receiver pair: align the pair indices both receivers
observed, normalize each receiver's arrivals into a delay-offset series
(constant path delay and any constant per-receiver clock offset cancel, so
no clock synchronization is needed), then take the unbiased sample
covariance of the two series. Series are integer microseconds; covariances
come out in ms^2.

Integer-valued series go through an exact integer path, so the estimate is
bit-identical under constant shifts of either series and under consistent
permutation of the sample pairs.
"""

from __future__ import annotations

import math
import numbers

import numpy as np

from .errors import InputError, InsufficientDataError, InvariantError, MeasurementGapError
from .model import CovarianceMatrix, DelaySeries, MeasurementLog, NodeId

_US2_PER_MS2 = 10**6


def align_pairs(log: MeasurementLog, receivers) -> tuple[int, ...]:
    """Sorted pair indices at which every requested receiver has an arrival.

    The first surviving index becomes the baseline for normalization.
    Raises InsufficientDataError when fewer than 2 indices survive.
    """
    receivers = set(receivers)
    unknown = receivers - set(log.receivers)
    if unknown:
        raise InputError(f"receivers not in log: {sorted(unknown)}")
    common = set(log.sender_ts)
    for r in receivers:
        common &= set(log.arrivals.get(r, {}))
    if len(common) < 2:
        raise InsufficientDataError(
            f"only {len(common)} pair indices shared by {sorted(receivers)}"
        )
    return tuple(sorted(common))


def normalize_series(log: MeasurementLog, receiver: NodeId, aligned) -> DelaySeries:
    """Delay-offset series for one receiver over an aligned index set.

    Entry k is (t_recv(k) - t_recv(k0)) - (t_send(k) - t_send(k0)) with k0
    the first aligned index; in fixed-interval mode the sender difference is
    (k - k0) * interval, in timestamped mode it is read from the recorded
    sender timestamps.
    """
    aligned = tuple(aligned)
    if not aligned:
        raise InputError("empty aligned index set")
    arr = log.arrivals.get(receiver, {})
    k0 = aligned[0]
    try:
        base = arr[k0]
    except KeyError:
        raise InvariantError(f"receiver {receiver!r} missing arrival at k={k0}") from None
    values = []
    for k in aligned:
        try:
            t = arr[k]
        except KeyError:
            raise InvariantError(f"receiver {receiver!r} missing arrival at k={k}") from None
        if log.fixed_mode:
            sender_diff = (k - k0) * log.interval_us
        else:
            sender_diff = log.sender_ts[k] - log.sender_ts[k0]
        values.append(int(t - base - sender_diff))
    return DelaySeries(receiver=receiver, indices=aligned, values=tuple(values))


def _exact_int_cov_ms2(xs, ys, n: int) -> float:
    # n*sum(xy) - sum(x)*sum(y) is shift-invariant in exact integer
    # arithmetic, so constant offsets cancel bit-exactly.
    sx = sum(xs)
    sy = sum(ys)
    sxy = sum(x * y for x, y in zip(xs, ys))
    num = n * sxy - sx * sy
    return num / (n * (n - 1) * _US2_PER_MS2)


def estimate_covariance(sa: DelaySeries, sb: DelaySeries) -> float:
    """Unbiased sample covariance (divisor n-1) of two aligned series, ms^2.

    Negative estimates are preserved: the recovery cases threshold
    differences of these values and clamping would bias gap tests near zero.
    """
    if sa.indices != sb.indices:
        raise InputError("series cover different pair index sets")
    n = len(sa)
    if n < 2:
        raise InsufficientDataError("need at least 2 aligned samples")
    if all(isinstance(v, numbers.Integral) for v in sa.values) and all(
        isinstance(v, numbers.Integral) for v in sb.values
    ):
        return _exact_int_cov_ms2([int(v) for v in sa.values], [int(v) for v in sb.values], n)
    mean_a = math.fsum(sa.values) / n
    mean_b = math.fsum(sb.values) / n
    acc = math.fsum((x - mean_a) * (y - mean_b) for x, y in zip(sa.values, sb.values))
    return acc / (n - 1) / _US2_PER_MS2


def _receiver_arrays(log: MeasurementLog, receivers):
    """Per-receiver presence mask and send-to-arrival offsets over 0..n-1."""
    n = log.n_pairs
    sender = np.array([log.sender_ts[k] for k in range(n)], dtype=np.int64)
    masks = {}
    offsets = {}
    for r in receivers:
        entries = log.arrivals.get(r, {})
        mask = np.zeros(n, dtype=bool)
        vals = np.zeros(n, dtype=np.int64)
        for k, ts in entries.items():
            mask[k] = True
            vals[k] = ts
        vals -= sender
        masks[r] = mask
        offsets[r] = vals
    return masks, offsets


def _pair_cov_ms2(xm, ym, n: int) -> float:
    # shift by the first sample to keep int64 products small, then use the
    # same exact integer formula as estimate_covariance
    x = xm - xm[0]
    y = ym - ym[0]
    sx = int(x.sum())
    sy = int(y.sum())
    sxy = int((x * y).sum())
    num = n * sxy - sx * sy
    return num / (n * (n - 1) * _US2_PER_MS2)


def build_covariance_matrix(log: MeasurementLog, receivers) -> CovarianceMatrix:
    """Pairwise covariance matrix over the given receiver order.

    Each unordered pair is aligned on its own common index set (this keeps
    the most samples per pair); the matrix is exactly symmetric and the
    diagonal holds each receiver's sample variance over its own arrivals.
    """
    ids = tuple(receivers)
    if len(ids) < 2:
        raise InputError("need at least 2 receivers")
    if len(set(ids)) != len(ids):
        raise InputError("duplicate receiver in list")
    unknown = set(ids) - set(log.receivers)
    if unknown:
        raise InputError(f"receivers not in log: {sorted(unknown)}")
    masks, offsets = _receiver_arrays(log, ids)
    values = np.zeros((len(ids), len(ids)), dtype=float)
    for i, a in enumerate(ids):
        na = int(masks[a].sum())
        if na < 2:
            raise InsufficientDataError(f"receiver {a!r} has only {na} arrivals")
        xa = offsets[a][masks[a]]
        values[i, i] = _pair_cov_ms2(xa, xa, na)
        for j in range(i + 1, len(ids)):
            b = ids[j]
            common = masks[a] & masks[b]
            n = int(common.sum())
            if n < 2:
                raise InsufficientDataError(
                    f"pair ({a!r}, {b!r}) shares only {n} pair indices"
                )
            cov = _pair_cov_ms2(offsets[a][common], offsets[b][common], n)
            values[i, j] = cov
            values[j, i] = cov
    return CovarianceMatrix(ids, values)


def covariance_oracle_from_log(log: MeasurementLog):
    """Pairwise-covariance provider backed by a measurement log, with a small
    cache; raises MeasurementGapError when a pair cannot be estimated."""
    cache: dict[frozenset, float] = {}
    masks, offsets = _receiver_arrays(log, sorted(log.receivers))

    def oracle(a: NodeId, b: NodeId) -> float:
        key = frozenset((a, b))
        if key in cache:
            return cache[key]
        if a not in masks or b not in masks:
            missing = a if a not in masks else b
            raise MeasurementGapError(f"no measurements for {missing!r} (pair ({a!r}, {b!r}))")
        common = masks[a] & masks[b]
        n = int(common.sum())
        if n < 2:
            raise MeasurementGapError(f"pair ({a!r}, {b!r}) shares only {n} pair indices")
        cov = _pair_cov_ms2(offsets[a][common], offsets[b][common], n)
        cache[key] = cov
        return cov

    return oracle
