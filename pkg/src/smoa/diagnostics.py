"""Random-matrix diagnostics for weight spectra.

Singular values are normalized as nu_i = sigma_i / (sigma_hat sqrt(n))
with n the larger dimension, so an i.i.d. noise matrix concentrates its
spectrum in the Marchenko-Pastur bulk: squared normalized values fill
[(1 - sqrt(lambda))^2, (1 + sqrt(lambda))^2] with lambda the aspect
ratio min/max, and the singular bulk edge sits at 1 + sqrt(lambda).
Values strictly beyond that edge are outliers, the structure a low-rank
adapter could latch onto.

When no noise scale is supplied, it is estimated from the spectrum
median: sigma_hat = median(sigma) / sqrt(n * m_med) where m_med is the
median of the Marchenko-Pastur eigenvalue law at the same aspect ratio,
found by inverting its CDF numerically. The median is robust to a small
number of planted spikes.

Overlap scores locate singular directions against the eigenbasis of an
activation second-moment matrix: score_k is the squared best alignment
of right singular vector k, 1.0 for perfect alignment, order log(d)/d
for an unrelated basis. A Monte Carlo band over random unit vectors
calibrates that baseline.
"""
from __future__ import annotations

import functools
import json
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.integrate

from .errors import ConfigurationError, DimensionError, EstimationError, RangeError
from .fileutil import atomic_write_text
from .matrices import Matrix
from .spectrum import default_tolerance, svd

__all__ = [
    "ActivationSample",
    "SpectralReport",
    "normalized_spectrum",
    "estimate_noise_scale",
    "mp_bulk_edge",
    "mp_median",
    "mp_singular_density",
    "count_outliers",
    "overlap_scores",
    "full_report",
    "save_report",
]


def _aspect_ratio(rows: int, cols: int) -> float:
    return min(rows, cols) / max(rows, cols)


def mp_singular_density(nu, ratio: float):
    """Marchenko-Pastur density of normalized singular values.

    Support is [1 - sqrt(ratio), 1 + sqrt(ratio)] (unit noise scale);
    the eigenvalue law pushed through the square root. Vectorized.
    """
    if not 0 < ratio <= 1:
        raise RangeError(f"aspect ratio must lie in (0, 1], got {ratio}")
    nu_arr = np.asarray(nu, dtype=np.float64)
    a = (1 - math.sqrt(ratio)) ** 2
    b = (1 + math.sqrt(ratio)) ** 2
    sq = nu_arr**2
    inside = (sq > a) & (sq < b)
    out = np.zeros_like(nu_arr)
    safe = np.where(inside, nu_arr, 1.0)
    radicand = np.maximum((b - safe**2) * (safe**2 - a), 0.0)
    out = np.where(inside, np.sqrt(radicand) / (math.pi * ratio * safe), 0.0)
    return out if out.ndim else float(out)


def _mp_sv_cdf(x: float, ratio: float) -> float:
    """CDF of the normalized singular-value law at ``x``."""
    lo = 1 - math.sqrt(ratio)
    hi = 1 + math.sqrt(ratio)
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    value, _ = scipy.integrate.quad(
        mp_singular_density, lo, x, args=(ratio,), epsabs=1e-12, epsrel=1e-12, limit=200
    )
    return float(value)


@functools.lru_cache(maxsize=None)
def mp_median(ratio: float) -> float:
    """Median of the Marchenko-Pastur eigenvalue law at ``ratio``.

    Found by bisecting the singular-value CDF to 1e-10 and squaring,
    which is the same median in eigenvalue units.
    """
    if not 0 < ratio <= 1:
        raise RangeError(f"aspect ratio must lie in (0, 1], got {ratio}")
    lo = 1 - math.sqrt(ratio)
    hi = 1 + math.sqrt(ratio)
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if _mp_sv_cdf(mid, ratio) < 0.5:
            lo = mid
        else:
            hi = mid
    nu_med = 0.5 * (lo + hi)
    return nu_med**2


def _estimate_from_values(values: np.ndarray, shape: tuple[int, int]) -> float:
    med = float(np.median(values))
    if med <= 0.0:
        raise EstimationError(
            "cannot estimate a noise scale: the spectrum median is zero"
        )
    n = max(shape)
    return med / math.sqrt(n * mp_median(_aspect_ratio(*shape)))


def estimate_noise_scale(w: Matrix) -> float:
    """Median-based noise-scale estimate; robust to a few spikes."""
    from .spectrum import singular_values

    return _estimate_from_values(singular_values(w), w.shape)


def normalized_spectrum(w: Matrix, noise_scale: float | None = None) -> np.ndarray:
    """Descending nu_i = sigma_i / (noise_scale * sqrt(max dimension)).

    ``noise_scale=None`` triggers the median estimator.
    """
    from .spectrum import singular_values

    values = singular_values(w)
    if noise_scale is None:
        noise_scale = _estimate_from_values(values, w.shape)
    elif noise_scale <= 0:
        raise ConfigurationError(f"noise scale must be positive, got {noise_scale}")
    return values / (noise_scale * math.sqrt(max(w.shape)))


def mp_bulk_edge(rows: int, cols: int, noise_scale: float = 1.0) -> float:
    """Upper bulk edge 1 + sqrt(lambda) in normalized units.

    The normalization already divides the noise scale out, so the edge
    depends only on the aspect ratio; ``noise_scale`` is validated for
    signature compatibility with the raw-spectrum call sites.
    """
    if rows < 1 or cols < 1:
        raise RangeError(f"dimensions must be positive, got {rows}x{cols}")
    if noise_scale <= 0:
        raise ConfigurationError(f"noise scale must be positive, got {noise_scale}")
    return 1.0 + math.sqrt(_aspect_ratio(rows, cols))


def count_outliers(w: Matrix, noise_scale: float | None = None) -> int:
    """Number of normalized singular values strictly above the edge."""
    nu = normalized_spectrum(w, noise_scale)
    return int(np.count_nonzero(nu > mp_bulk_edge(w.rows, w.cols)))


@dataclass(frozen=True)
class ActivationSample:
    """Batch of activation columns, shape d_in x n."""

    data: Matrix

    @property
    def d_in(self) -> int:
        return self.data.rows

    @property
    def count(self) -> int:
        return self.data.cols

    @cached_property
    def covariance(self) -> np.ndarray:
        """Biased (1/n) second-moment matrix, symmetrized."""
        x = self.data.data
        c = (x @ x.T) / self.count
        return (c + c.T) / 2

    @cached_property
    def _eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        vals, vecs = np.linalg.eigh(self.covariance)
        order = np.argsort(vals, kind="stable")[::-1]
        return vals[order], vecs[:, order]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigensystem[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        """Columns are eigenvectors, eigenvalue-descending."""
        return self._eigensystem[1]


def overlap_scores(w: Matrix, activations: ActivationSample) -> list[tuple[int, float]]:
    """Squared best alignment of each right singular vector of ``w``
    against the activation eigenbasis; ``(k, score)`` with k 1-based."""
    if activations.d_in != w.cols:
        raise DimensionError(
            f"activations live in dimension {activations.d_in}, weight columns are {w.cols}"
        )
    right = svd(w).right_vectors.data
    projections = (right.T @ activations.eigenvectors) ** 2
    best = np.minimum(projections.max(axis=1), 1.0)
    return [(k + 1, float(score)) for k, score in enumerate(best)]


def _bulk_band(
    eigenvectors: np.ndarray, draws: int, seed: int
) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    d = eigenvectors.shape[0]
    g = rng.standard_normal((draws, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    scores = ((g @ eigenvectors) ** 2).max(axis=1)
    return float(scores.mean()), float(scores.std())


@dataclass(frozen=True)
class SpectralReport:
    """Full spectral diagnosis of one weight matrix.

    ``tail_energy_curve[r]`` is ``(r, sum of squared singular values
    beyond r)`` for r = 0..m. ``overlaps`` is empty when no activations
    were supplied, and the bulk band fields are None in that case.
    Metadata records the shape, the rank cutoff, the noise scale
    actually used, and the Monte Carlo seed.
    """

    normalized_values: tuple[float, ...]
    bulk_edge: float
    outlier_count: int
    numerical_rank: int
    tail_energy_curve: tuple[tuple[int, float], ...]
    overlaps: tuple[tuple[int, float], ...]
    bulk_overlap_mean: float | None
    bulk_overlap_sigma: float | None
    rows: int
    cols: int
    epsilon: float
    noise_scale: float
    seed: int
    band_draws: int


def full_report(
    w: Matrix,
    activations: ActivationSample | None = None,
    *,
    epsilon: float | None = None,
    noise_scale: float | None = None,
    seed: int = 0,
    band_draws: int = 200,
) -> SpectralReport:
    """Assemble every diagnostic in one pass over one decomposition.

    Deterministic for fixed inputs and seed; the seed feeds only the
    Monte Carlo bulk band (``band_draws`` random unit vectors).
    """
    if band_draws < 1:
        raise ConfigurationError(f"band_draws must be positive, got {band_draws}")
    dec = svd(w)
    values = dec.singular_values
    if noise_scale is None:
        noise_scale = _estimate_from_values(values, w.shape)
    elif noise_scale <= 0:
        raise ConfigurationError(f"noise scale must be positive, got {noise_scale}")
    nu = values / (noise_scale * math.sqrt(max(w.shape)))
    edge = mp_bulk_edge(w.rows, w.cols)
    if epsilon is None:
        epsilon = default_tolerance(w.shape, values[0] if values.size else 0.0)
    if epsilon < 0:
        raise RangeError(f"epsilon must be nonnegative, got {epsilon}")
    rank = int(np.count_nonzero(values > epsilon))
    tail = np.concatenate([np.cumsum((values**2)[::-1])[::-1], [0.0]])
    curve = tuple((r, float(tail[r])) for r in range(values.size + 1))
    if activations is not None:
        pairs = overlap_scores(w, activations)
        mean, sigma = _bulk_band(activations.eigenvectors, band_draws, seed)
    else:
        pairs, mean, sigma = [], None, None
    return SpectralReport(
        normalized_values=tuple(float(v) for v in nu),
        bulk_edge=float(edge),
        outlier_count=int(np.count_nonzero(nu > edge)),
        numerical_rank=rank,
        tail_energy_curve=curve,
        overlaps=tuple(pairs),
        bulk_overlap_mean=mean,
        bulk_overlap_sigma=sigma,
        rows=w.rows,
        cols=w.cols,
        epsilon=float(epsilon),
        noise_scale=float(noise_scale),
        seed=seed,
        band_draws=band_draws,
    )


def save_report(
    report: SpectralReport,
    json_path: str | os.PathLike,
    histogram_path: str | os.PathLike | None = None,
    overlaps_path: str | os.PathLike | None = None,
    bins: int = 50,
) -> None:
    """Write the report JSON and its two CSV panels.

    ``nu_histogram.csv`` holds bin edges, counts, and the bulk density
    prediction at the bin center; ``overlaps.csv`` holds one row per
    singular direction with the Monte Carlo band repeated alongside.
    """
    doc = {
        "normalized_values": list(report.normalized_values),
        "bulk_edge": report.bulk_edge,
        "outlier_count": report.outlier_count,
        "numerical_rank": report.numerical_rank,
        "tail_energy_curve": [[r, e] for r, e in report.tail_energy_curve],
        "overlaps": [[k, s] for k, s in report.overlaps],
        "bulk_overlap_mean": report.bulk_overlap_mean,
        "bulk_overlap_sigma": report.bulk_overlap_sigma,
        "metadata": {
            "rows": report.rows,
            "cols": report.cols,
            "epsilon": report.epsilon,
            "noise_scale": report.noise_scale,
            "seed": report.seed,
            "band_draws": report.band_draws,
        },
    }
    atomic_write_text(json_path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    if histogram_path is not None:
        if bins < 1:
            raise ConfigurationError(f"bins must be positive, got {bins}")
        nu = np.asarray(report.normalized_values)
        top = max(float(nu.max()) if nu.size else 0.0, report.bulk_edge) * 1.02
        edges = np.linspace(0.0, top, bins + 1)
        counts, _ = np.histogram(nu, bins=edges)
        centers = (edges[:-1] + edges[1:]) / 2
        density = mp_singular_density(centers, _aspect_ratio(report.rows, report.cols))
        lines = ["bin_left,bin_right,count,mp_density"]
        for left, right, count, dens in zip(edges[:-1], edges[1:], counts, density):
            lines.append(f"{repr(float(left))},{repr(float(right))},{int(count)},{repr(float(dens))}")
        atomic_write_text(histogram_path, "\n".join(lines) + "\n")
    if overlaps_path is not None:
        lines = ["k,nu_k,score,bulk_mean,bulk_lo,bulk_hi"]
        if report.overlaps and report.bulk_overlap_mean is not None:
            mean = report.bulk_overlap_mean
            sigma = report.bulk_overlap_sigma or 0.0
            lo, hi = mean - 3 * sigma, mean + 3 * sigma
            for k, score in report.overlaps:
                nu_k = report.normalized_values[k - 1]
                lines.append(
                    f"{k},{repr(float(nu_k))},{repr(float(score))},"
                    f"{repr(float(mean))},{repr(float(lo))},{repr(float(hi))}"
                )
        atomic_write_text(overlaps_path, "\n".join(lines) + "\n")
