"""Deciding whether a weight has room for structured adapters.

Normalized by the estimated noise scale, the singular values of a pure
noise matrix fill a predictable bulk with a hard edge. Values past the
edge are structure. Activation covariance tells a second story: when
its leading eigenvectors align with the weight's right singular
vectors, the task is concentrated on directions the anchors already
carry, which is the regime the block family is built for.
"""
import tempfile
from pathlib import Path

import numpy as np

from smoa import (
    ActivationSample,
    Matrix,
    count_outliers,
    estimate_noise_scale,
    full_report,
    gaussian_matrix,
    mp_bulk_edge,
    overlap_scores,
    save_report,
    spiked_matrix,
)

noise = gaussian_matrix(256, 256, seed=0)
print(f"pure noise 256x256: estimated scale {estimate_noise_scale(noise):.4f}, "
      f"bulk edge {mp_bulk_edge(256, 256):.3f}, outliers {count_outliers(noise)}")

spiked = spiked_matrix(256, 256, spikes=5, strength=10.0, seed=0)
print(f"same noise plus 5 planted directions: outliers {count_outliers(spiked)}")

d, n = 64, 50 * 64
rng = np.random.default_rng(88)
q, _ = np.linalg.qr(rng.standard_normal((d, d)))
profile = d * (1e-8) ** (np.arange(d) / (d - 1))
aligned_acts = ActivationSample(Matrix(q @ (np.sqrt(profile)[:, None]
                                            * rng.standard_normal((d, n)))))
w = Matrix(np.diag(np.linspace(5.0, 1.0, d)) @ q.T)
aligned = np.array([s for _, s in overlap_scores(w, aligned_acts)])

iso_acts = ActivationSample(Matrix(rng.standard_normal((d, n))))
iso = np.array([s for _, s in overlap_scores(w, iso_acts)])
print(f"\noverlap with task-aligned activations: min {aligned.min():.3f}, "
      f"mean {aligned.mean():.3f}")
print(f"overlap with isotropic activations:    min {iso.min():.3f}, "
      f"mean {iso.mean():.3f} (chance level is about log(d)/d = {np.log(d)/d:.3f})")

with tempfile.TemporaryDirectory() as tmp:
    report = full_report(spiked_matrix(48, 64, spikes=2, strength=9.0, seed=3),
                         noise_scale=1.0)
    save_report(report, Path(tmp) / "report.json",
                histogram_path=Path(tmp) / "nu_histogram.csv")
    print(f"\nfull report: shape {report.rows}x{report.cols}, "
          f"rank {report.numerical_rank}, outliers {report.outlier_count}, "
          f"edge {report.bulk_edge:.3f}")
    hist = (Path(tmp) / "nu_histogram.csv").read_text().strip().splitlines()
    print(f"artifacts written: report.json plus {len(hist) - 1} histogram bins")
