"""Synthetic driving stream, windowing, normalization and corruption.

Generates an idle / eco / normal drive, cuts 10-second windows labelled
5 seconds ahead, splits them in time, standardizes with training stats,
and shows what the noise and failure injectors do to the raw stream.
"""

import numpy as np

from fusegate.data import (
    DRIVING_CLASSES,
    SyntheticDrivingConfig,
    generate_driving,
    make_windows,
    normalize_featurewise,
    temporal_split,
)
from fusegate.perturbation import apply_failures, apply_noise, failure_mask

stream = generate_driving(SyntheticDrivingConfig(n_samples=9000, seed=0))
print(f"{len(stream)} samples at {stream.sample_period}s, features {stream.feature_names}")
for c, name in enumerate(DRIVING_CLASSES):
    rows = stream.samples[stream.labels == c]
    print(f"  {name:7s} {len(rows) / len(stream):5.1%}  mean RPM {rows[:, 0].mean():7.1f}  "
          f"mean speed {rows[:, 1].mean():5.1f} km/h  |D_HEADING| {np.abs(rows[:, 4]).mean():.2f}")

ds = make_windows(stream, window_len=40, horizon=20)
train, test = temporal_split(ds)
train = normalize_featurewise(train)
test = normalize_featurewise(test, (train.mean, train.std))
print(f"\n{len(ds)} windows -> {len(train)} train / {len(test)} test "
      f"(boundary windows dropped: {len(ds) - len(train) - len(test)})")
print("test feature means under training stats:", np.round(test.windows.mean(axis=(0, 2)), 3))

# persistence: how often the label 5 s ahead equals the current mode
now = stream.labels[ds.end_index]
print(f"label unchanged over the horizon in {np.mean(now == ds.labels):.1%} of windows")

noisy = apply_noise(stream, "20%", seed=1, features=[4])
ratio = noisy.samples[:, 4] / np.where(stream.samples[:, 4] == 0, 1, stream.samples[:, 4])
print(f"\n20% noise on D_HEADING: relative spread {np.std(ratio):.3f}, other features untouched "
      f"{np.array_equal(noisy.samples[:, :4], stream.samples[:, :4])}")
failed = apply_failures(stream, seed=2)
mask = failure_mask(len(stream), stream.n_features, seed=2)
print("failure rate per feature:", np.round(mask.mean(axis=0), 3),
      f"; every wiped value is zero: {np.all(failed.samples[mask] == 0)}")
