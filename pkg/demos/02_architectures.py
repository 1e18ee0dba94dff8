"""The four fusion architectures side by side on one driving-sized window.

Each model sees five sensor windows of 40 samples.  The gated models report
their fusion weights; the two-stage model multiplies feature-level and
group-level weights into a final weight per feature.
"""

import numpy as np

from fusegate import KINDS, FusionOverride, build_model
from fusegate.data import DRIVING_FEATURES

GROUPS = [[0, 1, 2], [3, 4]]
window = np.random.default_rng(1).normal(size=(5, 40))

for kind in KINDS:
    model = build_model(kind, 5, 40, 3, group_spec=GROUPS, seed=0)
    logits, rep = model(window)
    print(f"\n{kind}: {model.num_parameters():,} parameters, logits {np.round(logits.data, 3)}")
    if rep.feature_weights is not None:
        pairs = (f"{n}={w:.3f}" for n, w in zip(DRIVING_FEATURES, rep.feature_weights))
        print("  feature weights", " ".join(pairs))
    if rep.group_weights is not None:
        print("  group weights  ", np.round(rep.group_weights, 3))
    if kind == "two_stage":
        print("  final weights  ", np.round(rep.final_weights, 3))

# pin the weights: a feature weight of 0.26 in a group weighted 0.45 ends at 0.117
model = build_model("two_stage", 5, 40, 3, group_spec=GROUPS, seed=0)
pinned = FusionOverride(np.array([0.26, 0.18, 0.16, 0.21, 0.19]), np.array([0.45, 0.55]))
_, rep = model(window, pinned)
print(f"\npinned two-stage final weight for RPM: {rep.final_weights[0]:.3f}")

# a zero group weight makes the model blind to that group
blind = FusionOverride(pinned.feature_weights, np.array([1.0, 0.0]))
before, _ = model(window, blind)
scrambled = window.copy()
scrambled[3:] = 1e6
after, _ = model(scrambled, blind)
print("logits unchanged after scrambling group 2:", np.array_equal(before.data, after.data))
