"""
Balancing classes with a GAN
============================

One generator is trained per under-represented class and then asked for
exactly as many rows as that class is missing.
"""

import numpy as np

from ganids.data import MULTICLASS_CODEC, Dataset
from ganids.gan import GanTrainConfig, augment_dataset, class_deficits, synthesize, train_gan

rng = np.random.default_rng(1)
counts = [40, 120, 80]
y = np.repeat([0, 1, 2], counts)
centres = np.array([[1.0, 4.0], [4.0, 1.0], [3.0, 3.0]])
X = np.abs(centres[y] + 0.5 * rng.standard_normal((y.size, 2)))
real = Dataset(X, y, ["bytes", "packets"], MULTICLASS_CODEC)

print("deficits per class:", class_deficits(real.y, 3))

generators = {}
for cls in (0, 2):
    gen, disc, hist = train_gan(real, GanTrainConfig(steps=2000, seed=cls, target_class=cls))
    generators[cls] = gen
    fake, _ = synthesize(gen, cls, 500, seed=cls)
    print(f"class {cls}: real mean {X[y == cls].mean(axis=0).round(2)}, generated mean {fake.mean(axis=0).round(2)}")

aug = augment_dataset(real, generators, seed=0)
print("balanced counts:", aug.class_counts(), "synthetic rows:", int(aug.provenance.sum()))
