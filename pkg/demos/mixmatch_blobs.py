"""
MixMatch with and without the pair term
=======================================

Ten overlapping Gaussian blobs, twenty labels.  Both runs see identical
batches; the second one also asks paired unlabeled points to agree on their
guessed labels.  Afterwards the first hidden layer is projected to 2D.
"""

from dataclasses import replace
from pathlib import Path

from nstlab.bench.embed import embed_features, write_embedding_csv
from nstlab.datagen import build_equivalence_classes, make_dataset, split_semi
from nstlab.trainer import TrainConfig, train

data = make_dataset("blobs", 3000, seed=0, k=10, dim=4, spread=2.0)
part = build_equivalence_classes(split_semi(data, 20, n_test=1000, seed=0), "per-label")

base = TrainConfig(steps=1000, rampup=500, lr=1e-3, lambda_U=10.0, aug_sigma=0.3, eval_interval=250)
runs = {}
for method in ("mixmatch", "mixmatch-nst"):
    runs[method] = train(replace(base, method=method), part)
    curve = " ".join(f"{100 * h.test_error:.1f}" for h in runs[method].history)
    print(f"{method:>13}: test error every 250 steps (%): {curve}")

# hidden activations of the test points
out = Path("demo_output")
out.mkdir(exist_ok=True)
coords = embed_features(runs["mixmatch-nst"].params, 1, part.X_test)
write_embedding_csv(out / "embedding.csv", coords, part.y_test)
print(f"wrote {out / 'embedding.csv'} with {len(coords)} points")
