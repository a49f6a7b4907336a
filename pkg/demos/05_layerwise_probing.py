"""Layerwise linear probing across a stack of embedding stores.

Thirteen synthetic layers share one segment table; only layer 2 carries
class structure. The sweep trains a linear probe per layer on the inner
turns of one outer fold and reports development mAP, which peaks exactly
where separability was injected.
"""

import tempfile
from pathlib import Path

from callprobe import ExperimentSpec, layerwise_sweep
from callprobe.synth import SyntheticSpec, generate_layer_stores

TAGS = ["feat"] + [f"layer{i:02d}" for i in range(1, 13)]

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    paths = generate_layer_stores(
        tmp / "layers", TAGS, separable_tag="layer02",
        spec=SyntheticSpec(n_classes=4, per_class=40, dim=12, t_min=3, t_max=10,
                           separation=4.0, seed=3, k=4))
    rows = layerwise_sweep(ExperimentSpec(
        stores={tag: str(paths[tag]) for tag in TAGS},
        fold_plan=str(paths["fold_plan"]),
        families=["LR"],
        output_dir=str(tmp / "out"),
        learning_rates=(1e-3,),
        max_epochs=60,
        seed=0,
    ))
    print("layer      dev mAP")
    for index, tag, dev_map, _ in rows:
        bar = "#" * int(40 * dev_map)
        print(f"{tag:<10} {dev_map:.3f} {bar}")
    best = max(rows, key=lambda r: r[2])
    print(f"\npeak at {best[1]} (mAP {best[2]:.3f}); table written to layerwise.csv")
