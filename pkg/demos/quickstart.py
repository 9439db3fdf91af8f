"""End-to-end run on a small synthetic dataset: generate data, train both
stages briefly, evaluate, complete one frame and save panels.

    python3 demos/quickstart.py [OUT_DIR]

Takes a few seconds on a laptop CPU. The networks are the "tiny" presets and
barely trained, so expect rough depth maps; the point is the workflow.
"""
import sys
from pathlib import Path

from scaffusion import RunConfig, generate_dataset
from scaffusion.data import Dataset
from scaffusion.pipeline import (CompletionModel, evaluate_model, infer, train_fusionnet,
                                 train_scaffnet, visualize)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "quickstart-out")

generate_dataset(out / "room", seed=0, layout="room", frames=8, sequences=6, width=96, height=64)
generate_dataset(out / "corridor", seed=1, layout="corridor", frames=6, sequences=2, width=96, height=64)

stage1 = RunConfig(dataset=str(out / "room"), epochs=4, batch_size=8)
scaff = train_scaffnet(stage1, out_dir=out / "runs" / "scaffnet")

stage2 = RunConfig(stage="fusionnet", dataset=str(out / "corridor"), epochs=3, batch_size=4)
fused = train_fusionnet(stage2, scaff, out_dir=out / "runs" / "fusionnet")
h = fused.metrics["scaffnet_hash"]
print(f"ScaffNet frozen during stage 2: {h['before'] == h['after']}")

model = CompletionModel.from_checkpoint(fused)
for which in ("topology", "depth"):
    agg, _ = evaluate_model(model, out / "corridor", which=which)
    print(f"{which:>8}: MAE {agg.mae:7.1f} mm  RMSE {agg.rmse:7.1f} mm")

frame = Dataset(out / "corridor").frame(0, 3)
result = infer(frame.image, frame.sparse, model)
print(f"completed one frame: {result.depth.shape}, {result.depth.min():.2f}..{result.depth.max():.2f} m")

for path in visualize(model, out / "corridor", out / "panels", count=2):
    print("wrote", path)
