"""
Error versus number of labels
=============================

The harness runs every (method, budget, seed) cell, writes raw and aggregate
CSVs and renders them as an SVG.  Rerunning the same config rewrites the same
bytes.
"""

from pathlib import Path

from nstlab.bench import parse_config, plot_curves, run_sweep

config = Path(__file__).with_name("configs") / "two_moons_sweep.toml"
spec = parse_config(config)
result = run_sweep(spec, "demo_output")

for row in result.aggregates:
    print(f"{row.method:>10} n={row.n_labeled:<3} {100 * row.mean_error:5.1f} +/- {100 * row.std_error:4.1f} %")

plot_curves(result.aggregate_path, Path("demo_output") / "curves.svg")
print("wrote demo_output/curves.svg")

first = result.raw_path.read_bytes()
run_sweep(spec, "demo_output")
print("rerun byte-identical:", first == result.raw_path.read_bytes())
