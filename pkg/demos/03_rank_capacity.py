"""How high the block family can reach.

A global rank-r update can never exceed rank r. The block update's
ceiling is the sum over anchors of min(block side, rho * anchor rank).
With healthy anchors that sum is min(K, r) times larger than what the
same parameter count buys globally, and a rank-1 modulation of a
full-rank anchor already attains the block side exactly.
"""
import json
import tempfile
from pathlib import Path

from smoa import (
    AdapterInit,
    achieved_rank,
    build_plan,
    full_rank_ceiling,
    gaussian_matrix,
    init_smoa,
    low_rank_plus_noise,
    rank_ceiling,
    smoa_update,
)
from smoa.cli import main as cli_main

d = 64
print(f"analytic ceilings at d={d} with full-rank anchors, "
      f"min(K, r) times the global cap up to d:")
print(f"{'r':>4} {'K':>3} {'global cap':>11} {'block ceiling':>14}")
for r in (4, 8, 16, 32):
    for k in (2, 4):
        print(f"{r:>4} {k:>3} {r:>11} {full_rank_ceiling(d, d, k, r):>14}")

plan = build_plan(gaussian_matrix(32, 32, seed=11), 4)
report = rank_ceiling(plan, 8)
print(f"\nmeasured plan at d=32, K=4, r=8 (rho=2):")
for g, block in enumerate(report.per_block):
    print(f"  anchor {g}: side {block.s_k}, rank {block.anchor_rank}, "
          f"ceiling {block.block_ceiling}")
print(f"  total {report.total_ceiling} vs global cap {report.lora_ceiling} "
      f"-> separated: {report.separated}")

adapter = init_smoa(plan, 8, AdapterInit("gaussian", seed=0, scale=1.0))
print(f"  random adapter achieves rank {achieved_rank(smoa_update(adapter))} "
      f"(never above the ceiling)")

starved = build_plan(low_rank_plus_noise(32, 32, rank=2, noise=0.0, seed=5), 4)
print(f"\nrank-2 weight, noiseless: ceiling collapses to "
      f"{rank_ceiling(starved, 8).total_ceiling} (anchors inherit the deficiency)")

rho1 = init_smoa(build_plan(gaussian_matrix(16, 16, seed=2), 2), 2,
                 AdapterInit("gaussian", seed=1, scale=1.0))
print(f"rho=1 on full-rank anchors at d=16: achieved rank "
      f"{achieved_rank(smoa_update(rho1))} from 64 trainable numbers")

with tempfile.TemporaryDirectory() as tmp:
    spec = Path(tmp) / "spec.json"
    spec.write_text(json.dumps(
        {"dims": [64], "ks": [2], "rs": [4, 8, 16, 32], "trials": 1, "seed": 7}
    ))
    cli_main(["sweep", "--spec", str(spec), "--out", tmp, "--quiet"])
    print("\nseeded grid sweep (same data as the CLI writes to sweep.csv):")
    print(f"{'method':>7} {'r':>4} {'params':>7} {'achieved':>9} {'ceiling':>8}")
    for line in (Path(tmp) / "sweep.csv").read_text().strip().splitlines()[1:]:
        f = line.split(",")
        print(f"{f[0]:>7} {f[3]:>4} {f[5]:>7} {f[6]:>9} {f[7]:>8}")
