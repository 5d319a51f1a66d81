"""Rank capacity of block adapters versus a global low-rank budget.

A global rank-r update can never exceed rank r. A block update is a
permutation of a block-diagonal matrix, so its rank is the sum of the
block ranks, and block k is bounded by min(s_k, rho * rank(anchor_k))
with s_k the smaller block dimension. Summed over blocks this ceiling U
can exceed r while spending r / K times fewer parameters; ``separated``
flags exactly that regime.

Witnesses make the separation constructive: pick rank-rho coefficient
matrices C_k, modulate the anchors, and assemble the block-diagonal
target. The block family reproduces it exactly by factoring each C_k,
while any rank-r approximation pays at least the Frobenius tail energy
beyond r (the Eckart-Young bound). ``lora_gap`` evaluates that bound
spectrally; no training is involved here.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, RangeError
from .fileutil import atomic_write_text
from .matio import load_matrix, save_matrix
from .matrices import Matrix, block_diagonal, hadamard, invert_permutations
from .preprocess import BlockPlan, load_plan, save_plan
from .spectrum import default_tolerance, numerical_rank, singular_values, svd, tail_energy

__all__ = [
    "BlockCeiling",
    "RankCeilingReport",
    "rank_ceiling",
    "full_rank_ceiling",
    "achieved_rank",
    "WitnessInstance",
    "make_witness",
    "smoa_exact_fit",
    "lora_gap",
    "save_witness",
    "load_witness",
]

WITNESS_FORMAT = "SMOA-WITNESS"
WITNESS_VERSION = 1


@dataclass(frozen=True)
class BlockCeiling:
    """Per-block ingredients: smaller block side, anchor rank, ceiling."""

    s_k: int
    anchor_rank: int
    block_ceiling: int


@dataclass(frozen=True)
class RankCeilingReport:
    """Update-rank ceiling of a block adapter next to the global bound.

    ``total_ceiling`` is the sum of block ceilings and never exceeds
    min(d_out, d_in); ``separated`` is true when it strictly exceeds the
    global budget ``lora_ceiling`` = r. ``epsilon`` is the rank cutoff
    the anchor ranks were measured with.
    """

    per_block: tuple[BlockCeiling, ...]
    total_ceiling: int
    lora_ceiling: int
    separated: bool
    epsilon: float


def rank_ceiling(plan: BlockPlan, r: int, epsilon: float | None = None) -> RankCeilingReport:
    """Ceiling on the update rank achievable at budget r over ``plan``.

    K must divide r; anchor ranks are measured at ``epsilon`` (default
    tolerance per anchor when omitted).
    """
    if r < 1 or r % plan.k:
        raise ConfigurationError(f"k={plan.k} must divide r={r}")
    rho = r // plan.k
    s_out, s_in = plan.block_shape
    s_k = min(s_out, s_in)
    values = [singular_values(anchor) for anchor in plan.anchors]
    if epsilon is None:
        # one shared cutoff across anchors keeps block ranks comparable
        epsilon = default_tolerance(plan.block_shape, max(v[0] for v in values))
    if epsilon < 0:
        raise RangeError(f"epsilon must be nonnegative, got {epsilon}")
    blocks = []
    for v in values:
        anchor_rank = int(np.count_nonzero(v > epsilon))
        blocks.append(BlockCeiling(s_k, anchor_rank, min(s_k, rho * anchor_rank)))
    total = sum(b.block_ceiling for b in blocks)
    return RankCeilingReport(
        per_block=tuple(blocks),
        total_ceiling=total,
        lora_ceiling=r,
        separated=total > r,
        epsilon=float(epsilon),
    )


def full_rank_ceiling(d_out: int, d_in: int, k: int, r: int) -> int:
    """Ceiling when every anchor has full rank: K * min(s, (r/K) * s).

    Evaluated as min(K*s, r*s) in exact integer arithmetic, which also
    covers r < K (where the per-block budget is fractional) without
    leaving the integers. K must divide both dimensions; r is any
    positive budget.
    """
    if k < 1 or d_out % k or d_in % k:
        raise ConfigurationError(f"k={k} must divide dimensions {d_out}x{d_in}")
    if r < 1:
        raise ConfigurationError(f"r must be a positive integer, got {r}")
    s = min(d_out // k, d_in // k)
    return min(k * s, r * s)


def achieved_rank(delta: Matrix, epsilon: float | None = None) -> int:
    """Numerical rank of a realized update."""
    return numerical_rank(delta, epsilon)


@dataclass(frozen=True)
class WitnessInstance:
    """A target the block family fits exactly at rank budget rho * K.

    ``coefficients[k]`` is the rank-rho coefficient C_k; the target in
    reordered coordinates is blkdiag(C_k * anchor_k) (entrywise
    products), carried back through the plan's inverse permutations.
    ``reordered_target_rank`` is the numerical rank of that block
    diagonal, which permutations preserve.
    """

    plan: BlockPlan
    coefficients: tuple[Matrix, ...]
    target: Matrix
    reordered_target_rank: int
    rho: int
    seed: int


def make_witness(plan: BlockPlan, rho: int, seed: int) -> WitnessInstance:
    """Seeded witness with C_k a product of standard Gaussian factors.

    ``rho = 0`` gives the zero target. ``rho`` may not exceed the
    smaller block dimension.
    """
    s_out, s_in = plan.block_shape
    if rho < 0 or rho > min(s_out, s_in):
        raise RangeError(f"rho={rho} out of range 0..{min(s_out, s_in)}")
    rng = np.random.default_rng(seed)
    coefficients = []
    blocks = []
    for anchor in plan.anchors:
        if rho == 0:
            c = Matrix.zeros(s_out, s_in)
        else:
            c = Matrix(rng.standard_normal((s_out, rho)) @ rng.standard_normal((rho, s_in)))
        coefficients.append(c)
        blocks.append(hadamard(c, anchor))
    reordered = block_diagonal(blocks)
    target = invert_permutations(reordered, plan.p_out, plan.p_in)
    return WitnessInstance(
        plan=plan,
        coefficients=tuple(coefficients),
        target=target,
        reordered_target_rank=numerical_rank(reordered),
        rho=rho,
        seed=seed,
    )


def smoa_exact_fit(witness: WitnessInstance):
    """Block adapter reproducing the witness target exactly.

    Each C_k is factored through its rank-rho truncated SVD (exact,
    since rank(C_k) <= rho). A zero witness returns a rho = 1 adapter
    with zero factors.
    """
    from .adapters import SmoaAdapter

    rho = max(witness.rho, 1)
    factors = []
    for c in witness.coefficients:
        dec = svd(c)
        root = np.sqrt(dec.singular_values[:rho])
        b = Matrix(dec.left_vectors.data[:, :rho] * root)
        a = Matrix((dec.right_vectors.data[:, :rho] * root).T)
        factors.append((a, b))
    return SmoaAdapter(witness.plan, rho, tuple(factors))


def lora_gap(witness: WitnessInstance, r: int) -> float:
    """Frobenius-squared distance from the target to the rank-r set.

    Evaluated spectrally as the tail energy beyond r (Eckart-Young);
    zero once r reaches the target rank. Never computed by training.
    """
    if r < 1:
        raise ConfigurationError(f"r must be a positive integer, got {r}")
    m = min(witness.target.shape)
    return tail_energy(witness.target, min(r, m))


def save_witness(witness: WitnessInstance, directory: str | os.PathLike) -> Path:
    """Write a witness bundle: plan, target, coefficients, manifest.

    The manifest records seed, rho, both rank readings, and the gap at
    every budget r = 1..min(d_out, d_in).
    """
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    save_plan(witness.plan, base / "plan.json")
    save_matrix(witness.target, base / "target.mat")
    coeff_names = []
    for i, c in enumerate(witness.coefficients, start=1):
        name = f"coeff_{i:02d}.mat"
        save_matrix(c, base / name)
        coeff_names.append(name)
    m = min(witness.target.shape)
    manifest = {
        "format": WITNESS_FORMAT,
        "version": WITNESS_VERSION,
        "seed": witness.seed,
        "rho": witness.rho,
        "reordered_target_rank": witness.reordered_target_rank,
        "target_rank": numerical_rank(witness.target),
        "gaps": {str(r): lora_gap(witness, r) for r in range(1, m + 1)},
        "plan": "plan.json",
        "target": "target.mat",
        "coefficients": coeff_names,
    }
    atomic_write_text(base / "witness.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return base / "witness.json"


def load_witness(directory: str | os.PathLike) -> WitnessInstance:
    base = Path(directory)
    with open(base / "witness.json", "r", encoding="utf-8") as handle:
        try:
            manifest = json.load(handle)
        except json.JSONDecodeError as exc:
            raise FormatError(f"witness manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != WITNESS_FORMAT:
        raise FormatError(f"not a {WITNESS_FORMAT} manifest: {manifest.get('format')!r}")
    if manifest.get("version") != WITNESS_VERSION:
        raise FormatError(f"unsupported witness version {manifest.get('version')!r}")
    plan = load_plan(base / manifest["plan"])
    target = load_matrix(base / manifest["target"])
    coefficients = tuple(load_matrix(base / name) for name in manifest["coefficients"])
    return WitnessInstance(
        plan=plan,
        coefficients=coefficients,
        target=target,
        reordered_target_rank=int(manifest["reordered_target_rank"]),
        rho=int(manifest["rho"]),
        seed=int(manifest["seed"]),
    )
