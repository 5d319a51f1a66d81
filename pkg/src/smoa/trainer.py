"""Gradient descent on the matrix-approximation objective.

The objective is L(theta) = 0.5 * ||Delta(theta) - T||_F^2 where Delta
is the adapter update. For the global family the gradients are the
classical bilinear ones; for the block family the permutation reduces
the objective to independent per-block terms plus a constant carried by
the off-diagonal part of the reordered target, and each block sees the
anchor twice (once in the residual, once from the chain rule).

Descent is full-batch with backtracking: a step that would increase the
loss is halved up to ``max_halvings`` times, so accepted steps never
increase the loss. Determinism comes from seeded initialization and a
fixed iteration order; there is no stochasticity in the updates.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .adapters import Adapter, AdapterInit, LoraAdapter, SmoaAdapter, init_lora, init_smoa
from .errors import ConfigurationError, DimensionError, NumericalError
from .fileutil import atomic_write_text
from .matrices import Matrix, apply_permutations
from .preprocess import BlockPlan
from .spectrum import svd, tail_energy

__all__ = [
    "FitProblem",
    "FitConfig",
    "TraceStep",
    "FitTrace",
    "loss",
    "gradient",
    "fit",
    "finite_difference_check",
    "save_trace",
]


@dataclass(frozen=True)
class FitProblem:
    """One fitting task: approximate ``target`` with an adapter update.

    ``kind`` picks the family, ``r`` the nominal rank budget (for the
    block family rho = r / plan.k), ``plan`` is required when kind is
    ``smoa``.
    """

    target: Matrix
    kind: Literal["lora", "smoa"]
    r: int
    plan: BlockPlan | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("lora", "smoa"):
            raise ConfigurationError(f"unknown adapter kind {self.kind!r}")
        if self.r < 1:
            raise ConfigurationError(f"r must be a positive integer, got {self.r}")
        if self.kind == "smoa":
            if self.plan is None:
                raise ConfigurationError("block fits need a plan")
            if self.target.shape != (self.plan.d_out, self.plan.d_in):
                raise DimensionError(
                    f"target {self.target.shape} does not match plan "
                    f"{(self.plan.d_out, self.plan.d_in)}"
                )
            if self.r % self.plan.k:
                raise ConfigurationError(f"k={self.plan.k} must divide r={self.r}")


@dataclass(frozen=True)
class FitConfig:
    """Descent hyperparameters; defaults match the reference runs."""

    step_size: float = 1e-2
    max_steps: int = 50000
    grad_tol: float = 1e-9
    max_halvings: int = 10

    def __post_init__(self) -> None:
        if self.step_size <= 0 or self.max_steps < 0 or self.grad_tol < 0 or self.max_halvings < 0:
            raise ConfigurationError(f"invalid fit configuration {self}")


@dataclass(frozen=True)
class TraceStep:
    step: int
    loss: float
    grad_norm: float


@dataclass(frozen=True)
class FitTrace:
    """Recorded descent path plus the final adapter.

    ``floor`` carries the spectral lower bound 0.5 * tail_energy(T, r)
    for global fits (None for block fits); accepted losses are
    monotonically nonincreasing and never drop below the floor.
    """

    steps: tuple[TraceStep, ...]
    adapter: Adapter
    converged: bool
    floor: float | None
    target_norm_sq: float
    init: AdapterInit
    config: FitConfig

    @property
    def final_loss(self) -> float:
        return self.steps[-1].loss

    @property
    def step_count(self) -> int:
        return self.steps[-1].step

    @property
    def relative_loss(self) -> float:
        """Final loss over ||T||_F^2; 0.0 for an exactly zero target."""
        if self.target_norm_sq == 0.0:
            return 0.0
        return self.final_loss / self.target_norm_sq


class _Objective:
    """Raw-array evaluation core shared by loss, gradients, and descent."""

    def __init__(self, problem: FitProblem):
        self.kind = problem.kind
        self.r = problem.r
        self.plan = problem.plan
        if problem.kind == "lora":
            self.t = problem.target.data
            self.constant = 0.0
        else:
            plan = problem.plan
            assert plan is not None
            reordered = apply_permutations(problem.target, plan.p_out, plan.p_in).data
            self.anchors = [anchor.data for anchor in plan.anchors]
            self.t_blocks = []
            in_block = 0.0
            for g in range(plan.k):
                (r0, r1), (c0, c1) = plan.row_intervals[g], plan.col_intervals[g]
                block = reordered[r0:r1, c0:c1].copy()
                self.t_blocks.append(block)
                in_block += float(np.sum(block**2))
            total = float(np.sum(reordered**2))
            # off-diagonal-block energy is constant under block updates
            self.constant = 0.5 * max(total - in_block, 0.0)

    def loss(self, factors: list[tuple[np.ndarray, np.ndarray]]) -> float:
        # a candidate step may overflow; the caller detects non-finite
        # losses, so the warning is suppressed rather than surfaced
        with np.errstate(over="ignore", invalid="ignore"):
            if self.kind == "lora":
                a, b = factors[0]
                return 0.5 * float(np.sum((b @ a - self.t) ** 2))
            acc = self.constant
            for (a, b), anchor, t_block in zip(factors, self.anchors, self.t_blocks):
                acc += 0.5 * float(np.sum(((b @ a) * anchor - t_block) ** 2))
            return acc

    def gradients(
        self, factors: list[tuple[np.ndarray, np.ndarray]]
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        if self.kind == "lora":
            a, b = factors[0]
            residual = b @ a - self.t
            return [(b.T @ residual, residual @ a.T)]
        grads = []
        for (a, b), anchor, t_block in zip(factors, self.anchors, self.t_blocks):
            masked = ((b @ a) * anchor - t_block) * anchor
            grads.append((b.T @ masked, masked @ a.T))
        return grads


def _grad_norm(grads: list[tuple[np.ndarray, np.ndarray]]) -> float:
    return math.sqrt(sum(float(np.sum(da**2) + np.sum(db**2)) for da, db in grads))


def _adapter_factors(adapter: Adapter) -> list[tuple[np.ndarray, np.ndarray]]:
    if isinstance(adapter, LoraAdapter):
        return [(adapter.a.data, adapter.b.data)]
    return [(a.data, b.data) for a, b in adapter.factors]


def _check_adapter(problem: FitProblem, adapter: Adapter) -> None:
    if problem.kind == "lora":
        if not isinstance(adapter, LoraAdapter):
            raise ConfigurationError("problem kind is lora but adapter is not")
        if (adapter.d_out, adapter.d_in) != problem.target.shape:
            raise DimensionError(
                f"adapter {(adapter.d_out, adapter.d_in)} does not match "
                f"target {problem.target.shape}"
            )
    else:
        if not isinstance(adapter, SmoaAdapter):
            raise ConfigurationError("problem kind is smoa but adapter is not")
        assert problem.plan is not None
        if adapter.plan.k != problem.plan.k or not (
            adapter.plan.p_out == problem.plan.p_out and adapter.plan.p_in == problem.plan.p_in
        ):
            raise ConfigurationError("adapter was built over a different plan")


def loss(problem: FitProblem, adapter: Adapter) -> float:
    """Objective value 0.5 * ||Delta - T||_F^2 for this adapter."""
    _check_adapter(problem, adapter)
    return _Objective(problem).loss(_adapter_factors(adapter))


def gradient(problem: FitProblem, adapter: Adapter) -> tuple[tuple[Matrix, Matrix], ...]:
    """Analytic gradients, one ``(dA, dB)`` pair per factor pair.

    Global family: dA = B^T R, dB = R A^T with R = B A - T. Block
    family: dA_k = B_k^T (R_k * M_k), dB_k = (R_k * M_k) A_k^T with
    R_k = (B_k A_k) * M_k - T_k, products entrywise against anchors.
    """
    _check_adapter(problem, adapter)
    grads = _Objective(problem).gradients(_adapter_factors(adapter))
    return tuple((Matrix(da), Matrix(db)) for da, db in grads)


def _spectral_lora_factors(target: Matrix, r: int) -> list[tuple[np.ndarray, np.ndarray]]:
    m = min(target.shape)
    if r > m:
        raise ConfigurationError(f"spectral init needs r <= {m}, got {r}")
    dec = svd(target)
    root = np.sqrt(dec.singular_values[:r])
    b = dec.left_vectors.data[:, :r] * root
    a = (dec.right_vectors.data[:, :r] * root).T
    return [(a.copy(), b.copy())]


def _initial_factors(problem: FitProblem, init: AdapterInit) -> list[tuple[np.ndarray, np.ndarray]]:
    if init.scheme == "spectral":
        if problem.kind != "lora":
            raise ConfigurationError("spectral init applies to lora fits only")
        return _spectral_lora_factors(problem.target, problem.r)
    if problem.kind == "lora":
        adapter: Adapter = init_lora(problem.target.rows, problem.target.cols, problem.r, init)
    else:
        assert problem.plan is not None
        adapter = init_smoa(problem.plan, problem.r, init)
    return [(a.copy(), b.copy()) for a, b in _adapter_factors(adapter)]


def _build_adapter(problem: FitProblem, factors: list[tuple[np.ndarray, np.ndarray]]) -> Adapter:
    if problem.kind == "lora":
        a, b = factors[0]
        return LoraAdapter(Matrix(a), Matrix(b))
    assert problem.plan is not None
    pairs = tuple((Matrix(a), Matrix(b)) for a, b in factors)
    return SmoaAdapter(problem.plan, problem.r // problem.plan.k, pairs)


def fit(problem: FitProblem, init: AdapterInit, config: FitConfig = FitConfig()) -> FitTrace:
    """Run backtracking gradient descent from a seeded initialization.

    Stops when the gradient norm falls below ``grad_tol``, when
    ``max_steps`` is exhausted, or when no step (after halvings) makes
    progress. Raises :class:`NumericalError` with the step index if the
    loss leaves the finite range.
    """
    objective = _Objective(problem)
    factors = _initial_factors(problem, init)
    current_loss = objective.loss(factors)
    grads = objective.gradients(factors)
    gnorm = _grad_norm(grads)
    steps = [TraceStep(0, current_loss, gnorm)]
    converged = gnorm < config.grad_tol
    step = 0
    while not converged and step < config.max_steps:
        eta = config.step_size
        accepted = None
        candidate_loss = math.inf
        for _ in range(config.max_halvings + 1):
            candidate = [(a - eta * da, b - eta * db) for (a, b), (da, db) in zip(factors, grads)]
            candidate_loss = objective.loss(candidate)
            if math.isfinite(candidate_loss) and candidate_loss <= current_loss:
                accepted = candidate
                break
            eta /= 2
        if accepted is None:
            if not math.isfinite(candidate_loss):
                raise NumericalError(f"loss diverged to non-finite at step {step + 1}")
            break  # no progress at the smallest step; stop with converged=False
        factors = accepted
        current_loss = candidate_loss
        grads = objective.gradients(factors)
        gnorm = _grad_norm(grads)
        step += 1
        steps.append(TraceStep(step, current_loss, gnorm))
        converged = gnorm < config.grad_tol
    floor = None
    if problem.kind == "lora":
        floor = 0.5 * tail_energy(problem.target, min(problem.r, min(problem.target.shape)))
    return FitTrace(
        steps=tuple(steps),
        adapter=_build_adapter(problem, factors),
        converged=converged,
        floor=floor,
        target_norm_sq=float(np.sum(problem.target.data**2)),
        init=init,
        config=config,
    )


def finite_difference_check(problem: FitProblem, adapter: Adapter, step: float = 1e-6) -> float:
    """Max relative disagreement between analytic and central differences.

    Perturbs every trainable entry by +-``step`` and compares the
    analytic gradient against (L+ - L-) / (2 step), normalizing by
    max(|analytic|, |numeric|, 1e-12).
    """
    if step <= 0:
        raise ConfigurationError(f"step must be positive, got {step}")
    _check_adapter(problem, adapter)
    objective = _Objective(problem)
    factors = [(a.copy(), b.copy()) for a, b in _adapter_factors(adapter)]
    analytic = objective.gradients(factors)
    worst = 0.0
    for pair_index, (da, db) in enumerate(analytic):
        for side, grad in ((0, da), (1, db)):
            entries = factors[pair_index][side]
            flat = entries.ravel()
            for idx in range(flat.size):
                original = flat[idx]
                flat[idx] = original + step
                plus = objective.loss(factors)
                flat[idx] = original - step
                minus = objective.loss(factors)
                flat[idx] = original
                numeric = (plus - minus) / (2 * step)
                reference = grad.ravel()[idx]
                scale = max(abs(reference), abs(numeric), 1e-12)
                worst = max(worst, abs(reference - numeric) / scale)
    return worst


def save_trace(trace: FitTrace, csv_path: str | os.PathLike, summary_path: str | os.PathLike) -> None:
    """Write the per-step CSV and the JSON summary for one fit."""
    lines = ["step,loss,grad_norm"]
    for entry in trace.steps:
        lines.append(f"{entry.step},{repr(entry.loss)},{repr(entry.grad_norm)}")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    summary = {
        "final_loss": trace.final_loss,
        "relative_loss": trace.relative_loss,
        "floor": trace.floor,
        "converged": trace.converged,
        "steps": trace.step_count,
        "seed": trace.init.seed,
        "config": {
            "step_size": trace.config.step_size,
            "max_steps": trace.config.max_steps,
            "grad_tol": trace.config.grad_tol,
            "max_halvings": trace.config.max_halvings,
            "init_scheme": trace.init.scheme,
            "init_scale": trace.init.scale,
        },
    }
    atomic_write_text(summary_path, json.dumps(summary, indent=1, sort_keys=True) + "\n")
