"""Episode records and shared environment plumbing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import problems
from ..rsl import DEFAULT_LIMITS, EvalLimits, RewardProgram, RslRuntimeError
from ..rsl import evaluate as rsl_evaluate


class InvalidRewardError(RuntimeError):
    """The reward program failed at runtime; the episode is aborted and the
    candidate's fitness becomes the invalid sentinel."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class StepRecord:
    step: int
    action: object  # int for discrete tasks, list[float] for the 35-entry task
    reward: float
    gbest: float  # objective error after the step


@dataclass
class EpisodeLog:
    instance_id: str
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    y_initial: float = 0.0  # raw objective after initialization
    y_final: float = 0.0  # raw objective at budget exhaustion
    fe_used: int = 0
    total_reward: float = 0.0

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "seed": self.seed,
            "y_initial": self.y_initial,
            "y_final": self.y_final,
            "fe_used": self.fe_used,
            "total_reward": self.total_reward,
            "steps": [
                {"step": s.step, "action": s.action, "reward": s.reward, "gbest": s.gbest}
                for s in self.steps
            ],
        }


class CountingProblem:
    """Wraps an instance so every objective evaluation increments FEs exactly
    once; also tracks the raw initial/best objective values."""

    def __init__(self, instance: problems.ProblemInstance, fe_budget: int):
        self.instance = instance
        self.fe_budget = int(fe_budget)
        self.fes = 0
        self.optimum_value = instance.optimum_value

    @property
    def remaining(self) -> int:
        return self.fe_budget - self.fes

    def eval_one(self, point: np.ndarray) -> float:
        """Objective error (value - optimum) of a single point."""
        self.fes += 1
        return problems.evaluate(self.instance, point) - self.optimum_value

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        self.fes += points.shape[0]
        return problems.evaluate_many(self.instance, points) - self.optimum_value


def emit_reward(
    reward: RewardProgram | None,
    context: dict,
    limits: EvalLimits = DEFAULT_LIMITS,
) -> float:
    """Evaluate the reward program on a context; runtime failures abort the
    episode via InvalidRewardError. A missing program yields 0.0."""
    if reward is None:
        return 0.0
    try:
        return rsl_evaluate(reward, context, limits).total
    except RslRuntimeError as exc:
        raise InvalidRewardError(f"reward program failed: {exc}") from exc


def episode_rng(instance: problems.ProblemInstance, seed: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(problems.mix64(seed, instance.instance_seed))
    )


def instance_label(instance: problems.ProblemInstance) -> str:
    return f"{instance.function_id}:{instance.instance_seed}"
