"""Group-relative policy optimization: advantages and the clipped objective.

Pure numerics over logged rollouts — no model calls. Rollout groups can be
built in code or loaded from JSON produced by a training run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import GroupTooSmall, GrpoError, LengthMismatch, SchemaError

DEFAULT_CLIP_EPSILON = 0.2
ZERO_VARIANCE_THRESHOLD = 1e-8

# exp() overflows float64 just past 709; clamp so pathological logprob gaps
# saturate instead of raising.
_MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class Rollout:
    reward: float
    logprobs_current: tuple[float, ...]
    logprobs_old: tuple[float, ...]
    logprobs_ref: tuple[float, ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise GrpoError(f"reward must be finite, got {self.reward!r}")
        n = len(self.logprobs_current)
        if n == 0:
            raise GrpoError("rollout has no tokens")
        if len(self.logprobs_old) != n or len(self.logprobs_ref) != n:
            raise LengthMismatch(
                f"logprob lengths differ: current={n}, "
                f"old={len(self.logprobs_old)}, ref={len(self.logprobs_ref)}"
            )

    @property
    def token_count(self) -> int:
        return len(self.logprobs_current)


@dataclass(frozen=True)
class RolloutGroup:
    rollouts: tuple[Rollout, ...]
    clip_epsilon: float = DEFAULT_CLIP_EPSILON
    beta: float = 0.0

    @property
    def size(self) -> int:
        return len(self.rollouts)

    def rewards(self) -> list[float]:
        return [r.reward for r in self.rollouts]


@dataclass(frozen=True)
class GrpoResult:
    objective: float
    surrogate: float
    kl: float
    advantages: tuple[float, ...]
    per_rollout_surrogate: tuple[float, ...]
    per_rollout_kl: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "surrogate": self.surrogate,
            "kl": self.kl,
            "advantages": list(self.advantages),
            "per_rollout_surrogate": list(self.per_rollout_surrogate),
            "per_rollout_kl": list(self.per_rollout_kl),
        }


def compute_advantages(rewards: Sequence[float]) -> list[float]:
    """Group-normalized advantages: z-scores under the population std.

    A group whose rewards are (numerically) constant carries no learning
    signal, so all advantages collapse to zero rather than dividing by ~0.
    """
    if len(rewards) < 2:
        raise GroupTooSmall(f"need at least 2 rollouts to normalize, got {len(rewards)}")
    mean = sum(rewards) / len(rewards)
    variance = sum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(variance)
    if std < ZERO_VARIANCE_THRESHOLD:
        return [0.0] * len(rewards)
    return [(r - mean) / std for r in rewards]


def _capped_exp(x: float) -> float:
    return math.exp(min(x, _MAX_EXPONENT))


def evaluate_objective(group: RolloutGroup) -> GrpoResult:
    """Clipped-surrogate objective minus the KL penalty.

    Both terms average per token within a rollout, then per rollout within the
    group. The KL term is the k3 estimator against the reference policy.
    """
    advantages = compute_advantages(group.rewards())
    per_rollout_surrogate = []
    per_rollout_kl = []
    low, high = 1.0 - group.clip_epsilon, 1.0 + group.clip_epsilon
    for rollout, advantage in zip(group.rollouts, advantages):
        surrogate_sum = 0.0
        kl_sum = 0.0
        for current, old, ref in zip(
            rollout.logprobs_current, rollout.logprobs_old, rollout.logprobs_ref
        ):
            ratio = _capped_exp(current - old)
            clipped = min(max(ratio, low), high)
            surrogate_sum += min(ratio * advantage, clipped * advantage)
            delta = ref - current
            kl_sum += _capped_exp(delta) - delta - 1.0
        per_rollout_surrogate.append(surrogate_sum / rollout.token_count)
        per_rollout_kl.append(kl_sum / rollout.token_count)
    surrogate = sum(per_rollout_surrogate) / group.size
    kl = sum(per_rollout_kl) / group.size
    return GrpoResult(
        objective=surrogate - group.beta * kl,
        surrogate=surrogate,
        kl=kl,
        advantages=tuple(advantages),
        per_rollout_surrogate=tuple(per_rollout_surrogate),
        per_rollout_kl=tuple(per_rollout_kl),
    )


_GROUP_KEYS = {"clip_epsilon", "beta", "rollouts"}
_ROLLOUT_KEYS = {"reward", "logprobs_current", "logprobs_old", "logprobs_ref"}


def group_from_dict(payload: dict, *, source: str = "<group>") -> RolloutGroup:
    if not isinstance(payload, dict):
        raise SchemaError("rollout group must be a JSON object", source=source)
    unknown = set(payload) - _GROUP_KEYS
    if unknown:
        raise SchemaError(f"unknown keys: {sorted(unknown)}", source=source)
    rollouts_raw = payload.get("rollouts")
    if not isinstance(rollouts_raw, list) or not rollouts_raw:
        raise SchemaError("'rollouts' must be a non-empty array", source=source, path="rollouts")
    rollouts = []
    for i, item in enumerate(rollouts_raw):
        path = f"rollouts[{i}]"
        if not isinstance(item, dict):
            raise SchemaError("rollout must be an object", source=source, path=path)
        unknown = set(item) - _ROLLOUT_KEYS
        if unknown:
            raise SchemaError(f"unknown keys: {sorted(unknown)}", source=source, path=path)
        try:
            rollouts.append(
                Rollout(
                    reward=_number(item, "reward", source, path),
                    logprobs_current=_float_array(item, "logprobs_current", source, path),
                    logprobs_old=_float_array(item, "logprobs_old", source, path),
                    logprobs_ref=_float_array(item, "logprobs_ref", source, path),
                )
            )
        except GrpoError as exc:
            raise SchemaError(str(exc), source=source, path=path) from exc
    return RolloutGroup(
        rollouts=tuple(rollouts),
        clip_epsilon=_number(payload, "clip_epsilon", source, default=DEFAULT_CLIP_EPSILON),
        beta=_number(payload, "beta", source, default=0.0),
    )


def load_group(path: str | Path) -> RolloutGroup:
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", source=str(path)) from exc
    return group_from_dict(payload, source=str(path))


def _number(
    payload: dict, key: str, source: str, path: str = "", default: float | None = None
) -> float:
    full_path = f"{path}.{key}" if path else key
    if key not in payload:
        if default is not None:
            return default
        raise SchemaError(f"missing required key '{key}'", source=source, path=full_path)
    value = payload[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError("must be a number", source=source, path=full_path)
    return float(value)


def _float_array(payload: dict, key: str, source: str, path: str) -> tuple[float, ...]:
    full_path = f"{path}.{key}"
    value = payload.get(key)
    if not isinstance(value, list):
        raise SchemaError("must be an array of numbers", source=source, path=full_path)
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise SchemaError("must be a number", source=source, path=f"{full_path}[{i}]")
        out.append(float(item))
    return tuple(out)
