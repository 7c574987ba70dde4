"""Shared domain types: data vectors, component groupings, masks, explanations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Smallest admissible Bernoulli probability; keeps logit(theta) finite.
THETA_EPS = 1e-6

# Midpoint threshold used everywhere a soft mask is reported as binary.
BINARIZE_THRESHOLD = 0.5


class InputError(ValueError):
    """Caller-supplied data violates an operation contract."""


class ConfigError(ValueError):
    """Malformed configuration (bad grouping indices, bad config files)."""


class GenerationError(RuntimeError):
    """Procedural generation could not satisfy its constraints."""


class NumericalAbort(ArithmeticError):
    """An optimizer encountered a non-finite loss."""


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent, reproducible RNG stream for (seed, path).

    The same (seed, path) always yields the same stream; this is what makes
    common-random-number comparisons and fixed-seed reruns bit-identical.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Datum:
    """A flat vector of real-valued input components at model-input scale."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise InputError("datum must be a non-empty 1-d vector")
        if not np.all(np.isfinite(v)):
            raise InputError("datum components must be finite")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ComponentGrouping:
    """Ordered, pairwise-disjoint index groups mapping mask entries to components.

    Indices that appear in no group are never masked (always preserved).
    """

    groups: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.groups:
            raise ConfigError("grouping must contain at least one group")
        frozen = []
        seen: set[int] = set()
        for g in self.groups:
            idx = np.asarray(g, dtype=np.int64)
            if idx.ndim != 1 or idx.size == 0:
                raise ConfigError("every group must be a non-empty index set")
            if np.any(idx < 0):
                raise ConfigError("group indices must be non-negative")
            members = set(int(i) for i in idx)
            if len(members) != idx.size or members & seen:
                raise ConfigError("groups must be pairwise disjoint index sets")
            seen |= members
            idx = idx.copy()
            idx.setflags(write=False)
            frozen.append(idx)
        object.__setattr__(self, "groups", tuple(frozen))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def max_index(self) -> int:
        return max(int(g.max()) for g in self.groups)

    @staticmethod
    def trivial(dim: int) -> "ComponentGrouping":
        """One group per component."""
        if dim <= 0:
            raise ConfigError("dim must be positive")
        return ComponentGrouping(tuple(np.array([i]) for i in range(dim)))

    @staticmethod
    def from_sets(sets: Iterable[Iterable[int]]) -> "ComponentGrouping":
        return ComponentGrouping(tuple(np.array(sorted(s), dtype=np.int64) for s in sets))


@dataclass(frozen=True)
class Mask:
    """Per-group relevance weights in [0, 1]; soft during optimization."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise InputError("mask must be a non-empty 1-d vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0):
            raise InputError("mask weights must lie in [0, 1]")
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def n_groups(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class BernoulliParams:
    """Per-group inclusion probabilities plus the relaxation temperature."""

    theta: np.ndarray
    temperature: float

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=np.float64)
        if th.ndim != 1 or th.size == 0:
            raise InputError("theta must be a non-empty 1-d vector")
        if np.any(th < THETA_EPS) or np.any(th > 1.0 - THETA_EPS):
            raise InputError("theta must be clamped to [eps, 1-eps]")
        if not (float(self.temperature) > 0.0):
            raise InputError("temperature must be positive")
        object.__setattr__(self, "theta", _freeze(th))
        object.__setattr__(self, "temperature", float(self.temperature))


def clamp_theta(theta: np.ndarray) -> np.ndarray:
    return np.clip(theta, THETA_EPS, 1.0 - THETA_EPS)


@dataclass(frozen=True)
class Explanation:
    """Result of a mask search: final mask, trajectory, and the exact config used."""

    final_mask: Mask
    distortion_curve: tuple[tuple[float, float], ...]
    config_echo: dict
    selected_order: tuple[int, ...] | None = None

    def __post_init__(self):
        curve = tuple((float(s), float(d)) for s, d in self.distortion_curve)
        for s, d in curve:
            if not (np.isfinite(s) and np.isfinite(d)) or d < 0.0:
                raise InputError("distortion curve entries must be finite and non-negative")
        object.__setattr__(self, "distortion_curve", curve)
        if self.selected_order is not None:
            order = tuple(int(i) for i in self.selected_order)
            if len(set(order)) != len(order):
                raise InputError("selected_order must contain unique indices")
            object.__setattr__(self, "selected_order", order)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def expand_mask(mask: Mask, grouping: ComponentGrouping, dim: int) -> np.ndarray:
    """Broadcast per-group weights to a per-component vector of length dim.

    Components outside every group get weight 1 (always preserved).
    """
    if mask.n_groups != grouping.n_groups:
        raise InputError(f"mask has {mask.n_groups} entries for {grouping.n_groups} groups")
    if grouping.max_index >= dim:
        raise ConfigError(f"group index {grouping.max_index} out of range for dim {dim}")
    out = np.ones(dim, dtype=np.float64)
    for w, g in zip(mask.weights, grouping.groups):
        out[g] = w
    return out


def binarize(mask: Mask, threshold: float = BINARIZE_THRESHOLD) -> Mask:
    """Threshold a soft mask to {0, 1}; weights >= threshold become 1."""
    if not (0.0 < threshold < 1.0):
        raise InputError("threshold must lie strictly inside (0, 1)")
    return Mask(np.where(mask.weights >= threshold, 1.0, 0.0))


def sparsity(mask: Mask) -> tuple[float, int]:
    """Return (l1, l0): total weight and count of strictly positive weights."""
    return float(mask.weights.sum()), int(np.count_nonzero(mask.weights > 0.0))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def explanation_to_json(exp: Explanation) -> str:
    """Canonical JSON encoding; byte-identical for identical explanations."""
    doc = {
        "mask": [float(w) for w in exp.final_mask.weights],
        "curve": [[float(s), float(d)] for s, d in exp.distortion_curve],
        "order": list(exp.selected_order) if exp.selected_order is not None else None,
        "config": exp.config_echo,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def explanation_from_json(text: str) -> Explanation:
    doc = json.loads(text)
    order = doc.get("order")
    return Explanation(
        final_mask=Mask(np.asarray(doc["mask"], dtype=np.float64)),
        distortion_curve=tuple((s, d) for s, d in doc["curve"]),
        config_echo=doc["config"],
        selected_order=tuple(order) if order is not None else None,
    )


def write_explanation(exp: Explanation, path: str | Path) -> None:
    Path(path).write_text(explanation_to_json(exp))


def write_mask_csv(mask: Mask, path: str | Path) -> None:
    """Single-column CSV, one weight per line."""
    Path(path).write_text("".join(f"{repr(float(w))}\n" for w in mask.weights))


def read_mask_csv(path: str | Path) -> Mask:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return Mask(np.asarray([float(ln) for ln in lines], dtype=np.float64))
