"""Hybrid Cartesian sampling: a fully sampled center block plus peripheral
phase-encode lines placed by a golden-step recurrence.

The peripheral slot for counter value n is

    slot(n) = floor(frac((n + 1) * fraction) * n_available)

with fraction defaulting to 0.618. One global counter advances across all
shots of an acquisition, so consecutive shots keep interleaving rather than
repeating each other. A counter value whose slot was already taken within
the current shot is skipped (the counter still advances).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AcquisitionConfig, SamplingMask, validate_config

GOLDEN_FRACTION = 0.618


def center_block_lines(nx: int, n_center: int) -> np.ndarray:
    """Line indices of the centered, fully sampled block."""
    if not 1 <= n_center <= nx:
        raise ValueError(f"center block of {n_center} lines does not fit into nx = {nx}")
    start = (nx - n_center) // 2
    return np.arange(start, start + n_center, dtype=np.intp)


def golden_step_lines(
    n_available: int,
    n_wanted: int,
    counter_start: int = 0,
    fraction: float = GOLDEN_FRACTION,
) -> tuple[np.ndarray, int]:
    """Draw n_wanted distinct slots in [0, n_available) by the golden-step rule.

    Returns (slots in the order they were drawn, next counter value). Slots
    already drawn in this call are skipped; the counter advances regardless,
    which is what keeps successive shots complementary.
    """
    if n_available < 1:
        raise ValueError("n_available must be >= 1")
    if not 0 <= n_wanted <= n_available:
        raise ValueError(f"cannot draw {n_wanted} distinct slots out of {n_available}")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if counter_start < 0:
        raise ValueError("counter_start must be >= 0")

    slots: list[int] = []
    seen = np.zeros(n_available, dtype=bool)
    n = counter_start
    # A rational fraction can orbit a strict subset of slots forever; cap the
    # scan so that degenerate inputs fail loudly instead of spinning.
    limit = counter_start + 64 * n_available + 1024
    while len(slots) < n_wanted:
        if n >= limit:
            raise RuntimeError(
                f"golden-step recurrence with fraction {fraction} failed to cover "
                f"{n_wanted} distinct slots of {n_available}"
            )
        frac = math.fmod((n + 1) * fraction, 1.0)
        s = int(frac * n_available)
        if s >= n_available:  # guard against frac rounding to 1.0
            s = n_available - 1
        if not seen[s]:
            seen[s] = True
            slots.append(s)
        n += 1
    return np.asarray(slots, dtype=np.intp), n


def hybrid_mask(
    config: AcquisitionConfig,
    shot_index: int,
    counter_start: int,
) -> tuple[SamplingMask, int]:
    """Mask for one shot: full center block + golden-step peripheral lines.

    Peripheral slots are numbered over the nx - n_center lines outside the
    center block, low side first. Returns (mask, next counter value).
    """
    problems = validate_config(config)
    if problems:
        raise ValueError("invalid acquisition config: " + "; ".join(problems))
    if not 0 <= shot_index < config.n_shots:
        raise ValueError(f"shot_index {shot_index} out of range [0, {config.n_shots})")

    center = center_block_lines(config.nx, config.n_center_lines)
    lines = np.zeros(config.nx, dtype=bool)
    lines[center] = True

    counter = counter_start
    n_peri = config.n_periphery_lines_per_shot
    if n_peri > 0:
        n_avail = config.nx - config.n_center_lines
        slots, counter = golden_step_lines(n_avail, n_peri, counter, config.golden_fraction)
        # slot -> line index, skipping over the center block
        c0 = center[0]
        peri_lines = np.where(slots < c0, slots, slots + config.n_center_lines)
        lines[peri_lines] = True

    return SamplingMask(nx=config.nx, lines=lines), counter


@dataclass(frozen=True, eq=False)
class TrajectoryPlan:
    """Per-shot masks of one acquisition plus the counter range they cover."""

    config: AcquisitionConfig
    masks: tuple[SamplingMask, ...]
    counter_start: int
    counter_end: int

    def __post_init__(self):
        if len(self.masks) != self.config.n_shots:
            raise ValueError("plan must hold one mask per shot")


def build_trajectory(config: AcquisitionConfig, counter_start: int = 0) -> TrajectoryPlan:
    """Masks for all shots, threading one golden-step counter through them."""
    masks = []
    counter = counter_start
    for r in range(config.n_shots):
        mask, counter = hybrid_mask(config, r, counter)
        masks.append(mask)
    return TrajectoryPlan(
        config=config, masks=tuple(masks), counter_start=counter_start, counter_end=counter
    )


def mask_union(masks) -> SamplingMask:
    """Logical OR of several masks over the same grid."""
    masks = list(masks)
    if not masks:
        raise ValueError("mask_union needs at least one mask")
    nx = masks[0].nx
    lines = np.zeros(nx, dtype=bool)
    for m in masks:
        if m.nx != nx:
            raise ValueError("masks cover different grids")
        lines |= m.lines
    return SamplingMask(nx=nx, lines=lines)
