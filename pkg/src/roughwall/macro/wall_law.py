"""Slip field on the fictitious circle of a rough annulus."""

from __future__ import annotations

import math

from ..cell import CellResolution
from ..geometry import circle_patch
from ..slip_field import CoverPatch, SlipField, assemble_slip_field


def annulus_slip_field(
    annulus,
    sample_count: int = 4,
    resolution: CellResolution | None = None,
    method: str = "fitted",
    frame_rotation: float = 0.0,
    **cell_kw,
) -> SlipField:
    """Periodic slip field over the angle, one chart covering the whole circle.

    The circle is oriented so that its normal points out of the fluid, into
    the roughness.
    """
    patch = circle_patch(annulus.inner_radius, orientation=-1)
    cover = CoverPatch(patch, (0.0, 2 * math.pi), lambda s: s)
    return assemble_slip_field(
        [cover],
        annulus.profile,
        sample_count=sample_count,
        period=2 * math.pi,
        resolution=resolution or CellResolution(n=256),
        frame_rotation=frame_rotation,
        method=method,
        **cell_kw,
    )
