"""Server-to-satellite placement strategies and rotation migration.

Logical servers (chunk stripe targets, ids 0..n-1) are pinned to satellites
by one of three strategies:

* ``rotation_aware``  - fill a visibility window row-major, west to east
  within a plane row, north to south across rows. Suits a ground host that
  can reach many satellites directly.
* ``hop_aware``       - grow rings of increasing hop distance around a
  center satellite (server 0 at the center). Suits a host on a fixed
  satellite; never migrates.
* ``rotation_hop_aware`` - hop rings confined to the smallest odd-sided
  square box that fits all servers, centered on the overhead satellite.

The constellation drifts relative to a ground host: once per handoff the
window shifts one in-plane index west, the column of satellites leaving on
the east ships its chunks to the column entering on the west (same plane,
in parallel), and everything else stays put. ``locate_server`` is the closed
form of that process, so a chunk's current satellite is computable from the
placement at write time plus the number of elapsed handoffs alone.

Within-ring order for hop placements is fixed (north rows first, east
before west inside a row) so independently computed layouts agree
cell-for-cell. Display labels are 1-based (server 0 renders as 1).
"""

import math
from dataclasses import dataclass

from .geometry import ConstellationSpec
from .topology import SatCoord, validate_coord

ROTATION_AWARE = "rotation_aware"
HOP_AWARE = "hop_aware"
ROTATION_HOP_AWARE = "rotation_hop_aware"
STRATEGIES = (ROTATION_AWARE, HOP_AWARE, ROTATION_HOP_AWARE)


class PlacementError(ValueError):
    """Strategy cannot produce a valid placement."""


class CapacityError(PlacementError):
    """More servers than placeable satellites."""


class UnsupportedStrategyError(PlacementError):
    """Operation not defined for this strategy."""


@dataclass(frozen=True)
class LosWindow:
    """Odd-sided rectangle of visible satellites centered on the overhead one."""

    center: SatCoord
    half_width_planes: int
    half_width_index: int

    def __post_init__(self) -> None:
        if self.half_width_planes < 0 or self.half_width_index < 0:
            raise PlacementError("window half-widths must be >= 0")

    @property
    def rows(self) -> int:
        return 2 * self.half_width_planes + 1

    @property
    def cols(self) -> int:
        return 2 * self.half_width_index + 1

    @property
    def area(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class PlacementPlan:
    """Bijection from server ids to satellites at a given rotation epoch.

    half_planes/half_index bound the occupied region around the center and
    drive migration: the column at index offset +half_index is the next to
    leave visibility.
    """

    strategy: str
    center: SatCoord
    assignments: dict[int, SatCoord]
    epoch: int
    half_planes: int
    half_index: int

    @property
    def n_servers(self) -> int:
        return len(self.assignments)

    @property
    def box_width(self) -> int:
        return 2 * self.half_index + 1


@dataclass(frozen=True)
class MigrationPlan:
    """Chunk moves for one rotation step, all within their orbital plane."""

    moves: tuple[tuple[int, SatCoord, SatCoord], ...]


def _signed_offset(value: int, anchor: int, modulus: int) -> int:
    """Smallest-magnitude representative of (value - anchor) mod modulus."""
    off = (value - anchor) % modulus
    if off > modulus // 2:
        off -= modulus
    return off


def _cell(center: SatCoord, dp: int, di: int, spec: ConstellationSpec) -> SatCoord:
    return SatCoord(
        (center.plane + dp) % spec.planes,
        (center.index + di) % spec.sats_per_plane,
    )


def rotation_aware_plan(
    window: LosWindow,
    n_servers: int,
    spec: ConstellationSpec,
    epoch: int = 0,
) -> PlacementPlan:
    """Row-major fill of the visibility window."""
    validate_coord(window.center, spec)
    if window.rows > spec.planes or window.cols > spec.sats_per_plane:
        raise PlacementError("window larger than the constellation")
    if n_servers < 1:
        raise PlacementError(f"n_servers must be >= 1, got {n_servers}")
    if n_servers > window.area:
        raise CapacityError(
            f"{n_servers} servers exceed window capacity {window.area}"
        )
    assignments: dict[int, SatCoord] = {}
    for sid in range(n_servers):
        dp = sid // window.cols - window.half_width_planes
        di = sid % window.cols - window.half_width_index
        assignments[sid] = _cell(window.center, dp, di, spec)
    return PlacementPlan(
        strategy=ROTATION_AWARE,
        center=window.center,
        assignments=assignments,
        epoch=epoch,
        half_planes=window.half_width_planes,
        half_index=window.half_width_index,
    )


def _ring_ordered_offsets(
    plane_range: range, index_range: range, n_servers: int
) -> list[tuple[int, int]]:
    """First n offsets sorted by (hop ring, north row first, east first)."""
    cells = sorted(
        (abs(dp) + abs(di), dp, -di) for dp in plane_range for di in index_range
    )
    return [(dp, -ndi) for _, dp, ndi in cells[:n_servers]]


def _torus_offset_range(size: int) -> range:
    # All `size` distinct offsets with minimal magnitude; the wrap cell of an
    # even torus appears once, as the positive representative.
    return range(-((size - 1) // 2), size // 2 + 1)


def hop_aware_plan(
    center: SatCoord,
    n_servers: int,
    spec: ConstellationSpec,
    epoch: int = 0,
) -> PlacementPlan:
    """Concentric hop rings around the center; server 0 sits on it."""
    validate_coord(center, spec)
    if n_servers < 1:
        raise PlacementError(f"n_servers must be >= 1, got {n_servers}")
    if n_servers > spec.planes * spec.sats_per_plane:
        raise CapacityError(
            f"{n_servers} servers exceed constellation size "
            f"{spec.planes * spec.sats_per_plane}"
        )
    offsets = _ring_ordered_offsets(
        _torus_offset_range(spec.planes),
        _torus_offset_range(spec.sats_per_plane),
        n_servers,
    )
    assignments = {
        sid: _cell(center, dp, di, spec) for sid, (dp, di) in enumerate(offsets)
    }
    max_ring = max(abs(dp) + abs(di) for dp, di in offsets)
    return PlacementPlan(
        strategy=HOP_AWARE,
        center=center,
        assignments=assignments,
        epoch=epoch,
        half_planes=min(max_ring, spec.planes // 2),
        half_index=min(max_ring, spec.sats_per_plane // 2),
    )


def bounding_box_side(n_servers: int) -> int:
    """Odd side length of the placement box: ceil(sqrt(n)), bumped to odd."""
    side = math.isqrt(n_servers)
    if side * side < n_servers:
        side += 1
    if side % 2 == 0:
        side += 1
    return side


def rotation_hop_aware_plan(
    center: SatCoord,
    n_servers: int,
    spec: ConstellationSpec,
    epoch: int = 0,
) -> PlacementPlan:
    """Hop rings inside an odd square box centered on the overhead satellite."""
    validate_coord(center, spec)
    if n_servers < 1:
        raise PlacementError(f"n_servers must be >= 1, got {n_servers}")
    side = bounding_box_side(n_servers)
    if side > spec.planes or side > spec.sats_per_plane:
        raise CapacityError(
            f"{side}x{side} box does not fit a "
            f"{spec.planes}x{spec.sats_per_plane} constellation"
        )
    half = side // 2
    offsets = _ring_ordered_offsets(
        range(-half, half + 1), range(-half, half + 1), n_servers
    )
    assignments = {
        sid: _cell(center, dp, di, spec) for sid, (dp, di) in enumerate(offsets)
    }
    return PlacementPlan(
        strategy=ROTATION_HOP_AWARE,
        center=center,
        assignments=assignments,
        epoch=epoch,
        half_planes=half,
        half_index=half,
    )


def build_plan(
    strategy: str,
    center: SatCoord,
    n_servers: int,
    spec: ConstellationSpec,
    epoch: int = 0,
    window: LosWindow | None = None,
) -> PlacementPlan:
    """Construct a placement for any strategy with uniform arguments.

    rotation_aware uses the given window, defaulting to the same odd square
    box the rotation_hop strategy would use (so the strategies are
    comparable at equal server counts).
    """
    if strategy == ROTATION_AWARE:
        if window is None:
            half = bounding_box_side(n_servers) // 2
            window = LosWindow(center, half, half)
        return rotation_aware_plan(window, n_servers, spec, epoch)
    if strategy == HOP_AWARE:
        return hop_aware_plan(center, n_servers, spec, epoch)
    if strategy == ROTATION_HOP_AWARE:
        return rotation_hop_aware_plan(center, n_servers, spec, epoch)
    raise UnsupportedStrategyError(f"unknown strategy {strategy!r}")


def migration_plan(prev: PlacementPlan, spec: ConstellationSpec) -> MigrationPlan:
    """Moves for one handoff: the east edge column jumps west by the box width.

    Only the rotation strategies migrate; hop_aware placements serve a host
    that moves with the constellation and never needs to.
    """
    if prev.strategy == HOP_AWARE:
        raise UnsupportedStrategyError("hop_aware placements do not migrate")
    s = spec.sats_per_plane
    width = prev.box_width
    east = (prev.center.index + prev.half_index) % s
    moves = []
    for sid in sorted(prev.assignments):
        coord = prev.assignments[sid]
        if coord.index == east:
            moves.append(
                (sid, coord, SatCoord(coord.plane, (coord.index - width) % s))
            )
    return MigrationPlan(moves=tuple(moves))


def apply_migration(
    prev: PlacementPlan, plan: MigrationPlan, spec: ConstellationSpec
) -> PlacementPlan:
    """Placement after executing one migration step: epoch and center advance."""
    assignments = dict(prev.assignments)
    for sid, src, dst in plan.moves:
        if prev.assignments.get(sid) != src:
            raise PlacementError(f"migration source mismatch for server {sid}")
        assignments[sid] = dst
    new_center = SatCoord(
        prev.center.plane, (prev.center.index - 1) % spec.sats_per_plane
    )
    return PlacementPlan(
        strategy=prev.strategy,
        center=new_center,
        assignments=assignments,
        epoch=prev.epoch + 1,
        half_planes=prev.half_planes,
        half_index=prev.half_index,
    )


def advance_plan(
    prev: PlacementPlan, spec: ConstellationSpec
) -> tuple[MigrationPlan, PlacementPlan]:
    mig = migration_plan(prev, spec)
    return mig, apply_migration(prev, mig, spec)


def locate_server(
    plan: PlacementPlan,
    server_id: int,
    elapsed_rotation_steps: int,
    spec: ConstellationSpec,
) -> SatCoord:
    """Satellite holding a server's chunks after some number of handoffs.

    Closed form of iterating migration: a server's index offset from the
    drifting center cycles through the box width while its plane never
    changes. Equals applying migration_plan elapsed times.
    """
    if server_id not in plan.assignments:
        raise PlacementError(f"unknown server id {server_id}")
    if elapsed_rotation_steps < 0:
        raise PlacementError("elapsed steps must be >= 0")
    if elapsed_rotation_steps == 0:
        return plan.assignments[server_id]
    if plan.strategy == HOP_AWARE:
        raise UnsupportedStrategyError("hop_aware placements do not migrate")
    s = spec.sats_per_plane
    width = plan.box_width
    coord = plan.assignments[server_id]
    rel = _signed_offset(coord.index, plan.center.index, s)
    rel_k = (rel + plan.half_index + elapsed_rotation_steps) % width - plan.half_index
    center_k = (plan.center.index - elapsed_rotation_steps) % s
    return SatCoord(coord.plane, (center_k + rel_k) % s)


# -- rendering -------------------------------------------------------------


def _plan_grid(plan: PlacementPlan, spec: ConstellationSpec) -> list[list[int | None]]:
    """Server ids laid out on the plan's bounding region, row-major."""
    by_cell = {coord: sid for sid, coord in plan.assignments.items()}
    rows = []
    for dp in range(-plan.half_planes, plan.half_planes + 1):
        row = []
        for di in range(-plan.half_index, plan.half_index + 1):
            row.append(by_cell.get(_cell(plan.center, dp, di, spec)))
        rows.append(row)
    return rows


def render_ascii(plan: PlacementPlan, spec: ConstellationSpec) -> str:
    """Text grid of display labels (server id + 1); the center is marked ()."""
    grid = _plan_grid(plan, spec)
    width = len(str(plan.n_servers)) + 2
    lines = []
    for r, row in enumerate(grid):
        cells = []
        for c, sid in enumerate(row):
            is_center = (
                r == plan.half_planes and c == plan.half_index
            )
            if sid is None:
                text = "."
            elif is_center:
                text = f"({sid + 1})"
            else:
                text = str(sid + 1)
            cells.append(f"{text:>{width}}")
        lines.append(" ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def render_svg(plan: PlacementPlan, spec: ConstellationSpec) -> str:
    """Deterministic standalone SVG of the same grid."""
    grid = _plan_grid(plan, spec)
    cell = 36
    pad = 4
    rows, cols = len(grid), len(grid[0])
    w, h = cols * cell + 2 * pad, rows * cell + 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">'
    ]
    for r, row in enumerate(grid):
        for c, sid in enumerate(row):
            x, y = pad + c * cell, pad + r * cell
            is_center = r == plan.half_planes and c == plan.half_index
            fill = "#ffd9a0" if sid is not None else "#f2f2f2"
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{fill}" stroke="#555" stroke-width="1"/>'
            )
            if is_center:
                cx, cy = x + cell / 2, y + cell / 2
                parts.append(
                    f'<circle cx="{cx:g}" cy="{cy:g}" r="{cell / 2 - 3:g}" '
                    f'fill="none" stroke="#2a7a2a" stroke-width="2"/>'
                )
            if sid is not None:
                parts.append(
                    f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" '
                    f'font-family="monospace" font-size="13" '
                    f'text-anchor="middle">{sid + 1}</text>'
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
