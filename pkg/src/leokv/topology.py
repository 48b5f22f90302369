"""Torus-grid coordinates and four-link mesh routing.

Every satellite is addressed by ``SatCoord(plane, index)`` with modular
wraparound in both axes: moving north/south changes the plane (mod P),
moving west/east changes the in-plane index (mod S). Each satellite links to
exactly its four nearest neighbors, so a single hop changes one coordinate
by one. Routing is greedy shortest-ring with a deterministic tie-break:
planes equalize first, ties prefer north, then west.
"""

from dataclasses import dataclass
from typing import NamedTuple

from .geometry import ConstellationSpec, LinkDistances


class TopologyError(ValueError):
    """Coordinate out of range for the constellation."""


@dataclass(frozen=True, order=True)
class SatCoord:
    """Position on the torus grid: orbital plane row, in-plane index column."""

    plane: int
    index: int

    def __str__(self) -> str:
        return f"{self.plane}:{self.index}"


@dataclass(frozen=True)
class HopStep:
    """One +grid hop: at most one axis moves, by one.

    delta_plane -1 is north, +1 south; delta_index -1 is west, +1 east.
    (0, 0) means arrival.
    """

    delta_plane: int
    delta_index: int

    def __post_init__(self) -> None:
        if abs(self.delta_plane) + abs(self.delta_index) > 1:
            raise TopologyError(f"not a single grid hop: {self}")


class DirectionalDistances(NamedTuple):
    north: int
    south: int
    west: int
    east: int


def validate_coord(coord: SatCoord, spec: ConstellationSpec) -> None:
    if not (0 <= coord.plane < spec.planes):
        raise TopologyError(f"plane {coord.plane} out of range [0, {spec.planes})")
    if not (0 <= coord.index < spec.sats_per_plane):
        raise TopologyError(
            f"index {coord.index} out of range [0, {spec.sats_per_plane})"
        )


def directional_distances(
    src: SatCoord, dst: SatCoord, spec: ConstellationSpec
) -> DirectionalDistances:
    """Hop counts from src to dst walking each of the four ring directions."""
    validate_coord(src, spec)
    validate_coord(dst, spec)
    p, s = spec.planes, spec.sats_per_plane
    o, ot = src.plane, dst.plane
    i, it = src.index, dst.index

    if ot < o:
        north = o - ot
        south = p - o + ot
    elif ot > o:
        north = o + p - ot
        south = ot - o
    else:
        north = south = 0

    if it < i:
        west = i - it
        east = s - i + it
    elif it > i:
        west = i + s - it
        east = it - i
    else:
        west = east = 0

    return DirectionalDistances(north, south, west, east)


def next_hop(src: SatCoord, dst: SatCoord, spec: ConstellationSpec) -> HopStep:
    """Greedy next step toward dst.

    Plane distance is closed first; in-plane distance only once the planes
    match. Equal ring distances break toward north (planes) and west (index)
    so paths are reproducible.
    """
    d = directional_distances(src, dst, spec)
    if d.north or d.south:
        if d.north <= d.south:
            return HopStep(-1, 0)
        return HopStep(+1, 0)
    if d.west or d.east:
        if d.west <= d.east:
            return HopStep(0, -1)
        return HopStep(0, +1)
    return HopStep(0, 0)


def apply_step(coord: SatCoord, step: HopStep, spec: ConstellationSpec) -> SatCoord:
    return SatCoord(
        (coord.plane + step.delta_plane) % spec.planes,
        (coord.index + step.delta_index) % spec.sats_per_plane,
    )


def hop_path(
    src: SatCoord, dst: SatCoord, spec: ConstellationSpec
) -> list[SatCoord]:
    """Full coordinate sequence from src to dst, inclusive of both ends."""
    validate_coord(src, spec)
    validate_coord(dst, spec)
    path = [src]
    here = src
    # Greedy routing reduces torus Manhattan distance each hop, so the bound
    # floor(P/2) + floor(S/2) can never be exceeded.
    limit = spec.planes // 2 + spec.sats_per_plane // 2
    for _ in range(limit):
        step = next_hop(here, dst, spec)
        if step == HopStep(0, 0):
            break
        here = apply_step(here, step, spec)
        path.append(here)
    if here != dst:
        raise TopologyError(f"routing failed to converge {src} -> {dst}")
    return path


def manhattan_hops(src: SatCoord, dst: SatCoord, spec: ConstellationSpec) -> int:
    """Shortest hop count between two satellites on the torus."""
    d = directional_distances(src, dst, spec)
    return min(d.north, d.south) + min(d.west, d.east)


def hop_distance_m(step: HopStep, dists: LinkDistances) -> float:
    """Physical length of one grid hop in meters."""
    if step.delta_index:
        return dists.intra_plane_m
    if step.delta_plane:
        return dists.inter_plane_max_m
    return 0.0


def path_distance_m(path: list[SatCoord], dists: LinkDistances) -> float:
    """Sum of hop lengths along a coordinate sequence from hop_path."""
    total = 0.0
    for a, b in zip(path, path[1:]):
        if a.plane != b.plane:
            total += dists.inter_plane_max_m
        elif a.index != b.index:
            total += dists.intra_plane_m
    return total
