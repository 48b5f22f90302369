"""Closed-form constellation geometry.

Satellites sit on a spherical shell of radius ``earth_radius + altitude``,
arranged in P orbital planes of S equidistant satellites each. Neighboring
satellites are separated by circle chords, so inter-satellite distances,
ground-to-satellite range, and one-way light latency all reduce to a couple
of closed-form expressions. Everything is SI (meters, seconds) in double
precision; all functions are pure and thread-safe.

Naming convention used throughout the package: ``planes`` (P) counts orbital
planes and wraps in the north/south direction, ``sats_per_plane`` (S) counts
satellites within one plane and wraps west/east.
"""

import math
from dataclasses import dataclass

SPEED_OF_LIGHT_M_S = 299_792_458.0
EARTH_RADIUS_M = 6_371_000.0


class GeometryError(ValueError):
    """Invalid constellation parameters."""


@dataclass(frozen=True)
class ConstellationSpec:
    """Shell layout of a grid constellation.

    Attributes:
        planes: number of orbital planes P (>= 1).
        sats_per_plane: satellites per plane S (>= 1).
        altitude_m: shell altitude above the surface, meters (> 0).
        earth_radius_m: planet radius, meters (> 0).
    """

    planes: int
    sats_per_plane: int
    altitude_m: float
    earth_radius_m: float = EARTH_RADIUS_M

    def __post_init__(self) -> None:
        if self.planes < 1:
            raise GeometryError(f"planes must be >= 1, got {self.planes}")
        if self.sats_per_plane < 1:
            raise GeometryError(
                f"sats_per_plane must be >= 1, got {self.sats_per_plane}"
            )
        if not self.altitude_m > 0:
            raise GeometryError(f"altitude_m must be > 0, got {self.altitude_m}")
        if not self.earth_radius_m > 0:
            raise GeometryError(
                f"earth_radius_m must be > 0, got {self.earth_radius_m}"
            )

    @property
    def orbit_radius_m(self) -> float:
        return self.earth_radius_m + self.altitude_m


@dataclass(frozen=True)
class LinkDistances:
    """Hop lengths on the grid: in-plane chord and worst-case cross-plane chord."""

    intra_plane_m: float
    inter_plane_max_m: float

    def __post_init__(self) -> None:
        if not (self.intra_plane_m > 0 and self.inter_plane_max_m > 0):
            raise GeometryError("link distances must be positive")


def _ring_chord_m(radius_m: float, count: int) -> float:
    # Chord between adjacent points of `count` equidistant points on a circle.
    # 2*r*sin(pi/n) == r*sqrt(2*(1 - cos(2*pi/n))) exactly, but without the
    # catastrophic cancellation of 1-cos for large n.
    return 2.0 * radius_m * math.sin(math.pi / count)


def intra_plane_distance(spec: ConstellationSpec) -> float:
    """Distance in meters between neighboring satellites within one plane."""
    return _ring_chord_m(spec.orbit_radius_m, spec.sats_per_plane)


def inter_plane_max_distance(spec: ConstellationSpec) -> float:
    """Worst-case distance in meters between neighbors in adjacent planes.

    The cross-plane separation varies over an orbit; this is its maximum,
    used as the pessimistic hop length for all cross-plane links.
    """
    return _ring_chord_m(spec.orbit_radius_m, spec.planes)


def link_distances(spec: ConstellationSpec) -> LinkDistances:
    return LinkDistances(
        intra_plane_m=intra_plane_distance(spec),
        inter_plane_max_m=inter_plane_max_distance(spec),
    )


def ground_to_sat_distance(displacement_m: float, spec: ConstellationSpec) -> float:
    """Slant range from a ground point to a satellite.

    ``displacement_m`` is the along-shell offset of the target satellite from
    the satellite directly overhead; the slant range is the hypotenuse of
    that offset and the altitude.
    """
    if displacement_m < 0:
        raise GeometryError(f"displacement must be >= 0, got {displacement_m}")
    return math.hypot(displacement_m, spec.altitude_m)


def propagation_latency(distance_m: float) -> float:
    """One-way speed-of-light propagation time in seconds."""
    if distance_m < 0:
        raise GeometryError(f"distance must be >= 0, got {distance_m}")
    return distance_m / SPEED_OF_LIGHT_M_S
