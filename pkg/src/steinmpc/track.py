"""Stadium track geometry and lap bookkeeping for the race car benchmark.

The centerline is two parallel straights joined by two semicircles, traversed
counterclockwise, parameterized by arc length starting at the left end of the
bottom straight heading along +x. All geometry is closed form; no splines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StadiumTrack",
    "track_reference",
    "track_progress",
    "LapProgress",
    "CenterlineReference",
]


@dataclass(frozen=True)
class StadiumTrack:
    """Stadium centerline centered at the origin.

    Attributes:
        straight_length: length of each of the two straights.
        radius: radius of the two semicircular ends.
        reference_speed: target speed along the centerline.
    """

    straight_length: float = 5.0
    radius: float = 2.0
    reference_speed: float = 2.0

    def __post_init__(self):
        if not self.straight_length > 0 or not self.radius > 0:
            raise ValueError("straight_length and radius must be positive")
        if not self.reference_speed > 0:
            raise ValueError("reference_speed must be positive")

    @property
    def total_length(self) -> float:
        return 2.0 * self.straight_length + 2.0 * math.pi * self.radius

    def point(self, s: float) -> np.ndarray:
        """Centerline position at arc length s (wraps around the lap)."""
        half = self.straight_length / 2.0
        r = self.radius
        arc = math.pi * r
        s = float(s) % self.total_length
        if s < self.straight_length:
            return np.array([-half + s, -r])
        s -= self.straight_length
        if s < arc:
            ang = -0.5 * math.pi + s / r
            return np.array([half + r * math.cos(ang), r * math.sin(ang)])
        s -= arc
        if s < self.straight_length:
            return np.array([half - s, r])
        s -= self.straight_length
        ang = 0.5 * math.pi + s / r
        return np.array([-half + r * math.cos(ang), r * math.sin(ang)])

    def heading(self, s: float) -> float:
        """Tangent heading at arc length s, continuous and unwrapped.

        Grows by 2*pi per completed lap so that costs built from it never see
        a jump at the finish line.
        """
        total = self.total_length
        laps = math.floor(float(s) / total)
        s = float(s) - laps * total
        arc = math.pi * self.radius
        if s < self.straight_length:
            base = 0.0
        elif s < self.straight_length + arc:
            base = (s - self.straight_length) / self.radius
        elif s < 2.0 * self.straight_length + arc:
            base = math.pi
        else:
            base = math.pi + (s - 2.0 * self.straight_length - arc) / self.radius
        return base + 2.0 * math.pi * laps

    def yaw_rate_reference(self, s: float) -> float:
        """Reference yaw rate: zero on straights, v/R on the arcs."""
        s = float(s) % self.total_length
        arc = math.pi * self.radius
        on_first_arc = self.straight_length <= s < self.straight_length + arc
        on_second_arc = s >= 2.0 * self.straight_length + arc
        if on_first_arc or on_second_arc:
            return self.reference_speed / self.radius
        return 0.0

    def nearest_arclength(self, xy) -> float:
        """Arc length of the centerline point nearest to xy (in [0, total)).

        Exact projection onto each of the four segments; ties resolve to the
        earliest segment so the start point reads 0, not one full lap.
        """
        x, y = float(xy[0]), float(xy[1])
        half = self.straight_length / 2.0
        r = self.radius
        arc = math.pi * r
        candidates = []

        cx = min(max(x, -half), half)
        candidates.append(((cx - x) ** 2 + (-r - y) ** 2, cx + half))

        ang = math.atan2(y, x - half)
        ang = min(max(ang, -0.5 * math.pi), 0.5 * math.pi)
        px, py = half + r * math.cos(ang), r * math.sin(ang)
        candidates.append(((px - x) ** 2 + (py - y) ** 2, self.straight_length + (ang + 0.5 * math.pi) * r))

        cx = min(max(x, -half), half)
        candidates.append(((cx - x) ** 2 + (r - y) ** 2, self.straight_length + arc + (half - cx)))

        ang = math.atan2(y, x + half) % (2.0 * math.pi)
        ang = min(max(ang, 0.5 * math.pi), 1.5 * math.pi)
        px, py = -half + r * math.cos(ang), r * math.sin(ang)
        candidates.append(((px - x) ** 2 + (py - y) ** 2, 2.0 * self.straight_length + arc + (ang - 0.5 * math.pi) * r))

        best_d, best_s = candidates[0]
        for d, s in candidates[1:]:
            if d < best_d - 1e-15:
                best_d, best_s = d, s
        return best_s % self.total_length


def track_reference(track: StadiumTrack, s: float) -> np.ndarray:
    """Full reference state [x, y, heading, speed, yaw rate] at arc length s."""
    pos = track.point(s)
    return np.array(
        [
            pos[0],
            pos[1],
            track.heading(s),
            track.reference_speed,
            track.yaw_rate_reference(s),
        ]
    )


def track_progress(track: StadiumTrack, state, previous: float | None = None) -> float:
    """Fraction of the lap at the nearest centerline point, unwrapped.

    ``previous`` is the value returned for the preceding state of the same
    trial; passing it keeps the fraction continuous across the finish line so
    a completed lap reads >= 1.0. The first call of a trial passes None and
    gets the raw fraction.
    """
    frac = track.nearest_arclength(np.asarray(state, dtype=float)[:2]) / track.total_length
    if previous is None:
        return frac
    delta = (frac - previous) % 1.0
    if delta >= 0.5:
        delta -= 1.0
    return previous + delta


class LapProgress:
    """Accumulates unwrapped lap fraction over the lifetime of one trial."""

    def __init__(self, track: StadiumTrack):
        self._track = track
        self._value: float | None = None

    def update(self, state) -> float:
        self._value = track_progress(self._track, state, self._value)
        return self._value

    @property
    def value(self) -> float | None:
        return self._value


class CenterlineReference:
    """Moving-target reference states for receding-horizon tracking.

    For a plan starting at state x0, step t of the horizon tracks the
    centerline point a further t * dt * reference_speed ahead of x0's
    projection. Reference headings are shifted by whole turns onto the car's
    own heading branch, keeping the quadratic angle error meaningful for a
    car that has already accumulated full laps of heading.
    """

    def __init__(self, track: StadiumTrack):
        self.track = track

    def horizon_states(self, x0: np.ndarray, steps: int, dt: float) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        s0 = self.track.nearest_arclength(x0[:2])
        refs = np.empty((steps + 1, 5))
        for t in range(steps + 1):
            refs[t] = track_reference(self.track, s0 + self.track.reference_speed * t * dt)
        base = refs[0, 2]
        turns = round((x0[2] - base) / (2.0 * math.pi))
        refs[:, 2] += 2.0 * math.pi * turns
        return refs
