"""Bundled desk-scale heart phantom: canal geometry, mask image and flow.

The canal is a U around the workspace centre: an atrial limb on the left, a
ventricular floor and an outflow limb on the right, wrapped around a solid
core.  Inlet-1 feeds the atrial end from above, inlet-2 enters the atrial limb
from the left between y = -10 and 0 mm, and the outlet leaves the outflow end
upwards.  Keeping the canal circumferential also keeps the coil allocation
well conditioned along it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .flow import FlowGrid, Port, SynthGeometry, synth_two_inlet_flow
from .planner import CanalMask, load_mask
from .sensing import PIXEL_SIZE_MM

IMAGE_PX = 1020
FIELD_OF_VIEW_MM = 92.0


@dataclass(frozen=True)
class PhantomGeometry:
    radius: float = 15.0  # canal centreline radius, mm
    half_width: float = 8.0
    start_deg: float = 150.0  # atrial end of the U
    end_deg: float = 390.0  # outflow end, counter-clockwise through the bottom
    inlet_width: float = 3.0
    outlet_width: float = 6.0
    inlet2_deg: float = 200.0
    inlet1_strength: float = 0.6
    inlet2_strength: float = 1.0
    jet_decay: float = 10.0  # mm

    def end_point(self, deg):
        a = np.radians(deg)
        return np.array([self.radius * np.cos(a), self.radius * np.sin(a)])

    @property
    def start(self):
        return self.end_point(self.start_deg)

    @property
    def goal(self):
        return self.end_point(self.end_deg)

    def _cap_top(self, deg):
        p = self.end_point(deg)
        return p[1] + np.sqrt(self.half_width**2 - (self.inlet_width / 2) ** 2)

    def inlet1(self) -> Port:
        p = self.start
        return Port((float(p[0]), float(p[1] + self.half_width)), (0.0, -1.0), self.inlet_width,
                    self.inlet1_strength)

    def inlet2(self) -> Port:
        a = np.radians(self.inlet2_deg)
        mouth = (self.radius + self.half_width) * np.array([np.cos(a), np.sin(a)])
        return Port((float(mouth[0]), float(mouth[1])), (float(-np.cos(a)), float(-np.sin(a))),
                    self.inlet_width, self.inlet2_strength)

    def outlet(self) -> Port:
        p = self.goal
        return Port((float(p[0]), float(p[1] + self.half_width)), (0.0, 1.0), self.outlet_width)

    def lumen(self, x, y, extent=FIELD_OF_VIEW_MM / 2 + 1.0):
        """Boolean lumen test for arrays of points in mm."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        r = np.hypot(x, y)
        ang = np.degrees(np.arctan2(y, x)) % 360.0
        lo = self.start_deg % 360.0
        hi = self.end_deg % 360.0
        # angular sector from start_deg counter-clockwise to end_deg
        in_sector = (ang >= lo) | (ang <= hi) if lo > hi else (ang >= lo) & (ang <= hi)
        inside = in_sector & (np.abs(r - self.radius) <= self.half_width)
        for p in (self.start, self.goal):
            inside |= np.hypot(x - p[0], y - p[1]) <= self.half_width
        # inlet-1 and outlet channels run straight up to the edge of the field
        s, g = self.start, self.goal
        inside |= (np.abs(x - s[0]) <= self.inlet_width / 2) & (y >= s[1]) & (y <= extent)
        inside |= (np.abs(x - g[0]) <= self.outlet_width / 2) & (y >= g[1]) & (y <= extent)
        # inlet-2 runs radially outward from the atrial limb
        a = np.radians(self.inlet2_deg)
        u = np.array([np.cos(a), np.sin(a)])
        along = x * u[0] + y * u[1]
        across = -x * u[1] + y * u[0]
        inside |= (np.abs(across) <= self.inlet_width / 2) & (along >= self.radius) & (along <= 3 * extent)
        return inside


DEFAULT_GEOMETRY = PhantomGeometry()


def render_mask(geom: PhantomGeometry = DEFAULT_GEOMETRY, size: int = IMAGE_PX,
                fov_mm: float = FIELD_OF_VIEW_MM) -> CanalMask:
    ps = fov_mm / size
    c = (size - 1) / 2.0
    idx = np.arange(size)
    X, Y = np.meshgrid((idx - c) * ps, (c - idx) * ps)
    return CanalMask(geom.lumen(X, Y), ps)


def synth_geometry(geom: PhantomGeometry = DEFAULT_GEOMETRY, spacing: float = 1.0,
                   half_extent: float = FIELD_OF_VIEW_MM / 2) -> SynthGeometry:
    n = int(round(2 * half_extent / spacing)) + 1
    x0 = -spacing * (n - 1) / 2.0
    xs = x0 + spacing * np.arange(n)
    X, Y = np.meshgrid(xs, xs)
    return SynthGeometry(origin=(x0, x0), spacing=spacing, lumen=geom.lumen(X, Y),
                         inlets=(geom.inlet1(), geom.inlet2()), outlet=geom.outlet(),
                         decay_length=geom.jet_decay)


@lru_cache(maxsize=8)
def phantom_flow(peak_speed: float, geom: PhantomGeometry = DEFAULT_GEOMETRY) -> FlowGrid:
    return synth_two_inlet_flow(peak_speed, synth_geometry(geom))


def bundled_mask_path():
    return resources.files("millibot") / "data" / "phantom_mask.pgm"


def bundled_mask() -> CanalMask:
    with resources.as_file(bundled_mask_path()) as p:
        return load_mask(p, PIXEL_SIZE_MM)
