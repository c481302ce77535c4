#!/usr/bin/env python3
"""Writes the OBJ scenes used by the example configs and the acceptance suite."""
import math


def box(x0, y0, z0, x1, y1, z1):
    verts = [(x, y, z) for z in (z0, z1) for y in (y0, y1) for x in (x0, x1)]
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return verts, tris


def ground(half):
    return [(-half, -half, 0), (half, -half, 0), (half, half, 0), (-half, half, 0)], [(0, 1, 2), (0, 2, 3)]


def hidden():
    # Below the ground plane, so no radar ray can reach it.
    return [(0, 0, -1), (0.2, 0, -1), (0, 0.2, -1)], [(0, 1, 2)]


def tilted_cube(pitch_deg):
    verts, tris = box(-0.5, -0.5, -0.5, 0.5, 0.5, 0.5)
    c, s = math.cos(math.radians(pitch_deg)), math.sin(math.radians(pitch_deg))
    verts = [(x, c * y - s * z, s * y + c * z) for x, y, z in verts]
    zmin = min(v[2] for v in verts)
    return [(x, y, z - zmin) for x, y, z in verts], tris


def building():
    verts, tris = box(-1, -0.75, 0, 1, 0.75, 1.2)
    tris = [t for t in tris if t not in [(4, 5, 7), (4, 7, 6)]]
    verts += [(-1, 0, 1.8), (1, 0, 1.8)]
    tris += [(4, 5, 9), (4, 9, 8), (6, 8, 9), (6, 9, 7), (4, 8, 6), (5, 7, 9)]
    return verts, tris


def write(path, comment, groups):
    lines = ["# " + comment]
    base = 0
    for name, (verts, tris) in groups:
        lines.append("o " + name)
        lines += ["v %.9g %.9g %.9g" % v for v in verts]
        lines += ["f %d %d %d" % tuple(i + 1 + base for i in t) for t in tris]
        base += len(verts)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


write("cube_plane.obj", "unit cube pitched 20 deg about x on a 5 m ground plane",
      [("ground", ground(2.5)), ("cube", tilted_cube(20)), ("hidden", hidden())])
write("building_plane.obj", "gabled building block on a 6 m ground plane",
      [("ground", ground(3.0)), ("building", building()), ("hidden", hidden())])
write("two_facet.obj", "two facets sharing an edge",
      [("default", ([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0.2)], [(0, 1, 2), (0, 2, 3)]))])
