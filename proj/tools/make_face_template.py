#!/usr/bin/env python3
"""Generate the bundled low-poly face template (assets/face_lowpoly.json).

The surface is a vertical grid over (azimuth, height) pushed out radially with
a nose bump, shallow eye sockets and a narrowing chin.  Radial displacement
never changes the azimuth, so the cylindrical unwrap stays injective.
"""
import json
import math
import sys

THETA_STEP = 0.075
THETA_HALF = 22          # columns on each side of the midline
Y_STEP = 0.05
Y_MIN_IDX, Y_MAX_IDX = -22, 22


def radius(theta, y):
    r = 1.0
    r += 0.30 * math.exp(-theta**2 / (2 * 0.10**2) - (y - 0.05)**2 / (2 * 0.22**2))
    for cx in (-0.45, 0.45):
        r -= 0.06 * math.exp(-(theta - cx)**2 / (2 * 0.2**2) - (y - 0.3)**2 / (2 * 0.1**2))
    r *= 1.0 - 0.3 * max(0.0, -y - 0.4)
    return r


def label(theta, y):
    for sign, brow, eye in ((-1, 1, 3), (1, 2, 4)):
        t = sign * theta
        if 0.5 <= y <= 0.65 and 0.15 <= t <= 0.75:
            return brow
        if ((t - 0.45) / 0.32)**2 + ((y - 0.3) / 0.11)**2 <= 1.0:
            return eye
    if -0.2 <= y <= 0.4 and abs(theta) <= 0.1 + 0.15 * (0.4 - y) / 0.6:
        return 5
    if abs(theta) <= 0.46 and -0.5 <= y <= -0.36:
        return 6
    if abs(theta) <= 0.46 and -0.66 <= y < -0.5:
        return 7
    return 0


def main(path):
    cols = range(-THETA_HALF, THETA_HALF + 1)
    rows = range(Y_MIN_IDX, Y_MAX_IDX + 1)
    ncols = len(cols)
    vertices, labels, index = [], [], {}
    for ri, yi in enumerate(rows):
        y = yi * Y_STEP
        for ci, ti in enumerate(cols):
            theta = ti * THETA_STEP
            r = radius(theta, y)
            vertices.append([round(r * math.sin(theta), 6), round(y, 6), round(r * math.cos(theta), 6)])
            labels.append(label(theta, y))
            index[(ti, yi)] = ri * ncols + ci
    triangles = []
    for ri in range(len(rows) - 1):
        for ci in range(ncols - 1):
            a = ri * ncols + ci
            b, c, d = a + 1, a + ncols, a + ncols + 1
            triangles.append([a, b, d])
            triangles.append([a, d, c])
    marks = {
        "left_eye_outer": (-10, 6), "left_eye_inner": (-2, 6),
        "right_eye_inner": (2, 6), "right_eye_outer": (10, 6),
        "left_brow": (-6, 11), "right_brow": (6, 11),
        "nose_tip": (0, -2), "mouth_left": (-6, -10), "mouth_right": (6, -10),
        "chin": (0, -21), "jaw_left": (-16, -12), "jaw_right": (16, -12),
    }
    doc = {
        "vertices": vertices,
        "triangles": triangles,
        "part_labels": labels,
        "landmarks": {name: index[key] for name, key in marks.items()},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "assets/face_lowpoly.json")
