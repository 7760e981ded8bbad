"""Perforated cylinder mesh for the lithiation demo, written in the JSON
mesh format. The outer radial layers have twice the angular resolution of
the inner ones, so the transition cells are seven-faced polyhedra."""

import argparse
import json
import math


def build(r_in, r_out, height, radii_inner, radii_outer, n_theta, n_z):
    radii = [r_in + (r_out - r_in) * t for t in radii_inner + radii_outer]
    k_t = len(radii_inner)  # first ring with doubled resolution
    zs = [height * i / n_z for i in range(n_z + 1)]

    def count(k):
        return n_theta if k < k_t else 2 * n_theta

    vertices, index = [], {}
    for iz, z in enumerate(zs):
        for k, r in enumerate(radii):
            m = count(k)
            for j in range(m):
                a = 2 * math.pi * j / m
                index[(iz, k, j)] = len(vertices)
                vertices.append([r * math.cos(a), r * math.sin(a), z])

    def v(iz, k, j):
        return index[(iz, k, j % count(k))]

    faces, face_id, cells = [], {}, []

    def face(loop):
        key = tuple(sorted(loop))
        if key not in face_id:
            face_id[key] = len(faces)
            faces.append(loop)
        return face_id[key]

    for iz in range(n_z):
        for k in range(len(radii) - 1):
            inner, outer = count(k), count(k + 1)
            for j in range(inner):
                # angular positions on the outer ring
                if outer == inner:
                    outer_idx = [j, j + 1]
                else:
                    outer_idx = [2 * j, 2 * j + 1, 2 * j + 2]
                bottom = [v(iz, k, j)] + [v(iz, k + 1, q) for q in outer_idx] + [v(iz, k, j + 1)]
                top = [v(iz + 1, k, j)] + [v(iz + 1, k + 1, q) for q in outer_idx] + [v(iz + 1, k, j + 1)]
                polys = [bottom, top]
                polys.append([v(iz, k, j), v(iz, k, j + 1), v(iz + 1, k, j + 1), v(iz + 1, k, j)])
                for a, b in zip(outer_idx, outer_idx[1:]):
                    polys.append([v(iz, k + 1, a), v(iz, k + 1, b), v(iz + 1, k + 1, b), v(iz + 1, k + 1, a)])
                polys.append([v(iz, k, j), v(iz, k + 1, outer_idx[0]), v(iz + 1, k + 1, outer_idx[0]), v(iz + 1, k, j)])
                last = outer_idx[-1]
                polys.append([v(iz, k, j + 1), v(iz, k + 1, last), v(iz + 1, k + 1, last), v(iz + 1, k, j + 1)])
                cells.append([face(p) for p in polys])
    return {"vertices": vertices, "faces": faces, "cells": cells}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--n-theta", type=int, default=12)
    ap.add_argument("--n-z", type=int, default=3)
    args = ap.parse_args()
    mesh = build(1.0, 5.0, 5.0, [0.0, 0.15], [0.35, 0.65, 1.0], args.n_theta, args.n_z)
    with open(args.out, "w") as f:
        json.dump(mesh, f, separators=(",", ":"))
    print(f"{len(mesh['vertices'])} vertices, {len(mesh['faces'])} faces, {len(mesh['cells'])} cells")


if __name__ == "__main__":
    main()
