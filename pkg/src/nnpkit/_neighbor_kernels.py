"""Numba kernels for pair enumeration.

All kernels emit half lists (i < j, one entry per unordered pair) into
preallocated arrays and return the number of pairs found, which may
exceed the array capacity; callers detect overflow from the count.
Loops are serial so the emission order is reproducible.

Periodic kernels apply the staircase reduction (c, then b, then a) with
hoisted box scalars; that reduction is exact for displacements below
half the smallest perpendicular width, which the neighbor module checks
before dispatching. Orthorhombic boxes run the same code with zero tilt
entries. Open systems skip wrapping entirely.
"""

import numba as nb
import numpy as np

KIND_NONE = 0
KIND_ORTHORHOMBIC = 1
KIND_TRICLINIC = 2


@nb.njit(cache=True)
def brute_half_open(pos, batch, r_lower, r_upper, pairs, deltas, dists):
    n = pos.shape[0]
    capacity = pairs.shape[0]
    lo2 = r_lower * r_lower
    hi2 = r_upper * r_upper
    count = 0
    for i in range(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        bi = batch[i]
        for j in range(i + 1, n):
            if batch[j] != bi:
                continue
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > lo2 and d2 <= hi2:
                if count < capacity:
                    pairs[count, 0] = i
                    pairs[count, 1] = j
                    deltas[count, 0] = dx
                    deltas[count, 1] = dy
                    deltas[count, 2] = dz
                    dists[count] = np.sqrt(d2)
                count += 1
    return count


@nb.njit(cache=True)
def brute_half_wrapped(pos, batch, box, r_lower, r_upper, pairs, deltas, dists):
    n = pos.shape[0]
    capacity = pairs.shape[0]
    lo2 = r_lower * r_lower
    hi2 = r_upper * r_upper
    b20 = box[2, 0]
    b21 = box[2, 1]
    b22 = box[2, 2]
    b10 = box[1, 0]
    b11 = box[1, 1]
    b00 = box[0, 0]
    count = 0
    for i in range(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        bi = batch[i]
        for j in range(i + 1, n):
            if batch[j] != bi:
                continue
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            s = np.rint(dz / b22)
            dx -= s * b20
            dy -= s * b21
            dz -= s * b22
            s = np.rint(dy / b11)
            dx -= s * b10
            dy -= s * b11
            dx -= b00 * np.rint(dx / b00)
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > lo2 and d2 <= hi2:
                if count < capacity:
                    pairs[count, 0] = i
                    pairs[count, 1] = j
                    deltas[count, 0] = dx
                    deltas[count, 1] = dy
                    deltas[count, 2] = dz
                    dists[count] = np.sqrt(d2)
                count += 1
    return count


@nb.njit(cache=True)
def cell_half_open(
    pos, batch, r_lower, r_upper, cell_coords, dims, order, start, pairs, deltas, dists
):
    n = pos.shape[0]
    capacity = pairs.shape[0]
    lo2 = r_lower * r_lower
    hi2 = r_upper * r_upper
    m0, m1, m2 = dims[0], dims[1], dims[2]
    count = 0
    for i in range(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        bi = batch[i]
        c0 = cell_coords[i, 0]
        c1 = cell_coords[i, 1]
        c2 = cell_coords[i, 2]
        for o0 in range(-1, 2):
            n0 = c0 + o0
            if n0 < 0 or n0 >= m0:
                continue
            for o1 in range(-1, 2):
                n1 = c1 + o1
                if n1 < 0 or n1 >= m1:
                    continue
                for o2 in range(-1, 2):
                    n2 = c2 + o2
                    if n2 < 0 or n2 >= m2:
                        continue
                    flat = (n0 * m1 + n1) * m2 + n2
                    for ptr in range(start[flat], start[flat + 1]):
                        j = order[ptr]
                        if j <= i:
                            continue
                        if batch[j] != bi:
                            continue
                        dx = xi - pos[j, 0]
                        dy = yi - pos[j, 1]
                        dz = zi - pos[j, 2]
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 > lo2 and d2 <= hi2:
                            if count < capacity:
                                pairs[count, 0] = i
                                pairs[count, 1] = j
                                deltas[count, 0] = dx
                                deltas[count, 1] = dy
                                deltas[count, 2] = dz
                                dists[count] = np.sqrt(d2)
                            count += 1
    return count


@nb.njit(cache=True)
def cell_half_wrapped(
    pos,
    batch,
    box,
    r_lower,
    r_upper,
    cell_coords,
    dims,
    order,
    start,
    pairs,
    deltas,
    dists,
):
    n = pos.shape[0]
    capacity = pairs.shape[0]
    lo2 = r_lower * r_lower
    hi2 = r_upper * r_upper
    b20 = box[2, 0]
    b21 = box[2, 1]
    b22 = box[2, 2]
    b10 = box[1, 0]
    b11 = box[1, 1]
    b00 = box[0, 0]
    m0, m1, m2 = dims[0], dims[1], dims[2]
    count = 0
    for i in range(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        bi = batch[i]
        c0 = cell_coords[i, 0]
        c1 = cell_coords[i, 1]
        c2 = cell_coords[i, 2]
        for o0 in range(-1, 2):
            n0 = c0 + o0
            if n0 < 0:
                n0 += m0
            elif n0 >= m0:
                n0 -= m0
            for o1 in range(-1, 2):
                n1 = c1 + o1
                if n1 < 0:
                    n1 += m1
                elif n1 >= m1:
                    n1 -= m1
                for o2 in range(-1, 2):
                    n2 = c2 + o2
                    if n2 < 0:
                        n2 += m2
                    elif n2 >= m2:
                        n2 -= m2
                    flat = (n0 * m1 + n1) * m2 + n2
                    for ptr in range(start[flat], start[flat + 1]):
                        j = order[ptr]
                        if j <= i:
                            continue
                        if batch[j] != bi:
                            continue
                        dx = xi - pos[j, 0]
                        dy = yi - pos[j, 1]
                        dz = zi - pos[j, 2]
                        s = np.rint(dz / b22)
                        dx -= s * b20
                        dy -= s * b21
                        dz -= s * b22
                        s = np.rint(dy / b11)
                        dx -= s * b10
                        dy -= s * b11
                        dx -= b00 * np.rint(dx / b00)
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 > lo2 and d2 <= hi2:
                            if count < capacity:
                                pairs[count, 0] = i
                                pairs[count, 1] = j
                                deltas[count, 0] = dx
                                deltas[count, 1] = dy
                                deltas[count, 2] = dz
                                dists[count] = np.sqrt(d2)
                            count += 1
    return count
