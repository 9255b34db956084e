"""Compiled tick kernel (numba) mirroring the numpy reference in world.py.

The kernel replicates the reference formulas operation for operation, so both
paths produce bit-identical trajectories; a property test in the suite holds
them to that. Set WADIRL_NO_NUMBA=1 to force the numpy path.
"""

from __future__ import annotations

import math
import os

import numpy as np

HAVE_NUMBA = False
if not os.environ.get("WADIRL_NO_NUMBA"):
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:
        pass

# event codes duplicated from world.py to keep the kernel dependency-free
_EV_RED_DESTROYED = 0
_EV_BLUE_DESTROYED = 1
_EV_CROSS_EAST = 2
_EV_CROSS_WEST = 3

_ORDER_HOLD = 0
_ORDER_MOVE = 1
_ORDER_ATTACK = 2

_EDGE_MARGIN = 1e-3


def _tick_kernel(
    pos, health, alive, dist, side_flag,
    order_kind, order_bin, order_target, red_anchor,
    side, coalition, speed, attack_range, damage, attacks_air, air,
    ground_passable, wadi_axis, cell_w, cell_h, leash, width, height,
    ev_kind, ev_uid,
):
    n = pos.shape[0]
    shooter = np.full(n, -1, dtype=np.int64)
    move_x = np.zeros(n)
    move_y = np.zeros(n)
    moving = np.zeros(n, dtype=np.bool_)

    for i in range(n):
        if not alive[i]:
            continue
        si = side[i]
        kind = -2
        if si == 0:
            kind = order_kind[coalition[i]]
            if kind == _ORDER_MOVE:
                c = coalition[i]
                move_x[i] = order_target[c, 0]
                move_y[i] = order_target[c, 1]
                moving[i] = True
                continue

        in_attack = si == 0 and kind == _ORDER_ATTACK
        x0 = 0.0
        y0 = 0.0
        if in_attack:
            c = coalition[i]
            x0 = order_bin[c, 0] * cell_w
            y0 = order_bin[c, 1] * cell_h
        best = -1
        best_d = np.inf
        best_rect = -1
        best_rect_d = np.inf
        for j in range(n):
            if not alive[j] or side[j] == si:
                continue
            if air[j] and not attacks_air[i]:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < best_d:
                best_d = d
                best = j
            if in_attack and d < best_rect_d:
                if (
                    pos[j, 0] >= x0 and pos[j, 0] < x0 + cell_w
                    and pos[j, 1] >= y0 and pos[j, 1] < y0 + cell_h
                ):
                    best_rect_d = d
                    best_rect = j

        if si == 0:
            if kind == _ORDER_HOLD:
                if best >= 0 and best_d <= attack_range[i]:
                    shooter[i] = best
            elif in_attack:
                if best_rect >= 0:
                    if best_rect_d <= attack_range[i]:
                        shooter[i] = best_rect
                    else:
                        move_x[i] = pos[best_rect, 0]
                        move_y[i] = pos[best_rect, 1]
                        moving[i] = True
                else:
                    c = coalition[i]
                    move_x[i] = order_target[c, 0]
                    move_y[i] = order_target[c, 1]
                    moving[i] = True
        else:
            if best >= 0 and best_d <= attack_range[i]:
                shooter[i] = best
            else:
                pursue = False
                if best >= 0:
                    ax = pos[best, 0] - red_anchor[i, 0]
                    ay = pos[best, 1] - red_anchor[i, 1]
                    if ax * ax + ay * ay <= leash * leash:
                        pursue = True
                if pursue:
                    move_x[i] = pos[best, 0]
                    move_y[i] = pos[best, 1]
                    moving[i] = True
                else:
                    hx = pos[i, 0] - red_anchor[i, 0]
                    hy = pos[i, 1] - red_anchor[i, 1]
                    if abs(hx) + abs(hy) > 1e-9:
                        move_x[i] = red_anchor[i, 0]
                        move_y[i] = red_anchor[i, 1]
                        moving[i] = True

    for i in range(n):
        if not moving[i]:
            continue
        ox = pos[i, 0]
        oy = pos[i, 1]
        dx = move_x[i] - ox
        dy = move_y[i] - oy
        d = math.sqrt(dx * dx + dy * dy)
        step_len = speed[i] if speed[i] < d else d
        safe = d if d > 0.0 else 1.0
        nx = ox + dx * (step_len / safe)
        ny = oy + dy * (step_len / safe)
        nx = min(max(nx, _EDGE_MARGIN), width - _EDGE_MARGIN)
        ny = min(max(ny, _EDGE_MARGIN), height - _EDGE_MARGIN)
        if not air[i] and not ground_passable[int(ny), int(nx)]:
            nx = ox
            ny = oy
        mx = nx - ox
        my = ny - oy
        dist[i] += math.sqrt(mx * mx + my * my)
        pos[i, 0] = nx
        pos[i, 1] = ny

    n_ev = 0
    for i in range(n):
        if not alive[i]:
            continue
        if side_flag[i] == 0 and pos[i, 0] >= wadi_axis + 1.0:
            side_flag[i] = 1
            if side[i] == 0:
                ev_kind[n_ev] = _EV_CROSS_EAST
                ev_uid[n_ev] = i
                n_ev += 1
        elif side_flag[i] == 1 and pos[i, 0] < wadi_axis:
            side_flag[i] = 0
            if side[i] == 0:
                ev_kind[n_ev] = _EV_CROSS_WEST
                ev_uid[n_ev] = i
                n_ev += 1

    any_shooter = False
    for i in range(n):
        if shooter[i] >= 0:
            any_shooter = True
            break
    if any_shooter:
        dmg = np.zeros(n)
        for i in range(n):
            t = shooter[i]
            if t >= 0:
                dmg[t] += damage[i]
        for i in range(n):
            health[i] -= dmg[i]
        for i in range(n):
            if alive[i] and health[i] <= 0.0:
                health[i] = 0.0
                alive[i] = False
                ev_kind[n_ev] = _EV_BLUE_DESTROYED if side[i] == 0 else _EV_RED_DESTROYED
                ev_uid[n_ev] = i
                n_ev += 1
    return n_ev


if HAVE_NUMBA:
    _tick_kernel = njit(cache=True)(_tick_kernel)
