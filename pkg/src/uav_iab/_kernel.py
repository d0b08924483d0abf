"""Compiled slot loop for :func:`uav_iab.simulator.run_drop`.

Flow status codes: 0 pending, 1 active, 2 completed, 3 dropped.
Trace bits: 1 access tx, 2 backhaul rx, 4 backhaul tx, 8 access rx.
"""

import math

import numpy as np
from numba import njit

EPS_BITS = 1e-6


@njit(cache=True)
def _se(sinr_lin, sinr_min_db, se_cap):
    if sinr_lin <= 0.0:
        return 0.0
    if 10.0 * math.log10(sinr_lin) < sinr_min_db:
        return 0.0
    return min(math.log2(1.0 + sinr_lin), se_cap)


@njit(cache=True)
def _is_backhaul(n):
    period = n // 4
    pos = n % 4
    if pos == 2:
        return period % 2 == 0
    ordinal = 3 * period + (pos if pos < 2 else pos - 1)
    return ordinal % 2 == 0


@njit(cache=True)
def simulate(dl_power, dl_noise, dl_serving, ul_power, ul_noise,
             arr_t, size, f_user, f_dir, f_uav, f_server,
             donor, n_users, n_nominal, dt, bw, timeout, sinr_min_db, se_cap, want_trace):
    n_sectors = dl_power.shape[0]
    n_flows = arr_t.shape[0]
    s1 = size.copy()
    s2 = np.zeros(n_flows)
    for i in range(n_flows):
        if f_uav[i]:
            s2[i] = size[i]
    status = np.zeros(n_flows, np.int8)
    throughput = np.zeros(n_flows)
    max_slots = n_nominal + int(math.ceil(timeout / dt)) + 8
    trace = np.zeros(max_slots if want_trace else 1, np.int8)

    act = np.empty(n_flows, np.int64)
    cls = np.zeros(n_flows, np.int8)  # per active slot position: 0 idle, 1 direct, 2 aggregate
    se_flow = np.zeros(n_flows)
    counts = np.zeros(n_sectors, np.int64)
    ul_sum = np.zeros((n_sectors, n_sectors))

    # backhaul SE with only the donor on air
    noise_only = _se(dl_power[donor, n_users] / dl_noise[n_users], sinr_min_db, se_cap)

    n_act = 0
    nxt = 0
    n = 0
    bh_sum = 0.0
    bh_slots = 0
    bh_peak = 0.0
    while True:
        slot_start = n * dt
        while nxt < n_flows and arr_t[nxt] <= slot_start + 1e-12:
            if f_server[nxt] >= 0:
                status[nxt] = 1
                act[n_act] = nxt
                n_act += 1
            else:
                status[nxt] = 3
            nxt += 1
        if n_act == 0:
            if nxt >= n_flows and n >= n_nominal:
                break
            if nxt >= n_flows:
                target = n_nominal
            else:
                target = int(math.ceil(arr_t[nxt] / dt - 1e-9))
            if target > n:
                for m in range(n, min(target, n_nominal)):
                    if m % 4 != 2 and _is_backhaul(m):
                        bh_sum += noise_only
                        bh_slots += 1
                n = target
                continue

        is_dl = (n % 4) != 2
        direction = 0 if is_dl else 1
        backhaul = _is_backhaul(n)

        counts[:] = 0
        n_agg = 0
        for k in range(n_act):
            i = act[k]
            c = 0
            if f_dir[i] == direction:
                buffered = s2[i] - s1[i]
                if not f_uav[i]:
                    c = 1
                elif is_dl:
                    if backhaul:
                        c = 2 if s1[i] > EPS_BITS else 0
                    else:
                        c = 1 if buffered > EPS_BITS else 0
                else:
                    if backhaul:
                        c = 2 if buffered > EPS_BITS else 0
                    else:
                        c = 1 if s1[i] > EPS_BITS else 0
            cls[k] = c
            if c == 1:
                counts[f_server[i]] += 1
            elif c == 2:
                n_agg += 1
        if n_agg > 0:
            counts[donor] += 1

        code = 0
        se_agg = 0.0
        if is_dl:
            for k in range(n_act):
                if cls[k] != 1:
                    continue
                i = act[k]
                r = f_user[i]
                s = f_server[i]
                intf = 0.0
                for j in range(n_sectors):
                    if counts[j] > 0 and j != s:
                        intf += dl_power[j, r]
                se_flow[k] = _se(dl_power[s, r] / (intf + dl_noise[r]), sinr_min_db, se_cap)
                if s >= n_sectors - 3:
                    code |= 1
            if backhaul:
                intf = 0.0
                for j in range(n_sectors):
                    if counts[j] > 0 and j != donor:
                        intf += dl_power[j, n_users]
                se_bh = _se(dl_power[donor, n_users] / (intf + dl_noise[n_users]), sinr_min_db, se_cap)
                if n < n_nominal:
                    bh_sum += se_bh
                    bh_slots += 1
                se_agg = se_bh
                if n_agg > 0:
                    code |= 2
        else:
            # a sector's UL transmitters share its band, so the interference it
            # radiates into any sub-band is the sum of their powers over that band
            ul_sum[:, :] = 0.0
            for k in range(n_act):
                if cls[k] == 1:
                    i = act[k]
                    s = f_server[i]
                    for r in range(n_sectors):
                        ul_sum[s, r] += ul_power[f_user[i], r]
                    if s >= n_sectors - 3:
                        code |= 8
            if n_agg > 0:
                for r in range(n_sectors):
                    ul_sum[donor, r] += ul_power[n_users, r]
                code |= 4
            for k in range(n_act):
                if cls[k] != 1:
                    continue
                i = act[k]
                s = f_server[i]
                intf = 0.0
                for j in range(n_sectors):
                    if counts[j] > 0 and j != s:
                        intf += ul_sum[j, s]
                se_flow[k] = _se(ul_power[f_user[i], s] * counts[s] / (intf + ul_noise),
                                 sinr_min_db, se_cap)
            if n_agg > 0:
                intf = 0.0
                for j in range(n_sectors):
                    if counts[j] > 0 and j != donor:
                        intf += ul_sum[j, donor]
                se_agg = _se(ul_power[n_users, donor] * counts[donor] / (intf + ul_noise),
                             sinr_min_db, se_cap)
        if want_trace:
            trace[n] = code

        stage_two_direct = (is_dl and not backhaul)
        for k in range(n_act):
            if cls[k] != 1:
                continue
            i = act[k]
            bits = bw * dt / counts[f_server[i]] * se_flow[k]
            if f_uav[i] and stage_two_direct:
                bits = min(bits, s2[i] - s1[i])
                s2[i] -= bits
            else:
                bits = min(bits, s1[i])
                s1[i] -= bits
        if n_agg > 0:
            rate = bw / counts[donor] * se_agg
            if rate > bh_peak:
                bh_peak = rate
            per_flow = rate * dt / n_agg
            for k in range(n_act):
                if cls[k] != 2:
                    continue
                i = act[k]
                if is_dl:
                    s1[i] -= min(per_flow, s1[i])
                else:
                    s2[i] -= min(per_flow, s2[i] - s1[i])

        slot_end = slot_start + dt
        kept = 0
        for k in range(n_act):
            i = act[k]
            remaining = s2[i] if f_uav[i] else s1[i]
            if remaining <= EPS_BITS:
                status[i] = 2
                throughput[i] = size[i] / (slot_end - arr_t[i]) / 1e6
            elif slot_end - arr_t[i] >= timeout - 1e-12:
                status[i] = 3
            else:
                act[kept] = i
                kept += 1
        n_act = kept
        n += 1

    bh_mean = bh_sum / bh_slots if bh_slots > 0 else 0.0
    return status, throughput, bh_mean, bh_peak / 1e6, trace[:n] if want_trace else trace[:0]
