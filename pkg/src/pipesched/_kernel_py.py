"""Pure-Python event loop; reference semantics for the compiled ``_kernel``.

Each step considers at most two candidates per device: the next compute
action in plan order and the head of the device's send queue. The candidate
with the smallest ``(start, ready, kind, device)`` key is committed. Start
times are therefore committed in non-decreasing order, which makes the
greedy choice equal to a true event-driven execution.
"""
from __future__ import annotations

from .network import transfer_ticks as _xfer_ticks


def run(p):
    """Execute a lowered program. Returns ``(status, op_start, op_end, x_start, x_end)``;
    status 0 is success, otherwise the number of unfinished items (deadlock)."""
    nd = p.num_devices
    op_device = p.op_device.tolist()
    op_dur = p.op_dur.tolist()
    op_dep = p.op_dep.tolist()
    op_in = p.op_in.tolist()
    dev_op_start = p.dev_op_start.tolist()
    dev_op_count = p.dev_op_count.tolist()
    x_dst = p.x_dst.tolist()
    x_link = p.x_link.tolist()
    x_bytes = p.x_bytes.tolist()
    x_eff = p.x_eff.tolist()
    x_producer = p.x_producer.tolist()
    send_order = p.send_order.tolist()
    dev_send_start = p.dev_send_start.tolist()
    dev_send_count = p.dev_send_count.tolist()
    l_latency = p.l_latency.tolist()
    l_base = p.l_base.tolist()
    l_seg_off = p.l_seg_off.tolist()
    l_seg_cnt = p.l_seg_cnt.tolist()
    seg_start = p.seg_start.tolist()
    seg_end = p.seg_end.tolist()
    seg_avail = p.seg_avail.tolist()
    offset = int(p.offset)

    link_segs = []
    for l in range(len(l_latency)):
        a, c = l_seg_off[l], l_seg_cnt[l]
        link_segs.append((seg_start[a : a + c], seg_end[a : a + c], seg_avail[a : a + c]))

    n_ops = len(op_device)
    n_x = len(x_dst)
    op_start = [-1] * n_ops
    op_end = [-1] * n_ops
    x_start = [-1] * n_x
    x_end = [-1] * n_x
    next_op = [0] * nd
    next_send = [0] * nd
    comp_free = [offset] * nd
    send_free = [offset] * nd
    recv_free = [offset] * nd
    remaining = n_ops + n_x

    while remaining:
        best = None
        best_idx = -1
        for d in range(nd):
            if next_send[d] < dev_send_count[d]:
                x = send_order[dev_send_start[d] + next_send[d]]
                ready = op_end[x_producer[x]]
                if ready >= 0:
                    start = max(ready, send_free[d], recv_free[x_dst[x]])
                    key = (start, ready, 0, d)
                    if best is None or key < best:
                        best, best_idx = key, x
            if next_op[d] < dev_op_count[d]:
                j = dev_op_start[d] + next_op[d]
                start = comp_free[d]
                dep = op_dep[j]
                if dep >= 0:
                    if op_end[dep] < 0:
                        continue
                    start = max(start, op_end[dep])
                xin = op_in[j]
                if xin >= 0:
                    if x_end[xin] < 0:
                        continue
                    start = max(start, x_end[xin])
                key = (start, start, 1, d)
                if best is None or key < best:
                    best, best_idx = key, j
        if best is None:
            return remaining, op_start, op_end, x_start, x_end
        start, _, kind, d = best
        if kind == 0:
            x = best_idx
            l = x_link[x]
            starts, ends, avails = link_segs[l]
            dur = _xfer_ticks(l_latency[l], l_base[l], x_eff[x], starts, ends, avails, x_bytes[x], start)
            x_start[x] = start
            x_end[x] = start + dur
            send_free[d] = start + dur
            recv_free[x_dst[x]] = start + dur
            next_send[d] += 1
        else:
            j = best_idx
            op_start[j] = start
            op_end[j] = start + op_dur[j]
            comp_free[d] = start + op_dur[j]
            next_op[d] += 1
        remaining -= 1
    return 0, op_start, op_end, x_start, x_end
