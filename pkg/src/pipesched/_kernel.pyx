# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop. Mirrors ``_kernel_py.run`` operation for operation."""
import numpy as np

from libc.math cimport floor, isinf

cdef double TICKS = 1000000000.0


cdef long long _xfer_ticks(long long latency, double base, double eff,
                           const long long[:] starts, const long long[:] ends,
                           const double[:] avails, Py_ssize_t off, Py_ssize_t n,
                           double nbytes, long long start) nogil:
    cdef long long t, boundary
    cdef double remaining, rate, avail, cap
    cdef Py_ssize_t lo, hi, mid
    if nbytes == 0.0 or isinf(base):
        return latency
    t = start + latency
    remaining = nbytes
    while True:
        # bisect_right over ends[off:off+n]
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) // 2
            if t < ends[off + mid]:
                hi = mid
            else:
                lo = mid + 1
        if lo < n and starts[off + lo] <= t:
            avail = avails[off + lo]
            boundary = ends[off + lo]
        elif lo < n:
            avail = 1.0
            boundary = starts[off + lo]
        else:
            rate = base * 1.0 * eff
            return t + <long long>floor(remaining * TICKS / rate + 0.5) - start
        rate = base * avail * eff
        cap = rate * <double>(boundary - t) / TICKS
        if remaining <= cap:
            return t + <long long>floor(remaining * TICKS / rate + 0.5) - start
        remaining -= cap
        t = boundary


def run(p):
    cdef Py_ssize_t nd = p.num_devices
    cdef const long long[:] op_dur = p.op_dur
    cdef const long long[:] op_dep = p.op_dep
    cdef const long long[:] op_in = p.op_in
    cdef const long long[:] dev_op_start = p.dev_op_start
    cdef const long long[:] dev_op_count = p.dev_op_count
    cdef const long long[:] x_dst = p.x_dst
    cdef const long long[:] x_link = p.x_link
    cdef const double[:] x_bytes = p.x_bytes
    cdef const double[:] x_eff = p.x_eff
    cdef const long long[:] x_producer = p.x_producer
    cdef const long long[:] send_order = p.send_order
    cdef const long long[:] dev_send_start = p.dev_send_start
    cdef const long long[:] dev_send_count = p.dev_send_count
    cdef const long long[:] l_latency = p.l_latency
    cdef const double[:] l_base = p.l_base
    cdef const long long[:] l_seg_off = p.l_seg_off
    cdef const long long[:] l_seg_cnt = p.l_seg_cnt
    cdef const long long[:] seg_start = p.seg_start
    cdef const long long[:] seg_end = p.seg_end
    cdef const double[:] seg_avail = p.seg_avail
    cdef long long offset = p.offset

    cdef Py_ssize_t n_ops = op_dur.shape[0]
    cdef Py_ssize_t n_x = x_dst.shape[0]
    out_op_start = np.full(n_ops, -1, dtype=np.int64)
    out_op_end = np.full(n_ops, -1, dtype=np.int64)
    out_x_start = np.full(n_x, -1, dtype=np.int64)
    out_x_end = np.full(n_x, -1, dtype=np.int64)
    cdef long long[:] op_start = out_op_start
    cdef long long[:] op_end = out_op_end
    cdef long long[:] x_start = out_x_start
    cdef long long[:] x_end = out_x_end

    state = np.zeros((5, nd), dtype=np.int64)
    cdef long long[:, :] st = state
    # rows: next_op, next_send, comp_free, send_free, recv_free
    cdef Py_ssize_t d, j, x, l, dep, xin, best_idx
    cdef long long start, ready, dur
    cdef long long b_start, b_ready, b_kind, b_dev
    cdef bint have
    cdef Py_ssize_t remaining = n_ops + n_x

    for d in range(nd):
        st[2, d] = offset
        st[3, d] = offset
        st[4, d] = offset

    with nogil:
        while remaining > 0:
            have = False
            best_idx = -1
            b_start = 0
            b_ready = 0
            b_kind = 0
            b_dev = 0
            for d in range(nd):
                if st[1, d] < dev_send_count[d]:
                    x = send_order[dev_send_start[d] + st[1, d]]
                    ready = op_end[x_producer[x]]
                    if ready >= 0:
                        start = ready
                        if st[3, d] > start:
                            start = st[3, d]
                        if st[4, x_dst[x]] > start:
                            start = st[4, x_dst[x]]
                        if (not have or start < b_start or (start == b_start and (ready < b_ready
                                or (ready == b_ready and (0 < b_kind or (0 == b_kind and d < b_dev)))))):
                            have = True
                            b_start = start
                            b_ready = ready
                            b_kind = 0
                            b_dev = d
                            best_idx = x
                if st[0, d] < dev_op_count[d]:
                    j = dev_op_start[d] + st[0, d]
                    start = st[2, d]
                    dep = op_dep[j]
                    if dep >= 0:
                        if op_end[dep] < 0:
                            continue
                        if op_end[dep] > start:
                            start = op_end[dep]
                    xin = op_in[j]
                    if xin >= 0:
                        if x_end[xin] < 0:
                            continue
                        if x_end[xin] > start:
                            start = x_end[xin]
                    if (not have or start < b_start or (start == b_start and (start < b_ready
                            or (start == b_ready and (1 < b_kind or (1 == b_kind and d < b_dev)))))):
                        have = True
                        b_start = start
                        b_ready = start
                        b_kind = 1
                        b_dev = d
                        best_idx = j
            if not have:
                break
            d = b_dev
            if b_kind == 0:
                x = best_idx
                l = x_link[x]
                dur = _xfer_ticks(l_latency[l], l_base[l], x_eff[x], seg_start, seg_end, seg_avail,
                                  l_seg_off[l], l_seg_cnt[l], x_bytes[x], b_start)
                x_start[x] = b_start
                x_end[x] = b_start + dur
                st[3, d] = b_start + dur
                st[4, x_dst[x]] = b_start + dur
                st[1, d] += 1
            else:
                j = best_idx
                op_start[j] = b_start
                op_end[j] = b_start + op_dur[j]
                st[2, d] = b_start + op_dur[j]
                st[0, d] += 1
            remaining -= 1

    return remaining, out_op_start, out_op_end, out_x_start, out_x_end
