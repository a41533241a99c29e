# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Semantics are defined by ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    RR_HISTORY = 8
cdef double SEARCHBACK_FACTOR = 1.66


def mean_abs_lag_diff(x, Py_ssize_t lag):
    cdef const double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double total = 0.0
    for i in range(n - lag):
        total += abs(v[i + lag] - v[i])
    return total / (n - lag)


cdef struct ScanState:
    double spki
    double npki
    Py_ssize_t n_qrs
    Py_ssize_t last
    double qrs_val
    double qrs_slope
    Py_ssize_t rr[RR_HISTORY]
    Py_ssize_t n_rr
    Py_ssize_t rr_head
    Py_ssize_t n_noise


cdef inline double _threshold(ScanState* st) nogil:
    return st.npki + 0.25 * (st.spki - st.npki)


cdef inline double _rr_average(ScanState* st) nogil:
    cdef Py_ssize_t k, total = 0
    for k in range(st.n_rr):
        total += st.rr[k]
    return <double>total / st.n_rr


cdef inline void _accept(ScanState* st, Py_ssize_t[::1] out, Py_ssize_t i,
                         double v, double s) nogil:
    if st.n_qrs > 0:
        if st.n_rr < RR_HISTORY:
            st.rr[st.n_rr] = i - st.last
            st.n_rr += 1
            st.rr_head = st.n_rr - 1
        else:
            st.rr_head = (st.rr_head + 1) % RR_HISTORY
            st.rr[st.rr_head] = i - st.last
    out[st.n_qrs] = i
    st.n_qrs += 1
    st.last = i
    st.qrs_val = v
    st.qrs_slope = s


cdef void _searchback(ScanState* st, Py_ssize_t[::1] out, Py_ssize_t i,
                      const double[::1] slope, Py_ssize_t refractory,
                      Py_ssize_t[::1] noise_idx, double[::1] noise_val) nogil:
    cdef double thr2, best_val
    cdef Py_ssize_t k, j, lower, best, kept
    while st.n_rr > 0 and i - st.last > SEARCHBACK_FACTOR * _rr_average(st):
        thr2 = 0.5 * _threshold(st)
        lower = st.last + refractory
        best = -1
        best_val = 0.0
        for k in range(st.n_noise):
            j = noise_idx[k]
            if lower <= j < i and noise_val[k] > thr2 and (best < 0 or noise_val[k] > best_val):
                best = j
                best_val = noise_val[k]
        if best < 0:
            return
        st.spki = 0.25 * best_val + 0.75 * st.spki
        _accept(st, out, best, best_val, slope[best])
        kept = 0
        for k in range(st.n_noise):
            if noise_idx[k] > best:
                noise_idx[kept] = noise_idx[k]
                noise_val[kept] = noise_val[k]
                kept += 1
        st.n_noise = kept


def qrs_scan(integrated, slope, Py_ssize_t refractory, Py_ssize_t twave,
             Py_ssize_t init_lo, Py_ssize_t init_hi):
    cdef const double[::1] integ = np.ascontiguousarray(integrated, dtype=np.float64)
    cdef const double[::1] slp = np.ascontiguousarray(slope, dtype=np.float64)
    cdef Py_ssize_t n = integ.shape[0]
    if n < 3:
        return np.zeros(0, dtype=np.int64)
    out_arr = np.zeros(n, dtype=np.intp)
    noise_idx_arr = np.zeros(n, dtype=np.intp)
    noise_val_arr = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t[::1] out = out_arr
    cdef Py_ssize_t[::1] noise_idx = noise_idx_arr
    cdef double[::1] noise_val = noise_val_arr
    cdef ScanState st
    cdef Py_ssize_t i
    cdef double v, total = 0.0, peak = integ[init_lo]

    with nogil:
        for i in range(init_lo, init_hi):
            total += integ[i]
            if integ[i] > peak:
                peak = integ[i]
        st.spki = peak / 3.0
        st.npki = 0.5 * (total / (init_hi - init_lo))
        st.n_qrs = 0
        st.last = -1
        st.qrs_val = 0.0
        st.qrs_slope = 0.0
        st.n_rr = 0
        st.rr_head = 0
        st.n_noise = 0

        for i in range(1, n - 1):
            v = integ[i]
            if not (v > integ[i - 1] and v >= integ[i + 1]):
                continue
            _searchback(&st, out, i, slp, refractory, noise_idx, noise_val)
            if st.n_qrs > 0 and i - st.last < refractory:
                if v > st.qrs_val:
                    if st.n_rr > 0:
                        st.rr[st.rr_head] += i - st.last
                    out[st.n_qrs - 1] = i
                    st.last = i
                    st.qrs_val = v
                    st.qrs_slope = slp[i]
                continue
            if v > _threshold(&st):
                if st.n_qrs > 0 and i - st.last < twave and slp[i] < 0.5 * st.qrs_slope:
                    st.npki = 0.125 * v + 0.875 * st.npki
                    noise_idx[st.n_noise] = i
                    noise_val[st.n_noise] = v
                    st.n_noise += 1
                    continue
                st.spki = 0.125 * v + 0.875 * st.spki
                _accept(&st, out, i, v, slp[i])
                st.n_noise = 0
            else:
                st.npki = 0.125 * v + 0.875 * st.npki
                noise_idx[st.n_noise] = i
                noise_val[st.n_noise] = v
                st.n_noise += 1
        _searchback(&st, out, n, slp, refractory, noise_idx, noise_val)

    return out_arr[:st.n_qrs].astype(np.int64)
