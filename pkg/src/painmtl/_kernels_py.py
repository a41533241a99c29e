"""Pure-Python kernels; reference semantics for ``_kernels.pyx``.

Both modules expose the same functions and must return identical results
(bitwise for ``qrs_scan``; to rounding for the float reductions).
"""
import numpy as np

RR_HISTORY = 8
SEARCHBACK_FACTOR = 1.66


def mean_abs_lag_diff(x, lag):
    """Mean of ``|x[i + lag] - x[i]|`` over all valid ``i``."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(np.abs(x[lag:] - x[:-lag])))


class _ScanState:
    def __init__(self, spki, npki):
        self.spki = spki
        self.npki = npki
        self.qrs_idx = []
        self.qrs_slope = 0.0
        self.qrs_val = 0.0
        self.rr = []
        self.noise_idx = []
        self.noise_val = []

    def threshold(self):
        return self.npki + 0.25 * (self.spki - self.npki)

    def accept(self, i, v, s):
        if self.qrs_idx:
            self.rr.append(i - self.qrs_idx[-1])
            if len(self.rr) > RR_HISTORY:
                self.rr.pop(0)
        self.qrs_idx.append(i)
        self.qrs_val = v
        self.qrs_slope = s

    def rr_average(self):
        return sum(self.rr) / len(self.rr)


def _searchback(st, i, slope, refractory):
    while st.rr and i - st.qrs_idx[-1] > SEARCHBACK_FACTOR * st.rr_average():
        thr2 = 0.5 * st.threshold()
        lower = st.qrs_idx[-1] + refractory
        best = -1
        best_val = 0.0
        for j, val in zip(st.noise_idx, st.noise_val):
            if lower <= j < i and val > thr2 and (best < 0 or val > best_val):
                best, best_val = j, val
        if best < 0:
            return
        st.spki = 0.25 * best_val + 0.75 * st.spki
        st.accept(best, best_val, slope[best])
        keep = [k for k, j in enumerate(st.noise_idx) if j > best]
        st.noise_idx = [st.noise_idx[k] for k in keep]
        st.noise_val = [st.noise_val[k] for k in keep]


def qrs_scan(integrated, slope, refractory, twave, init_lo, init_hi):
    """Adaptive dual-threshold QRS decision over a moving-window integral.

    Parameters are sample counts. Returns the indices (into ``integrated``)
    of the local maxima classified as QRS complexes.
    """
    integ = np.asarray(integrated, dtype=np.float64)
    slope = np.asarray(slope, dtype=np.float64)
    n = integ.shape[0]
    if n < 3:
        return np.zeros(0, dtype=np.int64)
    seg = integ[init_lo:init_hi].tolist()
    total = 0.0
    for v in seg:
        total += v
    st = _ScanState(max(seg) / 3.0, 0.5 * (total / len(seg)))

    mid = integ[1:-1]
    cand = np.flatnonzero((mid > integ[:-2]) & (mid >= integ[2:])) + 1
    for i in cand.tolist():
        v = float(integ[i])
        _searchback(st, i, slope, refractory)
        if st.qrs_idx and i - st.qrs_idx[-1] < refractory:
            if v > st.qrs_val:
                if st.rr:
                    st.rr[-1] += i - st.qrs_idx[-1]
                st.qrs_idx[-1] = i
                st.qrs_val = v
                st.qrs_slope = float(slope[i])
            continue
        if v > st.threshold():
            if (st.qrs_idx and i - st.qrs_idx[-1] < twave
                    and slope[i] < 0.5 * st.qrs_slope):
                st.npki = 0.125 * v + 0.875 * st.npki
                st.noise_idx.append(i)
                st.noise_val.append(v)
                continue
            st.spki = 0.125 * v + 0.875 * st.spki
            st.accept(i, v, float(slope[i]))
            st.noise_idx.clear()
            st.noise_val.clear()
        else:
            st.npki = 0.125 * v + 0.875 * st.npki
            st.noise_idx.append(i)
            st.noise_val.append(v)
    _searchback(st, n, slope, refractory)
    return np.asarray(st.qrs_idx, dtype=np.int64)
