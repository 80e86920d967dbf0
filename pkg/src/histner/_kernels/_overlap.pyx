# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch scorer for token-overlap document similarity.

Documents are CSR-style rows of (token id, term frequency, tf-idf weight)
triples sorted by token id. Scores accumulate in ascending token-id order so
the result is bit-identical to the pure-Python fallback.
"""

import numpy as np

cimport numpy as cnp


def overlap_scores(
    cnp.int32_t[::1] t_ids,
    cnp.float64_t[::1] t_tf,
    cnp.float64_t[::1] t_tfidf,
    cnp.int64_t[::1] indptr,
    cnp.int32_t[::1] c_ids,
    cnp.float64_t[::1] c_tf,
    cnp.float64_t[::1] c_tfidf,
    cnp.int64_t[::1] rows,
    cnp.float64_t[::1] out,
):
    """Score one target row against each candidate row listed in `rows`.

    Writes into `out`, one score per candidate. Empty rows score 0.
    """
    cdef Py_ssize_t nt = t_ids.shape[0]
    cdef Py_ssize_t nrows = rows.shape[0]
    cdef double kt = <double> nt
    cdef Py_ssize_t r, i, j, lo, hi
    cdef cnp.int64_t row
    cdef double kc, score
    cdef cnp.int32_t ti, cj

    if out.shape[0] != nrows:
        raise ValueError("out must have one slot per candidate row")

    for r in range(nrows):
        row = rows[r]
        lo = indptr[row]
        hi = indptr[row + 1]
        kc = <double> (hi - lo)
        score = 0.0
        if nt > 0 and hi > lo:
            i = 0
            j = lo
            while i < nt and j < hi:
                ti = t_ids[i]
                cj = c_ids[j]
                if ti == cj:
                    score += (t_tfidf[i] + c_tfidf[j]) * (t_tf[i] / kt + c_tf[j] / kc)
                    i += 1
                    j += 1
                elif ti < cj:
                    i += 1
                else:
                    j += 1
        out[r] = score
    return np.asarray(out)
