"""Pure-Python fallback for the overlap scoring kernel.

Match finding is vectorized with numpy, but the per-term accumulation runs
sequentially in ascending token-id order so results are bit-identical to the
compiled kernel.
"""

import numpy as np


def overlap_scores(t_ids, t_tf, t_tfidf, indptr, c_ids, c_tf, c_tfidf, rows, out):
    if out.shape[0] != rows.shape[0]:
        raise ValueError("out must have one slot per candidate row")
    kt = float(t_ids.shape[0])
    for r, row in enumerate(rows):
        lo, hi = indptr[row], indptr[row + 1]
        kc = float(hi - lo)
        if kt == 0.0 or kc == 0.0:
            out[r] = 0.0
            continue
        row_ids = c_ids[lo:hi]
        # Positions of shared ids on each side; both id arrays are sorted.
        pos_c = np.searchsorted(row_ids, t_ids)
        pos_c = np.minimum(pos_c, hi - lo - 1)
        mask = row_ids[pos_c] == t_ids
        score = 0.0
        for i, j in zip(np.nonzero(mask)[0], (pos_c[mask] + lo)):
            score += (t_tfidf[i] + c_tfidf[j]) * (t_tf[i] / kt + c_tf[j] / kc)
        out[r] = score
    return out
