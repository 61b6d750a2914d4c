"""Longest-common-subsequence kernels over integer token-id arrays.

The LCS dynamic program is the hot inner loop of batch scoring (it runs
once per candidate/reference pair, O(len*len) cell updates). Two
implementations are provided:

* a numba ``@njit`` kernel (default when numba imports cleanly), and
* a pure-numpy row-vectorized fallback.

Set ``QASUM_NUMBA=0`` to force the numpy path; ``benchmarks/bench_lcs.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np


def _jit_enabled() -> bool:
    return os.environ.get("QASUM_NUMBA", "1").strip().lower() not in ("0", "false", "off")


def lcs_length_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """LCS length via a row-vectorized DP.

    Per row, with ``prev`` the previous DP row, the update
    ``cur[j] = max(cur[j-1], prev[j], prev[j-1] + 1 if match)`` is a
    running maximum, so each row is a handful of whole-array numpy ops.
    """
    if a.size == 0 or b.size == 0:
        return 0
    prev = np.zeros(b.size + 1, dtype=np.int64)
    for x in a:
        extend = np.where(b == x, prev[:-1] + 1, 0)
        cur = np.maximum(prev[1:], extend)
        np.maximum.accumulate(cur, out=cur)
        prev[1:] = cur
    return int(prev[-1])


NUMBA_ENABLED = False
lcs_length_numba = None

if _jit_enabled():
    try:
        from numba import njit
    except ImportError:
        pass
    else:

        @njit(cache=True)
        def _lcs_jit(a: np.ndarray, b: np.ndarray) -> int:
            n = b.shape[0]
            dp = np.zeros(n + 1, dtype=np.int64)
            for i in range(a.shape[0]):
                diag = np.int64(0)
                ai = a[i]
                for j in range(1, n + 1):
                    tmp = dp[j]
                    if ai == b[j - 1]:
                        dp[j] = diag + 1
                    elif dp[j - 1] > dp[j]:
                        dp[j] = dp[j - 1]
                    diag = tmp
            return int(dp[n])

        def lcs_length_numba(a: np.ndarray, b: np.ndarray) -> int:
            if a.size == 0 or b.size == 0:
                return 0
            return int(_lcs_jit(a, b))

        NUMBA_ENABLED = True


if NUMBA_ENABLED:
    lcs_length = lcs_length_numba
else:
    lcs_length = lcs_length_numpy
