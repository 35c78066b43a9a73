"""Integer kernels behind the series product.

The coefficient arithmetic is exact (``gmpy2.mpq`` in object arrays) and
stays in numpy.  What is hot is the pair enumeration: for every pair of
terms decide whether the product survives truncation, compute its packed
key and the Koszul sign from reordering the odd generators.  That part is
pure integer work and is compiled with numba when available.

Set ``DQINDEX_NO_NUMBA=1`` to force the numpy implementation.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly depending on the environment
    if os.environ.get("DQINDEX_NO_NUMBA", "") not in ("", "0"):
        raise ImportError("numba disabled by DQINDEX_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_backend = "numba" if HAVE_NUMBA else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Switch between ``"numba"`` and ``"numpy"`` at runtime (benchmarks, tests)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable in this environment")
    _backend = name


class BaseOverflow(OverflowError):
    """A base exponent left the range representable in a packed key."""


# ---------------------------------------------------------------- numpy path


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.int64)
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x = x >> 1
    return c


def _pairs_numpy(a, b, lim, h_extra, key_extra):
    ka, base_a, fa, ha, ta, ma = a
    kb, base_b, fb, hb, tb, mb = b
    ymax, hmax, tmax, wmax, lo, hi, key_off, nodd = lim
    nb = len(kb)
    out_k, out_i, out_j, out_s = [], [], [], []
    if len(ka) == 0 or nb == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e, np.zeros(0, dtype=np.bool_)
    step = max(1, 400_000 // nb)
    jj = np.arange(nb, dtype=np.int64)
    for start in range(0, len(ka), step):
        sl = slice(start, min(len(ka), start + step))
        ii = np.arange(sl.start, sl.stop, dtype=np.int64)
        mask_a = ma[sl][:, None]
        ok = (mask_a & mb[None, :]) == 0
        f = fa[sl][:, None] + fb[None, :]
        h = ha[sl][:, None] + hb[None, :] + h_extra
        t = ta[sl][:, None] + tb[None, :]
        ok &= (f <= ymax) & (h <= hmax) & (t <= tmax)
        if wmax >= 0:
            ok &= (2 * h + f) <= wmax
        bsum = base_a[sl][:, None, :] + base_b[None, :, :]
        bad = ok & np.any((bsum < lo) | (bsum > hi), axis=2)
        if np.any(bad):
            raise BaseOverflow("base exponent out of packed range")
        r, c = np.nonzero(ok)
        if len(r) == 0:
            continue
        keys = ka[sl][r] + kb[c] - key_off + key_extra
        sa = ma[sl][r]
        sb = mb[c]
        par = np.zeros(len(r), dtype=np.int64)
        for q in range(nodd):
            hit = (sb >> q) & 1
            par += hit * _popcount(sa >> (q + 1))
        out_k.append(keys)
        out_i.append(ii[r])
        out_j.append(jj[c])
        out_s.append((par & 1).astype(np.bool_))
    if not out_k:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e, np.zeros(0, dtype=np.bool_)
    return (np.concatenate(out_k), np.concatenate(out_i),
            np.concatenate(out_j), np.concatenate(out_s))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _pop(x):
        c = 0
        while x:
            c += x & 1
            x >>= 1
        return c

    @njit(cache=True)
    def _pairs_jit(ka, base_a, fa, ha, ta, ma, kb, base_b, fb, hb, tb, mb,
                   ymax, hmax, tmax, wmax, lo, hi, key_off, nodd,
                   h_extra, key_extra):
        na = ka.shape[0]
        nb = kb.shape[0]
        d = base_a.shape[1]
        # first pass marks survivors so the outputs can be sized exactly
        alive = np.zeros(na * nb, np.bool_)
        count = 0
        for i in range(na):
            mi = ma[i]
            fi = fa[i]
            hi_ = ha[i] + h_extra
            ti = ta[i]
            row = i * nb
            for j in range(nb):
                if mi & mb[j]:
                    continue
                f = fi + fb[j]
                h = hi_ + hb[j]
                if f > ymax or h > hmax or ti + tb[j] > tmax:
                    continue
                if wmax >= 0 and 2 * h + f > wmax:
                    continue
                alive[row + j] = True
                count += 1
        keys = np.empty(count, np.int64)
        oi = np.empty(count, np.int64)
        oj = np.empty(count, np.int64)
        sg = np.empty(count, np.bool_)
        overflow = False
        n = 0
        for i in range(na):
            row = i * nb
            mi = ma[i]
            for j in range(nb):
                if not alive[row + j]:
                    continue
                for k in range(d):
                    e = base_a[i, k] + base_b[j, k]
                    if e < lo or e > hi:
                        overflow = True
                par = 0
                sb = mb[j]
                for q in range(nodd):
                    if (sb >> q) & 1:
                        par += _pop(mi >> (q + 1))
                keys[n] = ka[i] + kb[j] - key_off + key_extra
                oi[n] = i
                oj[n] = j
                sg[n] = (par & 1) == 1
                n += 1
        return keys, oi, oj, sg, overflow


def product_pairs(a, b, lim, h_extra=0, key_extra=0):
    """Enumerate surviving term pairs of a product.

    ``a`` and ``b`` are tuples ``(keys, base, fiber_degree, h, tau, mask)``
    and ``lim`` is ``(ymax, hmax, tmax, wmax, lo, hi, key_offset, nodd)``.
    Returns ``(keys, index_a, index_b, negate)``.
    """
    if _backend == "numba":
        keys, oi, oj, sg, overflow = _pairs_jit(*a, *b, *lim, h_extra, key_extra)
        if overflow:
            raise BaseOverflow("base exponent out of packed range")
        return keys, oi, oj, sg
    return _pairs_numpy(a, b, lim, h_extra, key_extra)


def combine(keys: np.ndarray, coefs: np.ndarray):
    """Sort by key, sum duplicates and drop zeros."""
    if len(keys) == 0:
        return keys.astype(np.int64), np.zeros(0, dtype=object)
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    c = coefs[order]
    starts = np.flatnonzero(np.concatenate(([True], k[1:] != k[:-1])))
    sums = np.add.reduceat(c, starts)
    k = k[starts]
    keep = (sums != 0).astype(np.bool_)
    return k[keep], sums[keep]
