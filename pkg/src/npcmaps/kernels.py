"""Hot loops: relaxation sweeps, grid energy, interpolation, stencil sums.

Every public kernel dispatches on :func:`npcmaps._accel.backend`. The numba
versions are plain loops; the numpy versions vectorise where the algorithm
allows (red-black sweeps, offset-wise stencil sums) and otherwise run the
same scalar loop uncompiled. Sweeps, multilinear interpolation and stencil
sums accumulate in the same order in both paths and agree bit for bit; the
energy and jet sums are vectorised differently and agree to rounding.

Grid arrays are passed flattened (C order). ``strides`` holds the flat-index
step for each axis and ``order`` the interior node ids in sweep order.
"""
import numpy as np

from . import _accel
from ._accel import njit

# -- relaxation sweeps -------------------------------------------------------


@njit
def _sweep_spider_loop(face, rho, order, strides, k):
    nn = 2 * strides.shape[0]
    acc = np.zeros(k)
    max_step = 0.0
    for idx in range(order.shape[0]):
        i = order[idx]
        for f in range(k):
            acc[f] = 0.0
        total = 0.0
        for a in range(strides.shape[0]):
            for side in range(2):
                j = i - strides[a] if side == 0 else i + strides[a]
                r = rho[j]
                if r > 0.0:
                    acc[face[j]] += r
                    total += r
        best = 0
        for f in range(1, k):
            if acc[f] > acc[best]:
                best = f
        x = (2.0 * acc[best] - total) / nn
        if x > 0.0:
            nf = best
            nr = x
        else:
            nf = 0
            nr = 0.0
        old = rho[i]
        if nf == face[i] or nr == 0.0 or old == 0.0:
            step = abs(nr - old)
        else:
            step = nr + old
        if step > max_step:
            max_step = step
        face[i] = nf
        rho[i] = nr
    return max_step


@njit
def _sweep_book_loop(face, s, t, order, strides, k):
    nn = 2 * strides.shape[0]
    acc = np.zeros(k)
    max_step = 0.0
    for idx in range(order.shape[0]):
        i = order[idx]
        for f in range(k):
            acc[f] = 0.0
        total = 0.0
        ssum = 0.0
        for a in range(strides.shape[0]):
            for side in range(2):
                j = i - strides[a] if side == 0 else i + strides[a]
                ssum += s[j]
                r = t[j]
                if r > 0.0:
                    acc[face[j]] += r
                    total += r
        best = 0
        for f in range(1, k):
            if acc[f] > acc[best]:
                best = f
        x = (2.0 * acc[best] - total) / nn
        sb = ssum / nn
        if x > 0.0:
            nf = best
            nt = x
        else:
            nf = 0
            nt = 0.0
        old = t[i]
        ds = sb - s[i]
        if nf == face[i] or nt == 0.0 or old == 0.0:
            dn = nt - old
        else:
            dn = nt + old
        step = np.sqrt(ds * ds + dn * dn)
        if step > max_step:
            max_step = step
        face[i] = nf
        s[i] = sb
        t[i] = nt
    return max_step


def _batch_update(face, coords, ids, strides, k):
    """Vectorised barycenter update of a set of mutually non-adjacent nodes."""
    nn = 2 * len(strides)
    book = coords.shape[1] == 2
    hgt = coords[:, -1]
    acc = np.zeros((ids.size, k))
    total = np.zeros(ids.size)
    ssum = np.zeros(ids.size)
    rows = np.arange(ids.size)
    for st in strides:
        for j in (ids - st, ids + st):
            if book:
                ssum += coords[j, 0]
            r = hgt[j]
            pos = r > 0.0
            acc[rows[pos], face[j][pos]] += r[pos]
            total += np.where(pos, r, 0.0)
    best = np.argmax(acc, axis=1)
    x = (2.0 * acc[rows, best] - total) / nn
    up = x > 0.0
    new_face = np.where(up, best, 0)
    new_h = np.where(up, x, 0.0)
    old_h = hgt[ids]
    same = (new_face == face[ids]) | (new_h == 0.0) | (old_h == 0.0)
    dn = np.where(same, new_h - old_h, new_h + old_h)
    if book:
        sb = ssum / nn
        ds = sb - coords[ids, 0]
        step = np.sqrt(ds * ds + dn * dn)
        coords[ids, 0] = sb
    else:
        step = np.abs(dn)
    face[ids] = new_face
    coords[ids, -1] = new_h
    return float(step.max()) if step.size else 0.0


def sweep(face, coords, order, strides, k, colors=None):
    """One Gauss-Seidel pass; returns the largest single-node move.

    ``face`` (int64, flat) and ``coords`` (float64, shape (N, c)) are updated
    in place. When ``colors`` (a list of id arrays) is given the pass is
    red-black and the numpy backend vectorises each colour.
    """
    if colors is not None and _accel.backend() == "numpy":
        return max(_batch_update(face, coords, ids, strides, k) for ids in colors)
    if colors is not None:
        order = np.concatenate(colors)
    if coords.shape[1] == 1:
        rho = coords[:, 0]
        if _accel.backend() == "numba":
            out = _sweep_spider_loop(face, rho, order, strides, k)
        else:
            out = _sweep_spider_loop.py_func(face, rho, order, strides, k)
        coords[:, 0] = rho
        return out
    s = np.ascontiguousarray(coords[:, 0])
    t = np.ascontiguousarray(coords[:, 1])
    fn = _sweep_book_loop if _accel.backend() == "numba" else _sweep_book_loop.py_func
    out = fn(face, s, t, order, strides, k)
    coords[:, 0] = s
    coords[:, 1] = t
    return out


# -- forward-difference energy ----------------------------------------------


@njit
def _energy_loop(face, coords, sizes, strides):
    total = 0.0
    ncoord = coords.shape[1]
    for i in range(face.shape[0]):
        for a in range(strides.shape[0]):
            pos = (i // strides[a]) % sizes[a]
            if pos == sizes[a] - 1:
                continue
            j = i + strides[a]
            w = 1.0
            for b in range(strides.shape[0]):
                if b != a:
                    pb = (i // strides[b]) % sizes[b]
                    if pb == 0 or pb == sizes[b] - 1:
                        w *= 0.5
            h1 = coords[i, ncoord - 1]
            h2 = coords[j, ncoord - 1]
            if face[i] == face[j] or h1 == 0.0 or h2 == 0.0:
                dn = h1 - h2
            else:
                dn = h1 + h2
            d2 = dn * dn
            if ncoord == 2:
                ds = coords[i, 0] - coords[j, 0]
                d2 += ds * ds
            total += w * d2
    return total


def edge_sum(face, coords, shape):
    """Trapezoid-weighted sum of squared target distances over axis-aligned edges.

    An edge lying in a face of the box boundary gets weight 1/2 for each
    transverse axis along which it sits on the boundary, so linear maps
    have exactly the continuum energy.
    """
    shape = tuple(shape)
    if _accel.backend() == "numba":
        sizes = np.array(shape, dtype=np.int64)
        strides = np.array(
            [int(np.prod(shape[a + 1:])) for a in range(len(shape))], dtype=np.int64
        )
        return _energy_loop(face.reshape(-1), coords.reshape(-1, coords.shape[-1]),
                            sizes, strides)
    f = face.reshape(shape)
    c = coords.reshape(shape + (coords.shape[-1],))
    total = 0.0
    for a in range(len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        h1 = c[lo][..., -1]
        h2 = c[hi][..., -1]
        same = (f[lo] == f[hi]) | (h1 == 0.0) | (h2 == 0.0)
        dn = np.where(same, h1 - h2, h1 + h2)
        d2 = dn * dn
        if c.shape[-1] == 2:
            ds = c[lo][..., 0] - c[hi][..., 0]
            d2 = d2 + ds * ds
        for b in range(len(shape)):
            if b != a:
                wb = np.ones(shape[b])
                wb[0] = wb[-1] = 0.5
                bshape = [1] * len(shape)
                bshape[b] = shape[b]
                d2 = d2 * wb.reshape(bshape)
        total += float(d2.sum())
    return total


# -- multilinear interpolation ----------------------------------------------


@njit
def _interp_loop(values, n1, m, lo, h, pts, out):
    nf = values.shape[1]
    nmax = n1 - 1
    for p in range(pts.shape[0]):
        base = 0
        fr0 = 0.0
        fr1 = 0.0
        fr2 = 0.0
        i0 = 0
        i1 = 0
        i2 = 0
        for a in range(m):
            u = (pts[p, a] - lo) / h
            i = int(np.floor(u))
            if i < 0:
                i = 0
            if i > nmax - 1:
                i = nmax - 1
            f = u - i
            if f < 0.0:
                f = 0.0
            if f > 1.0:
                f = 1.0
            if a == 0:
                i0 = i
                fr0 = f
            elif a == 1:
                i1 = i
                fr1 = f
            else:
                i2 = i
                fr2 = f
        for c in range(nf):
            out[p, c] = 0.0
        if m == 2:
            for b0 in range(2):
                w0 = fr0 if b0 == 1 else 1.0 - fr0
                for b1 in range(2):
                    w1 = fr1 if b1 == 1 else 1.0 - fr1
                    base = (i0 + b0) * n1 + (i1 + b1)
                    w = w0 * w1
                    for c in range(nf):
                        out[p, c] += w * values[base, c]
        else:
            for b0 in range(2):
                w0 = fr0 if b0 == 1 else 1.0 - fr0
                for b1 in range(2):
                    w1 = fr1 if b1 == 1 else 1.0 - fr1
                    for b2 in range(2):
                        w2 = fr2 if b2 == 1 else 1.0 - fr2
                        base = ((i0 + b0) * n1 + (i1 + b1)) * n1 + (i2 + b2)
                        w = w0 * w1 * w2
                        for c in range(nf):
                            out[p, c] += w * values[base, c]
    return out


def _interp_numpy(values, n1, m, lo, h, pts):
    u = (pts - lo) / h
    idx = np.clip(np.floor(u).astype(np.int64), 0, n1 - 2)
    fr = np.clip(u - idx, 0.0, 1.0)
    out = np.zeros((pts.shape[0], values.shape[1]))
    for corner in range(2 ** m):
        bits = [(corner >> (m - 1 - a)) & 1 for a in range(m)]
        w = np.ones(pts.shape[0])
        base = np.zeros(pts.shape[0], dtype=np.int64)
        for a in range(m):
            w = w * (fr[:, a] if bits[a] else 1.0 - fr[:, a])
            base = base * n1 + idx[:, a] + bits[a]
        out += w[:, None] * values[base]
    return out


def interpolate(values, n1, m, lo, h, pts):
    """Multilinear interpolation of node data ``values`` (N, nf) at ``pts`` (P, m)."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if _accel.backend() == "numba":
        out = np.empty((pts.shape[0], values.shape[1]))
        return _interp_loop(values, n1, m, float(lo), float(h), pts, out)
    return _interp_numpy(values, n1, m, float(lo), float(h), pts)


# -- jet interpolation -------------------------------------------------------


@njit
def _jet_loop(U, DU, D2U, n1, m, lo, h, pts, out):
    c = U.shape[1]
    nmax = n1 - 1
    idx = np.zeros(3, dtype=np.int64)
    fr = np.zeros(3)
    d = np.zeros(3)
    ut = np.zeros(c)
    gt = np.zeros((c, 3))
    ncol = out.shape[1]
    for p in range(pts.shape[0]):
        for a in range(m):
            u = (pts[p, a] - lo) / h
            i = int(np.floor(u))
            if i < 0:
                i = 0
            if i > nmax - 1:
                i = nmax - 1
            f = u - i
            if f < 0.0:
                f = 0.0
            if f > 1.0:
                f = 1.0
            idx[a] = i
            fr[a] = f
        for k in range(ncol):
            out[p, k] = 0.0
        for corner in range(2 ** m):
            w = 1.0
            node = 0
            for a in range(m):
                bit = (corner >> (m - 1 - a)) & 1
                w *= fr[a] if bit == 1 else 1.0 - fr[a]
                node = node * n1 + idx[a] + bit
                d[a] = pts[p, a] - (lo + h * (idx[a] + bit))
            if w == 0.0:
                continue
            for cc in range(c):
                val = U[node, cc]
                for a in range(m):
                    g = DU[node, cc, a]
                    for b in range(m):
                        g += D2U[node, cc, a, b] * d[b]
                    gt[cc, a] = g
                    val += (DU[node, cc, a] + 0.5 * (g - DU[node, cc, a])) * d[a]
                ut[cc] = val
            for cc in range(c):
                out[p, 0] += w * ut[cc] * ut[cc]
                for a in range(m):
                    out[p, 1 + a] += w * gt[cc, a] * ut[cc]
                    for b in range(m):
                        out[p, 1 + m + a * m + b] += w * gt[cc, a] * gt[cc, b]
        tr = 0.0
        for a in range(m):
            tr += out[p, 1 + m + a * m + a]
        out[p, ncol - 1] = tr
    return out


def _jet_numpy(U, DU, D2U, n1, m, lo, h, pts):
    u = (pts - lo) / h
    idx = np.clip(np.floor(u).astype(np.int64), 0, n1 - 2)
    fr = np.clip(u - idx, 0.0, 1.0)
    P = pts.shape[0]
    q = np.zeros(P)
    pv = np.zeros((P, m))
    G = np.zeros((P, m, m))
    for corner in range(2 ** m):
        bits = np.array([(corner >> (m - 1 - a)) & 1 for a in range(m)])
        w = np.ones(P)
        node = np.zeros(P, dtype=np.int64)
        for a in range(m):
            w = w * (fr[:, a] if bits[a] else 1.0 - fr[:, a])
            node = node * n1 + idx[:, a] + bits[a]
        d = pts - (lo + h * (idx + bits))
        du = DU[node]
        gt = du + np.einsum("pcab,pb->pca", D2U[node], d)
        ut = U[node] + np.einsum("pca,pa->pc", du + 0.5 * (gt - du), d)
        q += w * np.sum(ut * ut, axis=1)
        pv += w[:, None] * np.einsum("pca,pc->pa", gt, ut)
        G += w[:, None, None] * np.einsum("pca,pcb->pab", gt, gt)
    tr = np.trace(G, axis1=1, axis2=2)
    return np.column_stack([q, pv, G.reshape(P, m * m), tr])


def jet_interpolate(U, DU, D2U, n1, m, lo, h, pts):
    """Blend of corner Taylor jets: columns [q, p_1..p_m, G_11..G_mm, trG].

    Each corner node contributes the second-order Taylor value u~ and
    gradient g~ of its jet at the point, weighted multilinearly, as
    |u~|^2, g~' u~ and g~' g~. The two backends agree to rounding, not bit
    for bit (the numpy path sums with einsum).
    """
    U = np.ascontiguousarray(U, dtype=np.float64)
    DU = np.ascontiguousarray(DU, dtype=np.float64)
    D2U = np.ascontiguousarray(D2U, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if _accel.backend() == "numba":
        out = np.empty((pts.shape[0], 2 + m + m * m))
        return _jet_loop(U, DU, D2U, n1, m, float(lo), float(h), pts, out)
    return _jet_numpy(U, DU, D2U, n1, m, float(lo), float(h), pts)


# -- fixed stencils ----------------------------------------------------------


@njit
def _stencil_loop(values, ids, deltas, weights, out):
    nf = values.shape[1]
    for q in range(ids.shape[0]):
        i = ids[q]
        for c in range(nf):
            acc = 0.0
            for o in range(deltas.shape[0]):
                acc += weights[o, c] * values[i + deltas[o], c]
            out[q, c] = acc
    return out


def stencil_apply(values, ids, deltas, weights):
    """``out[q, c] = sum_o weights[o, c] * values[ids[q] + deltas[o], c]``.

    Callers guarantee every ``ids[q] + deltas[o]`` is a valid node.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if _accel.backend() == "numba":
        out = np.empty((ids.shape[0], values.shape[1]))
        return _stencil_loop(values, ids.astype(np.int64), deltas.astype(np.int64),
                             weights, out)
    out = np.zeros((ids.shape[0], values.shape[1]))
    for o in range(deltas.shape[0]):
        out += weights[o] * values[ids + deltas[o]]
    return out
