"""Hot numeric kernels for tree growing, prediction and permutation importance.

Every kernel is written once as plain Python over numpy arrays. When numba
is importable (and ``RFVS_DISABLE_NUMBA`` is unset) the functions are
compiled with ``@njit(cache=True, nogil=True)``; otherwise the same code
runs interpreted. Both paths produce bit-identical results on data without
duplicated feature values; with ties they still agree because the argsort
kind is pinned to mergesort.

The per-(tree, variable) permutation streams use a splitmix64 counter RNG
implemented here so the compiled and fallback paths share one stream
definition. uint64 wraparound is intentional; the fallback wrapper silences
numpy's overflow warnings.
"""

import functools
import os

import numpy as np

DISABLE_ENV = "RFVS_DISABLE_NUMBA"


def _env_disabled():
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes")


if not _env_disabled():
    try:
        import numba

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep in practice
        numba = None
        USING_NUMBA = False
else:
    numba = None
    USING_NUMBA = False


def _jit(fn):
    if USING_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)

    @functools.wraps(fn)
    def wrapper(*args):
        with np.errstate(over="ignore"):
            return fn.__wrapped__(*args) if hasattr(fn, "__wrapped__") else fn(*args)

    wrapper.py_func = fn
    return wrapper


U64 = np.uint64

# splitmix64 constants
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_KEY_A = 0xD1342543DE82EF95
_KEY_B = 0xAF251AF3B0F025B5
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _sm_scramble(z):
    z = (z ^ (z >> U64(30))) * U64(_MIX1)
    z = (z ^ (z >> U64(27))) * U64(_MIX2)
    return z ^ (z >> U64(31))


def _sm_next(state):
    # returns (new state, 64-bit output)
    state = state + U64(_GAMMA)
    return state, _sm_scramble(state)


def _derive_stream(a, b, c):
    # independent stream seed for path (a, b, c); a,b,c < 2**64
    s = (U64(a) * U64(_KEY_A)) ^ (U64(b) * U64(_KEY_B)) ^ (U64(c) * U64(_GAMMA))
    s = _sm_scramble(s + U64(_GAMMA))
    return _sm_scramble(s + U64(_GAMMA))


def _fill_permutation(state, out):
    # Fisher-Yates; out must be preallocated int64 of the wanted size
    m = out.shape[0]
    for i in range(m):
        out[i] = i
    for i in range(m - 1, 0, -1):
        state, z = _sm_next(state)
        u = float(z >> U64(11)) * _INV53
        j = int(u * (i + 1))
        if j > i:
            j = i
        t = out[i]
        out[i] = out[j]
        out[j] = t
    return state


def _sort_pairs(vals, order, m, stack):
    """Deterministic in-place quicksort of vals[0:m], order mirrored.

    order[i] receives the pre-sort position of vals[i]. Median-of-three
    pivots with an insertion-sort tail; `stack` needs >= 128 slots.
    """
    for i in range(m):
        order[i] = i
    stack[0] = 0
    stack[1] = m - 1
    top = 2
    while top > 0:
        hi = stack[top - 1]
        lo = stack[top - 2]
        top -= 2
        while hi - lo > 12:
            mid = (lo + hi) >> 1
            if vals[mid] < vals[lo]:
                vals[mid], vals[lo] = vals[lo], vals[mid]
                order[mid], order[lo] = order[lo], order[mid]
            if vals[hi] < vals[lo]:
                vals[hi], vals[lo] = vals[lo], vals[hi]
                order[hi], order[lo] = order[lo], order[hi]
            if vals[hi] < vals[mid]:
                vals[hi], vals[mid] = vals[mid], vals[hi]
                order[hi], order[mid] = order[mid], order[hi]
            pivot = vals[mid]
            i = lo
            j = hi
            while i <= j:
                while vals[i] < pivot:
                    i += 1
                while vals[j] > pivot:
                    j -= 1
                if i <= j:
                    vals[i], vals[j] = vals[j], vals[i]
                    order[i], order[j] = order[j], order[i]
                    i += 1
                    j -= 1
            if j - lo < hi - i:
                if i < hi:
                    stack[top] = i
                    stack[top + 1] = hi
                    top += 2
                hi = j
            else:
                if lo < j:
                    stack[top] = lo
                    stack[top + 1] = j
                    top += 2
                lo = i
        for i in range(lo + 1, hi + 1):
            v = vals[i]
            o = order[i]
            j = i - 1
            while j >= lo and vals[j] > v:
                vals[j + 1] = vals[j]
                order[j + 1] = order[j]
                j -= 1
            vals[j + 1] = v
            order[j + 1] = o


def _best_split_on(X, y, labels, n_classes, idx, s, e, cand, k, vals, order,
                   qstack, tmp_cnt_l, tmp_cnt_r):
    """Best (feature, threshold) over candidate features for node rows idx[s:e].

    Returns (feature, threshold, impurity decrease); feature is -1 when no
    candidate admits a split with strictly positive decrease. Ties break to
    the lowest feature index, then the lowest threshold (candidates must be
    sorted ascending by the caller).
    """
    m = e - s
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    if n_classes > 0:
        for c in range(n_classes):
            tmp_cnt_r[c] = 0
        for i in range(s, e):
            tmp_cnt_r[labels[idx[i]]] += 1
        sq_tot = 0.0
        for c in range(n_classes):
            sq_tot += float(tmp_cnt_r[c]) * float(tmp_cnt_r[c])
        gini_parent = 1.0 - sq_tot / (float(m) * float(m))
    else:
        gini_parent = 0.0

    for ci in range(k):
        f = cand[ci]
        for i in range(m):
            vals[i] = X[idx[s + i], f]
        _sort_pairs(vals, order, m, qstack)
        if vals[0] == vals[m - 1]:
            continue  # constant candidate, consumes its slot
        if n_classes > 0:
            for c in range(n_classes):
                tmp_cnt_l[c] = 0
                tmp_cnt_r[c] = 0
            for i in range(s, e):
                tmp_cnt_r[labels[idx[i]]] += 1
            nl = 0
            for i in range(m - 1):
                c = labels[idx[s + order[i]]]
                tmp_cnt_l[c] += 1
                tmp_cnt_r[c] -= 1
                nl += 1
                v_i = vals[i]
                v_n = vals[i + 1]
                if v_n > v_i:
                    nr = m - nl
                    sl = 0.0
                    sr = 0.0
                    for c2 in range(n_classes):
                        sl += float(tmp_cnt_l[c2]) * float(tmp_cnt_l[c2])
                        sr += float(tmp_cnt_r[c2]) * float(tmp_cnt_r[c2])
                    gain = gini_parent - (nl - sl / nl) / m - (nr - sr / nr) / m
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_thr = 0.5 * (v_i + v_n)
        else:
            stot = 0.0
            for i in range(m):
                stot += y[idx[s + i]]
            parent_term = stot * stot / m
            slft = 0.0
            nl = 0
            for i in range(m - 1):
                slft += y[idx[s + order[i]]]
                nl += 1
                v_i = vals[i]
                v_n = vals[i + 1]
                if v_n > v_i:
                    nr = m - nl
                    srgt = stot - slft
                    gain = slft * slft / nl + srgt * srgt / nr - parent_term
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_thr = 0.5 * (v_i + v_n)
    return best_f, best_thr, best_gain


def _grow_tree(X, y, labels, n_classes, boot, state, mtry, nodesize,
               feature, threshold, left, right, value):
    """Grow one unpruned CART tree on the bootstrap rows ``boot``.

    ``state`` seeds the splitmix64 stream feeding the per-node feature
    subsample (partial Fisher-Yates over all p features). Output arrays are
    preallocated with capacity 2*len(boot)+2; returns the node count.
    ``feature[i] == -1`` marks a leaf with prediction ``value[i]``.
    """
    n, p = X.shape
    nb = boot.shape[0]
    idx = boot.copy()
    tmp = np.empty(nb, np.int64)
    vals = np.empty(nb, np.float64)
    order = np.empty(nb, np.int64)
    qstack = np.empty(128, np.int64)
    perm = np.empty(p, np.int64)
    for i in range(p):
        perm[i] = i
    k = mtry if mtry < p else p
    cand = np.empty(k, np.int64)
    ncl = n_classes if n_classes > 0 else 1
    cnt_l = np.empty(ncl, np.int64)
    cnt_r = np.empty(ncl, np.int64)

    cap = 2 * nb + 2
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    st_id = np.empty(cap, np.int64)
    st_s[0] = 0
    st_e[0] = nb
    st_id[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        s = st_s[top]
        e = st_e[top]
        node = st_id[top]
        m = e - s

        if n_classes > 0:
            for c in range(n_classes):
                cnt_r[c] = 0
            for i in range(s, e):
                cnt_r[labels[idx[i]]] += 1
            best_c = 0
            for c in range(1, n_classes):
                if cnt_r[c] > cnt_r[best_c]:
                    best_c = c
            leaf_val = float(best_c)
            pure = cnt_r[best_c] == m
        else:
            ssum = 0.0
            for i in range(s, e):
                ssum += y[idx[i]]
            leaf_val = ssum / m
            y0 = y[idx[s]]
            pure = True
            for i in range(s + 1, e):
                if y[idx[i]] != y0:
                    pure = False
                    break

        if pure or m <= nodesize:
            feature[node] = -1
            value[node] = leaf_val
            continue

        # fresh feature subset, without replacement
        for i in range(k):
            state, z = _sm_next(state)
            j = i + int(float(z >> U64(11)) * _INV53 * (p - i))
            if j >= p:
                j = p - 1
            t = perm[i]
            perm[i] = perm[j]
            perm[j] = t
            cand[i] = perm[i]
        cand.sort()

        best_f, best_thr, _gain = _best_split_on(
            X, y, labels, n_classes, idx, s, e, cand, k, vals, order, qstack,
            cnt_l, cnt_r)

        if best_f < 0:
            feature[node] = -1
            value[node] = leaf_val
            continue

        # stable in-place partition by x <= threshold
        wl = 0
        wr = 0
        for i in range(s, e):
            if X[idx[i], best_f] <= best_thr:
                idx[s + wl] = idx[i]
                wl += 1
            else:
                tmp[wr] = idx[i]
                wr += 1
        for i in range(wr):
            idx[s + wl + i] = tmp[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        value[node] = leaf_val
        st_s[top] = s + wl
        st_e[top] = e
        st_id[top] = rid
        top += 1
        st_s[top] = s
        st_e[top] = s + wl
        st_id[top] = lid
        top += 1
    return n_nodes


def _predict_rows(feature, threshold, left, right, value, X, rows, out):
    for r in range(rows.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[rows[r], feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


def _tree_oob_vi(feature, threshold, left, right, value, Xoob, yoob, colmap,
                 n_classes, used, perm_seed, tree_idx, n_perm, out):
    """Per-variable OOB error increase for one tree.

    ``Xoob``/``yoob`` hold the tree's OOB rows only; ``Xoob`` may be a
    compact gather of just the used columns, with ``colmap`` translating
    global feature index -> ``Xoob`` column. ``used`` lists the (global)
    feature indices appearing in the tree's splits; other variables have a
    zero contribution by construction and are skipped. Returns the base OOB
    error; ``out[u]`` receives err_perm - err_base for ``used[u]``.
    """
    m = Xoob.shape[0]
    base_err = 0.0
    if n_classes > 0:
        wrong = 0
        for i in range(m):
            node = 0
            while feature[node] >= 0:
                if Xoob[i, colmap[feature[node]]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            if int(value[node]) != int(yoob[i]):
                wrong += 1
        base_err = wrong / m
    else:
        sse = 0.0
        for i in range(m):
            node = 0
            while feature[node] >= 0:
                if Xoob[i, colmap[feature[node]]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            d = value[node] - yoob[i]
            sse += d * d
        base_err = sse / m

    permbuf = np.empty(m, np.int64)
    xbuf = np.empty(m, np.float64)
    for u in range(used.shape[0]):
        jf = used[u]
        jc = colmap[jf]
        state = _derive_stream(perm_seed, tree_idx, U64(jf))
        acc = 0.0
        for _rep in range(n_perm):
            state = _fill_permutation(state, permbuf)
            for i in range(m):
                xbuf[i] = Xoob[permbuf[i], jc]
            if n_classes > 0:
                wrong = 0
                for i in range(m):
                    node = 0
                    while feature[node] >= 0:
                        f = feature[node]
                        xv = xbuf[i] if f == jf else Xoob[i, colmap[f]]
                        if xv <= threshold[node]:
                            node = left[node]
                        else:
                            node = right[node]
                    if int(value[node]) != int(yoob[i]):
                        wrong += 1
                acc += wrong / m
            else:
                sse = 0.0
                for i in range(m):
                    node = 0
                    while feature[node] >= 0:
                        f = feature[node]
                        xv = xbuf[i] if f == jf else Xoob[i, colmap[f]]
                        if xv <= threshold[node]:
                            node = left[node]
                        else:
                            node = right[node]
                    d = value[node] - yoob[i]
                    sse += d * d
                acc += sse / m
        out[u] = acc / n_perm - base_err
    return base_err


# stream tags: 1 = per-node feature subsets, 2 = bootstrap draws
TAG_FEAT = 1
TAG_BOOT = 2


def _fill_bootstrap(state, n, out):
    for i in range(out.shape[0]):
        state, z = _sm_next(state)
        j = int(float(z >> U64(11)) * _INV53 * n)
        if j >= n:
            j = n - 1
        out[i] = j
    return state


def _fit_forest_chunk(X, y, labels, n_classes, seed, t0, t1, mtry, nodesize,
                      feat_s, thr_s, left_s, right_s, val_s, nnodes, boot_s,
                      votes, sums, counts):
    """Grow trees t0..t1-1 of a forest and accumulate their OOB predictions.

    Stacked per-tree outputs go to rows t0..t1-1 of the *_s slabs; OOB
    aggregation goes to votes (classification) or sums/counts (regression),
    which must be chunk-private when chunks run concurrently.
    """
    n = X.shape[0]
    oob_mark = np.empty(n, np.bool_)
    for t in range(t0, t1):
        bs = _derive_stream(seed, U64(t), U64(TAG_BOOT))
        _fill_bootstrap(bs, n, boot_s[t])
        fs = _derive_stream(seed, U64(t), U64(TAG_FEAT))
        nn = _grow_tree(X, y, labels, n_classes, boot_s[t], fs, mtry, nodesize,
                        feat_s[t], thr_s[t], left_s[t], right_s[t], val_s[t])
        nnodes[t] = nn
        for i in range(n):
            oob_mark[i] = True
        for i in range(n):
            oob_mark[boot_s[t, i]] = False
        feature = feat_s[t]
        threshold = thr_s[t]
        left = left_s[t]
        right = right_s[t]
        value = val_s[t]
        for r in range(n):
            if not oob_mark[r]:
                continue
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            if n_classes > 0:
                votes[r, int(value[node])] += 1
            else:
                sums[r] += value[node]
                counts[r] += 1


def _forest_predict_chunk(feat_s, thr_s, left_s, right_s, val_s, t0, t1,
                          X, votes, sums):
    for t in range(t0, t1):
        feature = feat_s[t]
        threshold = thr_s[t]
        left = left_s[t]
        right = right_s[t]
        value = val_s[t]
        for r in range(X.shape[0]):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            if votes.shape[1] > 0:
                votes[r, int(value[node])] += 1
            else:
                sums[r] += value[node]


def _forest_vi_chunk(feat_s, thr_s, left_s, right_s, val_s, nnodes, boot_s,
                     X, y, n_classes, perm_seed, n_perm, t0, t1, vi):
    """Permutation-importance contributions of trees t0..t1-1, added into the
    chunk-private vi vector. Returns the number of trees with OOB rows."""
    n, p = X.shape
    oob_mark = np.empty(n, np.bool_)
    used_mark = np.empty(p, np.bool_)
    rows = np.empty(n, np.int64)
    used = np.empty(p, np.int64)
    out = np.empty(p, np.float64)
    colmap = np.empty(p, np.int64)
    n_eff = 0
    for t in range(t0, t1):
        for i in range(n):
            oob_mark[i] = True
        for i in range(boot_s.shape[1]):
            oob_mark[boot_s[t, i]] = False
        m = 0
        for i in range(n):
            if oob_mark[i]:
                rows[m] = i
                m += 1
        if m == 0:
            continue
        n_eff += 1
        for j in range(p):
            used_mark[j] = False
        feature = feat_s[t]
        for i in range(nnodes[t]):
            if feature[i] >= 0:
                used_mark[feature[i]] = True
        nu = 0
        for j in range(p):
            if used_mark[j]:
                used[nu] = j
                nu += 1
        if nu == 0:
            continue
        # compact gather: only the columns this tree splits on
        Xoob = np.empty((m, nu), np.float64)
        yoob = np.empty(m, np.float64)
        for u in range(nu):
            colmap[used[u]] = u
        for i in range(m):
            yoob[i] = y[rows[i]]
            for u in range(nu):
                Xoob[i, u] = X[rows[i], used[u]]
        _tree_oob_vi(feature, thr_s[t], left_s[t], right_s[t], val_s[t],
                     Xoob, yoob, colmap, n_classes, used[:nu], perm_seed,
                     U64(t), n_perm, out[:nu])
        for u in range(nu):
            vi[used[u]] += out[u]
    return n_eff


if USING_NUMBA:
    _sm_scramble = numba.njit(cache=True, nogil=True, inline="always")(_sm_scramble)
    _sm_next = numba.njit(cache=True, nogil=True, inline="always")(_sm_next)
    _derive_stream = numba.njit(cache=True, nogil=True)(_derive_stream)
    _fill_permutation = numba.njit(cache=True, nogil=True)(_fill_permutation)
    _sort_pairs = numba.njit(cache=True, nogil=True)(_sort_pairs)
    _best_split_on = numba.njit(cache=True, nogil=True)(_best_split_on)
    _grow_tree = numba.njit(cache=True, nogil=True)(_grow_tree)
    _fill_bootstrap = numba.njit(cache=True, nogil=True)(_fill_bootstrap)
    _tree_oob_vi = numba.njit(cache=True, nogil=True)(_tree_oob_vi)

grow_tree_kernel = _jit(_grow_tree) if not USING_NUMBA else _grow_tree
predict_rows_kernel = _jit(_predict_rows)
tree_oob_vi_kernel = _jit(_tree_oob_vi) if not USING_NUMBA else _tree_oob_vi
fit_forest_chunk_kernel = _jit(_fit_forest_chunk)
forest_predict_chunk_kernel = _jit(_forest_predict_chunk)
forest_vi_chunk_kernel = _jit(_forest_vi_chunk)


def feature_stream(seed, tree_idx=0):
    """Seed state for a tree's feature-subset stream."""
    with np.errstate(over="ignore"):
        # force a uint64 scalar: jitted functions unbox uint64 to plain int
        return U64(_derive_stream(U64(seed), U64(tree_idx), U64(TAG_FEAT)))


def bootstrap_stream(seed, tree_idx=0):
    with np.errstate(over="ignore"):
        return U64(_derive_stream(U64(seed), U64(tree_idx), U64(TAG_BOOT)))


def fill_bootstrap(state, n, out=None, size=None):
    if out is None:
        out = np.empty(n if size is None else size, np.int64)
    with np.errstate(over="ignore"):
        _fill_bootstrap(U64(state), n, out)
    return out


def best_split_kernel(X, y, labels, n_classes, rows, cand):
    """Python entry point for a single node's split search."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cand = np.sort(np.asarray(cand, dtype=np.int64))
    m = rows.shape[0]
    vals = np.empty(m, np.float64)
    order = np.empty(m, np.int64)
    qstack = np.empty(128, np.int64)
    ncl = n_classes if n_classes > 0 else 1
    cnt_l = np.empty(ncl, np.int64)
    cnt_r = np.empty(ncl, np.int64)
    if USING_NUMBA:
        return _best_split_on(X, y, labels, n_classes, rows, 0, m, cand,
                              cand.shape[0], vals, order, qstack, cnt_l, cnt_r)
    with np.errstate(over="ignore"):
        return _best_split_on(X, y, labels, n_classes, rows, 0, m, cand,
                              cand.shape[0], vals, order, qstack, cnt_l, cnt_r)


def vi_permutation(perm_seed, tree_idx, var, m, n_perm=1):
    """Materialize the permutation(s) used for (tree, variable) in VI.

    Exposed so external checks can rebuild the exact permuted OOB matrices.
    """
    out = np.empty((n_perm, m), np.int64)
    with np.errstate(over="ignore"):
        # re-wrap as uint64 scalars: jitted callees unbox returns to plain int
        state = U64(_derive_stream(U64(perm_seed), U64(tree_idx), U64(var)))
        buf = np.empty(m, np.int64)
        for r in range(n_perm):
            state = U64(_fill_permutation(state, buf))
            out[r] = buf
    return out
