"""Pure-numpy transport kernels (fallback when the compiled extension is absent).

The block solve walks parallel levels of the subcell graph and solves all
diagonal blocks of a level in one batched call.
"""
import numpy as np

BACKEND = "python"


def _coupling_apply(st, F, entries):
    """Sum_c coef_c F[src_c] grouped by destination (sub, node), for a subset of entries."""
    return st.cp_coef[entries] * F[st.cp_src_sub[entries], st.cp_src_node[entries]]


def volume_residual(st, F, alpha, R):
    np.einsum("sij,sj->si", st.G, F, out=R)
    if st.cp_coef.size:
        all_e = np.arange(st.cp_coef.size)
        np.add.at(R, (st.cp_dst_sub, st.cp_node), _coupling_apply(st, F, all_e))
    R *= -alpha
    R += F
    return R


def _level_entries(st):
    cache = st.backend_cache.get("py_levels")
    if cache is None:
        level_of = np.empty(st.n_sub, dtype=np.int64)
        for k in range(st.level_ptr.size - 1):
            level_of[st.order[st.level_ptr[k]:st.level_ptr[k + 1]]] = k
        lev = level_of[st.cp_dst_sub]
        perm = np.argsort(lev, kind="stable")
        eptr = np.searchsorted(lev[perm], np.arange(st.level_ptr.size))
        cache = (perm, eptr)
        st.backend_cache["py_levels"] = cache
    return cache


def block_solve(st, R, beta, F, cache=None):
    """Forward substitution over subcell levels; returns index of a singular block or -1."""
    N = st.G.shape[1]
    eye = np.eye(N)
    inv = cache.get((BACKEND, beta)) if cache is not None else None
    if inv is None:
        A = eye[None] + beta * st.G
        try:
            inv = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            for s in range(st.n_sub):
                if abs(np.linalg.det(A[s])) < 1e-300:
                    return s
            return 0
        if cache is not None:
            cache[BACKEND, beta] = inv
    perm, eptr = _level_entries(st)
    loc = np.empty(st.n_sub, dtype=np.int64)
    for k in range(st.level_ptr.size - 1):
        cells = st.order[st.level_ptr[k]:st.level_ptr[k + 1]]
        b = R[cells]
        ent = perm[eptr[k]:eptr[k + 1]]
        if ent.size:
            b = b.copy()
            loc[cells] = np.arange(cells.size)
            local = loc[st.cp_dst_sub[ent]]
            np.add.at(b, (local, st.cp_node[ent]), -beta * _coupling_apply(st, F, ent))
        F[cells] = np.einsum("sij,sj->si", inv[cells], b)
    return -1
