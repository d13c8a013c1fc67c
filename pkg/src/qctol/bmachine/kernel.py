"""Compiled shot loop for the pairing-list machine.

The kernel mirrors :mod:`.machine` operation for operation over the same
flat program arrays and the same pre-drawn uniforms, so the two paths are
interchangeable.  Everything is real float64; per-gate work touches at most
two pairs' vectors, independent of the machine size.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap

ERR_OK = 0
ERR_SEP_WEIGHT = 1
ERR_EB_NORM = 2
ERR_MEAS_WEIGHT = 3
ERR_NOT_PAIRED = 4


@njit(cache=True, nogil=True)
def _apply_block(r, owner, slot, m4, tmp):
    # r[owner] <- (m4 x I) r or (I x m4) r, written via the (4,4) reshape
    base = r[owner]
    if slot == 0:
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for k in range(4):
                    acc += m4[i, k] * base[4 * k + j]
                tmp[4 * i + j] = acc
    else:
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for k in range(4):
                    acc += base[4 * i + k] * m4[j, k]
                tmp[4 * i + j] = acc
    for t in range(16):
        base[t] = tmp[t]
    return base[0]


@njit(cache=True, nogil=True)
def _permute16(vec, perm, tmp):
    for i in range(16):
        tmp[i] = vec[perm[i]]
    for i in range(16):
        vec[i] = tmp[i]


@njit(cache=True, nogil=True)
def run_shots(n, partner0, r0, ops_kind, ops_t0, ops_t1, ops_idx, ptm4s,
              ptm16s, spec_weights, spec_ptm16, sep_off, sep_cnt, sep_ma,
              sep_mb, swp_off, swp_cnt, swp_ma, swp_mb, eb_off, eb_cnt,
              eb_c, eb_prep, measure, cond0, cond1, swap16,
              uniforms, out_bits, errs):
    n_shots = uniforms.shape[0]
    n_ops = ops_kind.shape[0]
    n_meas = measure.shape[0]
    partner = np.empty(n, dtype=np.int64)
    r = np.empty((n, 16), dtype=np.float64)
    tmp = np.empty(16, dtype=np.float64)
    tmp2 = np.empty(16, dtype=np.float64)
    u_vec = np.empty(16, dtype=np.float64)
    v_vec = np.empty(16, dtype=np.float64)
    new_xy = np.empty(16, dtype=np.float64)
    cand_a = np.empty((64, 16), dtype=np.float64)
    cand_b = np.empty((64, 16), dtype=np.float64)
    weights = np.empty(64, dtype=np.float64)

    for s in range(n_shots):
        for i in range(n):
            partner[i] = partner0[i]
            for j in range(16):
                r[i, j] = r0[i, j]
        d = 0
        err = ERR_OK

        for g in range(n_ops):
            kind = ops_kind[g]
            idx = ops_idx[g]
            if kind == 0:  # single-qubit transfer
                q = ops_t0[g]
                o = q if q < partner[q] else partner[q]
                slot = 0 if q < partner[q] else 1
                _apply_block(r, o, slot, ptm4s[idx], tmp)
                continue

            a = ops_t0[g]
            b = ops_t1[g]
            in_pair = partner[a] == b
            if kind == 1 and not in_pair:
                err = ERR_NOT_PAIRED
                break
            if kind == 1 or in_pair:
                # whole-gate 16x16 transfer on the shared pair
                if kind == 2:
                    d += 2  # branch gates always consume their two draws
                    t16 = ptm16s[spec_ptm16[idx]]
                else:
                    t16 = ptm16s[idx]
                o = a if a < b else b
                vec = r[o]
                if a > b:
                    _permute16(vec, swap16, tmp)
                for i in range(16):
                    acc = 0.0
                    for k in range(16):
                        acc += t16[i, k] * vec[k]
                    tmp2[i] = acc
                for i in range(16):
                    vec[i] = tmp2[i]
                if a > b:
                    _permute16(vec, swap16, tmp)
                continue

            # cross-pair branch-spec gate
            u_branch = uniforms[s, d]
            u_inner = uniforms[s, d + 1]
            d += 2
            p_sep = spec_weights[idx, 0]
            p_swp = spec_weights[idx, 1]

            if u_branch >= p_sep + p_swp:
                # measure-and-prepare branch: rewire pairings
                x = partner[a]
                y = partner[b]
                oa = a if a < x else x
                ob = b if b < y else y
                if a < x:  # stored (a, x) -> want (x, a)
                    for i in range(16):
                        u_vec[i] = r[oa, swap16[i]]
                else:
                    for i in range(16):
                        u_vec[i] = r[oa, i]
                if b > y:  # stored (y, b) -> want (b, y)
                    for i in range(16):
                        v_vec[i] = r[ob, swap16[i]]
                else:
                    for i in range(16):
                        v_vec[i] = r[ob, i]

                off = eb_off[idx]
                cnt = eb_cnt[idx]
                total = 0.0
                for k in range(cnt):
                    pk = 0.0
                    for pp in range(16):
                        up = u_vec[pp]
                        if up == 0.0:
                            continue
                        row = eb_c[off + k, 0, pp]
                        acc = 0.0
                        for qq in range(16):
                            acc += row[qq] * v_vec[qq]
                        pk += up * acc
                    weights[k] = pk if pk > 0.0 else 0.0
                    total += pk
                if total < 1e-12 or abs(total - 1.0) > 1e-9:
                    err = ERR_EB_NORM
                    break
                target = u_inner * total
                acc2 = 0.0
                pick = cnt - 1
                for k in range(cnt):
                    acc2 += weights[k]
                    if target < acc2:
                        pick = k
                        break
                # contract the chosen outcome tensor into the new (x,y) vector
                for rr in range(16):
                    accr = 0.0
                    for pp in range(16):
                        up = u_vec[pp]
                        if up == 0.0:
                            continue
                        row = eb_c[off + pick, rr, pp]
                        accq = 0.0
                        for qq in range(16):
                            accq += row[qq] * v_vec[qq]
                        accr += up * accq
                    new_xy[rr] = accr
                norm = new_xy[0]
                for rr in range(16):
                    new_xy[rr] /= norm
                partner[x] = y
                partner[y] = x
                partner[a] = b
                partner[b] = a
                oxy = x if x < y else y
                if x < y:
                    for i in range(16):
                        r[oxy, i] = new_xy[i]
                else:
                    for i in range(16):
                        r[oxy, i] = new_xy[swap16[i]]
                oab = a if a < b else b
                if a < b:
                    for i in range(16):
                        r[oab, i] = eb_prep[off + pick, i]
                else:
                    for i in range(16):
                        r[oab, i] = eb_prep[off + pick, swap16[i]]
                continue

            if u_branch >= p_sep:
                # swap branch: relabel memberships first
                x = partner[a]
                y = partner[b]
                oa = a if a < x else x
                ob = b if b < y else y
                for i in range(16):
                    tmp[i] = r[oa, i]
                if a < x:  # stored (a, x) -> (x, a-content)
                    for i in range(16):
                        tmp2[i] = tmp[swap16[i]]
                    for i in range(16):
                        tmp[i] = tmp2[i]
                # new pair (x, b) with the old a-content in b's slot
                oxb = x if x < b else b
                if x < b:
                    for i in range(16):
                        r[oxb, i] = tmp[i]
                else:
                    for i in range(16):
                        r[oxb, i] = tmp[swap16[i]]
                for i in range(16):
                    tmp[i] = r[ob, i]
                if b < y:  # stored (b, y) -> (y, b-content)
                    for i in range(16):
                        tmp2[i] = tmp[swap16[i]]
                    for i in range(16):
                        tmp[i] = tmp2[i]
                oya = y if y < a else a
                if y < a:
                    for i in range(16):
                        r[oya, i] = tmp[i]
                else:
                    for i in range(16):
                        r[oya, i] = tmp[swap16[i]]
                partner[x] = b
                partner[b] = x
                partner[a] = y
                partner[y] = a
                off = swp_off[idx]
                cnt = swp_cnt[idx]
                ma = swp_ma
                mb = swp_mb
            else:
                off = sep_off[idx]
                cnt = sep_cnt[idx]
                ma = sep_ma
                mb = sep_mb

            # product branch on the (possibly relabeled) configuration
            oa = a if a < partner[a] else partner[a]
            ob = b if b < partner[b] else partner[b]
            sa = 0 if a < partner[a] else 1
            sb = 0 if b < partner[b] else 1
            total = 0.0
            for i in range(cnt):
                base = r[oa]
                m4 = ma[off + i]
                if sa == 0:
                    for ii in range(4):
                        for jj in range(4):
                            acc = 0.0
                            for kk in range(4):
                                acc += m4[ii, kk] * base[4 * kk + jj]
                            cand_a[i, 4 * ii + jj] = acc
                else:
                    for ii in range(4):
                        for jj in range(4):
                            acc = 0.0
                            for kk in range(4):
                                acc += base[4 * ii + kk] * m4[jj, kk]
                            cand_a[i, 4 * ii + jj] = acc
                base = r[ob]
                m4 = mb[off + i]
                if sb == 0:
                    for ii in range(4):
                        for jj in range(4):
                            acc = 0.0
                            for kk in range(4):
                                acc += m4[ii, kk] * base[4 * kk + jj]
                            cand_b[i, 4 * ii + jj] = acc
                else:
                    for ii in range(4):
                        for jj in range(4):
                            acc = 0.0
                            for kk in range(4):
                                acc += base[4 * ii + kk] * m4[jj, kk]
                            cand_b[i, 4 * ii + jj] = acc
                wa = cand_a[i, 0] if cand_a[i, 0] > 0.0 else 0.0
                wb = cand_b[i, 0] if cand_b[i, 0] > 0.0 else 0.0
                weights[i] = wa * wb
                total += weights[i]
            if total < 1e-12:
                err = ERR_SEP_WEIGHT
                break
            target = u_inner * total
            acc2 = 0.0
            pick = cnt - 1
            for i in range(cnt):
                acc2 += weights[i]
                if target < acc2:
                    pick = i
                    break
            wa = cand_a[pick, 0]
            wb = cand_b[pick, 0]
            for i in range(16):
                r[oa, i] = cand_a[pick, i] / wa
                r[ob, i] = cand_b[pick, i] / wb

        if err != ERR_OK:
            errs[s] = err
            continue

        # final measurements, conditioning each pair vector as we go
        for mi in range(n_meas):
            q = measure[mi]
            o = q if q < partner[q] else partner[q]
            slot = 0 if q < partner[q] else 1
            zidx = 12 if slot == 0 else 3
            p0 = 0.5 * (1.0 + r[o, zidx])
            if p0 < 0.0:
                p0 = 0.0
            elif p0 > 1.0:
                p0 = 1.0
            u = uniforms[s, d]
            d += 1
            if u < p0:
                bit = 0
                weight = _apply_block(r, o, slot, cond0, tmp)
            else:
                bit = 1
                weight = _apply_block(r, o, slot, cond1, tmp)
            if weight < 1e-12:
                err = ERR_MEAS_WEIGHT
                break
            for i in range(16):
                r[o, i] /= weight
            out_bits[s, mi] = bit
        errs[s] = err
