"""Independent reference implementations used as test oracles.

Nothing here imports the code under test except plain value types.
"""

import itertools

import numpy as np


def raster_iou(a, b):
    """IoU by counting unit pixels of an integer grid; boxes are (x1, y1, x2, y2) ints."""
    x0, y0 = min(a[0], b[0]), min(a[1], b[1])
    x1, y1 = max(a[2], b[2]), max(a[3], b[3])
    if x1 <= x0 or y1 <= y0:
        return 0.0
    xs = np.arange(x0, x1)
    ys = np.arange(y0, y1)
    in_a = np.logical_and.outer((ys >= a[1]) & (ys < a[3]), (xs >= a[0]) & (xs < a[2]))
    in_b = np.logical_and.outer((ys >= b[1]) & (ys < b[3]), (xs >= b[0]) & (xs < b[2]))
    inter = np.count_nonzero(in_a & in_b)
    union = np.count_nonzero(in_a | in_b)
    return inter / union if union else 0.0


def plain_iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


_PERMS = {}


def brute_min_cost(costs):
    """Minimum total over all full-cardinality assignments of a finite matrix."""
    c = np.asarray(costs, dtype=float)
    if c.shape[0] > c.shape[1]:
        c = c.T
    n, m = c.shape
    if n == 0:
        return 0.0
    if (n, m) not in _PERMS:
        _PERMS[n, m] = np.array(list(itertools.permutations(range(m), n)), dtype=np.intp)
    perms = _PERMS[n, m]
    totals = c[np.arange(n), perms].sum(axis=1)
    return float(totals.min())


def brute_assignment(costs):
    """(cardinality, cost, pairs) of the best partial assignment over finite cells.

    Maximizes cardinality, then minimizes cost, then takes the
    lexicographically smallest sorted pair list.
    """
    c = np.asarray(costs, dtype=float)
    n, m = c.shape
    best = None

    def rec(i, used, pairs, total):
        nonlocal best
        if i == n:
            key = (-len(pairs), round(total, 9), sorted(pairs))
            if best is None or key < best:
                best = key
            return
        rec(i + 1, used, pairs, total)
        for j in range(m):
            if j not in used and np.isfinite(c[i, j]):
                rec(i + 1, used | {j}, pairs + [(i, j)], total + c[i, j])

    rec(0, frozenset(), [], 0.0)
    return -best[0], best[1], best[2]


# --- reference IoU tracker ------------------------------------------------

def _ref_nms(dets, thr):
    order = sorted(range(len(dets)), key=lambda k: (-dets[k][4], k))
    keep = []
    for k in order:
        if all(plain_iou(dets[k], dets[q]) < thr for q in keep):
            keep.append(k)
    return [dets[k] for k in sorted(keep)]


def reference_iou_tracker(frames, sigma_iou, sigma_h, t_min, sigma_nms):
    """Greedy single-stage IoU tracker.

    ``frames[i]`` lists ``(x1, y1, x2, y2, score, class)`` tuples of frame
    ``i + 1``.  Returns MOT result text: ``frame,id,l,t,w,h,conf,class,-1,-1``.
    """
    active = []
    done = []
    next_id = 1
    for f, raw in enumerate(frames, 1):
        dets = _ref_nms(raw, sigma_nms)
        free = list(range(len(dets)))
        survivors = []
        for tr in active:
            last = tr["boxes"][-1][1]
            best, best_iou = None, -1.0
            for k in free:
                if dets[k][5] != tr["cls"]:
                    continue
                o = plain_iou(last, dets[k])
                if o >= sigma_iou and o > best_iou:
                    best, best_iou = k, o
            if best is None:
                done.append(tr)
            else:
                free.remove(best)
                tr["boxes"].append((f, dets[best]))
                survivors.append(tr)
        for k in free:
            survivors.append({"id": next_id, "cls": dets[k][5], "boxes": [(f, dets[k])]})
            next_id += 1
        active = survivors
    done += active

    rows = []
    for tr in done:
        if len(tr["boxes"]) < t_min or max(d[4] for _, d in tr["boxes"]) <= sigma_h:
            continue
        for f, d in tr["boxes"]:
            rows.append((f, tr["id"], d))
    rows.sort(key=lambda r: (r[0], r[1]))

    def fx(v):
        s = "%.6f" % v
        return "0.000000" if s == "-0.000000" else s

    return "".join(
        f"{f},{tid},{fx(d[0])},{fx(d[1])},{fx(d[2] - d[0])},{fx(d[3] - d[1])},{fx(d[4])},{d[5]},-1,-1\n"
        for f, tid, d in rows
    )


# --- brute-force metric references ------------------------------------------
# tracks are dicts: {"id": int, "cls": int, "conf": float, "boxes": {frame: (x1, y1, x2, y2)}}

def _best_frame_matching(pairs_ok, g_ids, p_ids, cost):
    """Exhaustive max-cardinality, min-cost, lexicographic matching between id lists."""
    best = None
    n, m = len(g_ids), len(p_ids)

    def rec(i, used, chosen, total):
        nonlocal best
        if i == n:
            key = (-len(chosen), round(total, 9), sorted(chosen))
            if best is None or key < best:
                best = key
            return
        rec(i + 1, used, chosen, total)
        for j in range(m):
            if j not in used and pairs_ok[i][j]:
                rec(i + 1, used | {j}, chosen + [(i, j)], total + cost[i][j])

    rec(0, frozenset(), [], 0.0)
    return [(g_ids[i], p_ids[j]) for i, j in best[2]]


def brute_clear(gt, pred, gate=0.5):
    frames = sorted({f for t in gt + pred for f in t["boxes"]})
    n_gt = sum(len(t["boxes"]) for t in gt)
    last = {}
    hist = {t["id"]: [] for t in gt}
    fp = fn = ids = nmatch = 0
    ious = 0.0
    for f in frames:
        G = {t["id"]: t["boxes"][f] for t in gt if f in t["boxes"]}
        P = {t["id"]: t["boxes"][f] for t in pred if f in t["boxes"]}
        match = {}
        for g in sorted(G):
            p = last.get(g)
            if p in P and p not in match.values() and plain_iou(G[g], P[p]) >= gate:
                match[g] = p
        gl = [g for g in sorted(G) if g not in match]
        pl = [p for p in sorted(P) if p not in match.values()]
        ok = [[plain_iou(G[g], P[p]) >= gate for p in pl] for g in gl]
        cost = [[1.0 - plain_iou(G[g], P[p]) for p in pl] for g in gl]
        for g, p in _best_frame_matching(ok, gl, pl, cost):
            if g in last and last[g] != p:
                ids += 1
            match[g] = p
        for g, p in match.items():
            last[g] = p
            ious += plain_iou(G[g], P[p])
        nmatch += len(match)
        fn += len(G) - len(match)
        fp += len(P) - len(match)
        for g in G:
            hist[g].append(g in match)
    fm = mt = ml = 0
    for h in hist.values():
        s = "".join("1" if x else "0" for x in h)
        # each maximal run of misses that sits between two tracked frames
        fm += sum(1 for k in range(1, len(s)) if s[k] == "1" and s[k - 1] == "0" and "1" in s[:k])
        if h:
            r = sum(h) / len(h)
            mt += r > 0.8
            ml += r < 0.2
    return dict(mota=1 - (fn + fp + ids) / n_gt, motp=ious / nmatch if nmatch else 0.0,
                fp=fp, fn=fn, ids=ids, fm=fm, mt=mt, ml=ml)


def brute_idf1(gt, pred, gate=0.5):
    ng = sum(len(t["boxes"]) for t in gt)
    npd = sum(len(t["boxes"]) for t in pred)
    if ng == 0:
        return 1.0 if npd == 0 else 0.0
    tp = [[sum(1 for f in g["boxes"] if f in p["boxes"] and plain_iou(g["boxes"][f], p["boxes"][f]) >= gate)
           for p in pred] for g in gt]
    best = 0
    for k in range(min(len(gt), len(pred)) + 1):
        for gs in itertools.combinations(range(len(gt)), k):
            for ps in itertools.permutations(range(len(pred)), k):
                best = max(best, sum(tp[g][p] for g, p in zip(gs, ps)))
    return 2 * best / (ng + npd)


def brute_track_ap(gt, pred, thresholds=(0.25, 0.5, 0.75)):
    def tiou(a, b):
        frames = set(a["boxes"]) | set(b["boxes"])
        s = sum(plain_iou(a["boxes"][f], b["boxes"][f]) for f in frames if f in a["boxes"] and f in b["boxes"])
        return s / len(frames)

    classes = sorted({t["cls"] for t in gt})
    table = {}
    for c in classes:
        gs = [t for t in gt if t["cls"] == c]
        ps = sorted([t for t in pred if t["cls"] == c], key=lambda t: (-t["conf"], t["id"]))
        table[c] = {}
        for tau in thresholds:
            taken = set()
            hits = []
            for p in ps:
                cands = [(tiou(p, g), -k) for k, g in enumerate(gs) if k not in taken]
                if cands:
                    v, negk = max(cands)
                    if v > tau:
                        taken.add(-negk)
                        hits.append(True)
                        continue
                hits.append(False)
            prec, rec = [], []
            tp = 0
            for i, h in enumerate(hits, 1):
                tp += h
                prec.append(tp / i)
                rec.append(tp / len(gs))
            ap = 0.0
            for r in range(101):
                rr = r / 100
                ok = [p for p, q in zip(prec, rec) if q >= rr - 1e-12]
                ap += max(ok) if ok else 0.0
            table[c][tau] = ap / 101
    per_t = {tau: sum(table[c][tau] for c in classes) / len(classes) for tau in thresholds}
    return table, per_t, sum(per_t.values()) / len(per_t)
