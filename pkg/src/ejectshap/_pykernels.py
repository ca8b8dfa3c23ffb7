"""Pure-Python Shapley kernels. Same contract as the compiled ``_kernels``.

Every ``*_tree`` kernel *adds* one tree's attribution into ``out`` (length
n_features) and returns ``(base_value, full_value)`` for that tree.
``weights[k, m]`` is the Shapley weight for a coalition of size ``m`` in a
``k``-player game.
"""

MAX_PLAYERS = 30

BACKEND = "python"


def _product_game(A, R):
    """Utilities u[mask] = prod(A[j] if bit j set else R[j])."""
    u = [1.0]
    for a, r in zip(A, R):
        u = [v * r for v in u] + [v * a for v in u]
    return u


def _popcounts(k):
    pc = [0] * (1 << k)
    for mask in range(1, 1 << k):
        pc[mask] = pc[mask >> 1] + (mask & 1)
    return pc


def game_shapley(u, k, weights):
    """Shapley values of a k-player game given utilities indexed by bit mask."""
    if k > MAX_PLAYERS:
        raise ValueError(f"{k} players exceeds kernel limit {MAX_PLAYERS}")
    w = weights[k] if k else None
    pc = _popcounts(k)
    phi = [0.0] * k
    for j in range(k):
        bit = 1 << j
        acc = 0.0
        for mask in range(1 << k):
            if not mask & bit:
                acc += w[pc[mask]] * (u[mask | bit] - u[mask])
        phi[j] = acc
    return phi


def predict_tree(left, right, features, thresholds, values, x):
    j = 0
    while left[j] >= 0:
        j = left[j] if x[features[j]] <= thresholds[j] else right[j]
    return float(values[j])


def eject_tree(left, right, features, thresholds, values, x, weights, out):
    players = []
    step_player = []
    step_value = []
    j = 0
    while left[j] >= 0:
        f = features[j]
        if f in players:
            step_player.append(players.index(f))
        else:
            step_player.append(len(players))
            players.append(f)
        step_value.append(values[j])
        j = left[j] if x[f] <= thresholds[j] else right[j]
    leaf_value = float(values[j])
    k = len(players)
    u = []
    for mask in range(1 << k):
        val = leaf_value
        for p, v in zip(step_player, step_value):
            if not mask >> p & 1:
                val = v
                break
        u.append(val)
    phi = game_shapley(u, k, weights)
    for p, f in enumerate(players):
        out[f] += phi[p]
    return float(u[0]), leaf_value


def treeshap_tree(left, right, features, thresholds, values, cover, x, weights, out):
    pf, pA, pR = [], [], []
    totals = [0.0, 0.0]

    def leaf(j):
        v = values[j]
        u = _product_game(pA, pR)
        totals[0] += v * u[0]
        totals[1] += v * u[-1]
        phi = game_shapley(u, len(pf), weights)
        for p, f in enumerate(pf):
            out[f] += v * phi[p]

    def walk(j):
        if left[j] < 0:
            leaf(j)
            return
        f = features[j]
        goes_left = x[f] <= thresholds[j]
        for c, ind in ((left[j], 1.0 if goes_left else 0.0), (right[j], 0.0 if goes_left else 1.0)):
            ratio = cover[c] / cover[j]
            if f in pf:
                p = pf.index(f)
                a, r = pA[p], pR[p]
                pA[p] = a * ind
                pR[p] = r * ratio
                walk(c)
                pA[p], pR[p] = a, r
            else:
                pf.append(f)
                pA.append(ind)
                pR.append(ratio)
                walk(c)
                pf.pop()
                pA.pop()
                pR.pop()

    walk(0)
    return totals[0], totals[1]


def interventional_tree(left, right, features, thresholds, values, x, ref, weights, out):
    n_ref = len(ref)
    if n_ref == 0:
        raise ValueError("empty reference set")
    acc = [0.0] * len(out)
    pf, pX, pY = [], [], []
    base = 0.0

    def leaf(j):
        v = values[j]
        A = []
        R = []
        fs = []
        for f, a, r in zip(pf, pX, pY):
            if a != r:
                fs.append(f)
                A.append(a)
                R.append(r)
        u = _product_game(A, R)
        phi = game_shapley(u, len(fs), weights)
        for p, f in enumerate(fs):
            acc[f] += v * phi[p]
        return v * u[0]

    def walk(j, y):
        if left[j] < 0:
            return leaf(j)
        f = features[j]
        x_left = x[f] <= thresholds[j]
        y_left = y[f] <= thresholds[j]
        total = 0.0
        for c, xi, yi in ((left[j], x_left, y_left), (right[j], not x_left, not y_left)):
            if f in pf:
                p = pf.index(f)
                a, r = pX[p], pY[p]
                na, nr = (a if xi else 0), (r if yi else 0)
                if na or nr:
                    pX[p], pY[p] = na, nr
                    total += walk(c, y)
                    pX[p], pY[p] = a, r
            elif xi or yi:
                pf.append(f)
                pX.append(1 if xi else 0)
                pY.append(1 if yi else 0)
                total += walk(c, y)
                pf.pop()
                pX.pop()
                pY.pop()
        return total

    for y in ref:
        base += walk(0, y)
    for f in range(len(out)):
        out[f] += acc[f] / n_ref
    full = predict_tree(left, right, features, thresholds, values, x)
    return base / n_ref, full
