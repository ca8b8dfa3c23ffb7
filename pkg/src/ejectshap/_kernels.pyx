# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Shapley kernels. Contract mirrors ``_pykernels``."""

from libc.stdlib cimport malloc, free

MAX_PLAYERS = 30
BACKEND = "compiled"

cdef enum:
    KMAX = 30
    PATHMAX = 256


cdef int _depth(const Py_ssize_t[::1] left, const Py_ssize_t[::1] right) except -1:
    cdef Py_ssize_t n = left.shape[0]
    cdef Py_ssize_t* stack = <Py_ssize_t*> malloc(2 * n * sizeof(Py_ssize_t))
    cdef Py_ssize_t top = 0, j, d
    cdef int best = 0
    if stack == NULL:
        raise MemoryError()
    stack[0] = 0
    stack[1] = 0
    top = 1
    while top > 0:
        top -= 1
        j = stack[2 * top]
        d = stack[2 * top + 1]
        if left[j] < 0:
            if d > best:
                best = <int> d
        else:
            stack[2 * top] = left[j]
            stack[2 * top + 1] = d + 1
            stack[2 * top + 2] = right[j]
            stack[2 * top + 3] = d + 1
            top += 2
    free(stack)
    return best


cdef struct Work:
    double* u
    int* pc
    double* phi
    int cap


cdef int _work_init(Work* w, int k) except -1:
    if k > KMAX:
        raise ValueError(f"{k} players exceeds kernel limit {KMAX}")
    cdef Py_ssize_t size = (<Py_ssize_t> 1) << k
    cdef Py_ssize_t m
    w.u = <double*> malloc(size * sizeof(double))
    w.pc = <int*> malloc(size * sizeof(int))
    w.phi = <double*> malloc((k + 1) * sizeof(double))
    w.cap = k
    if w.u == NULL or w.pc == NULL or w.phi == NULL:
        raise MemoryError()
    w.pc[0] = 0
    for m in range(1, size):
        w.pc[m] = w.pc[m >> 1] + <int> (m & 1)
    return 0


cdef void _work_free(Work* w):
    free(w.u)
    free(w.pc)
    free(w.phi)


cdef inline void _product_game(double* u, const double* A, const double* R, int k) nogil:
    cdef Py_ssize_t j, m, half
    cdef double v
    u[0] = 1.0
    for j in range(k):
        half = (<Py_ssize_t> 1) << j
        for m in range(half):
            v = u[m]
            u[m + half] = v * A[j]
            u[m] = v * R[j]


cdef inline void _game_shapley(const double* u, int k, const double[:, :] weights,
                               const int* pc, double* phi) nogil:
    cdef Py_ssize_t j, m, bit, size = (<Py_ssize_t> 1) << k
    cdef double acc
    for j in range(k):
        bit = (<Py_ssize_t> 1) << j
        acc = 0.0
        for m in range(size):
            if not (m & bit):
                acc += weights[k, pc[m]] * (u[m | bit] - u[m])
        phi[j] = acc


def game_shapley(u, int k, const double[:, :] weights):
    cdef Work w
    cdef Py_ssize_t m
    _work_init(&w, k)
    try:
        for m in range((<Py_ssize_t> 1) << k):
            w.u[m] = u[m]
        _game_shapley(w.u, k, weights, w.pc, w.phi)
        return [w.phi[j] for j in range(k)]
    finally:
        _work_free(&w)


def predict_tree(const Py_ssize_t[::1] left, const Py_ssize_t[::1] right, const Py_ssize_t[::1] features,
                 const double[::1] thresholds, const double[::1] values, const double[::1] x):
    cdef Py_ssize_t j = 0
    while left[j] >= 0:
        if x[features[j]] <= thresholds[j]:
            j = left[j]
        else:
            j = right[j]
    return values[j]


def eject_tree(const Py_ssize_t[::1] left, const Py_ssize_t[::1] right, const Py_ssize_t[::1] features,
               const double[::1] thresholds, const double[::1] values, const double[::1] x,
               const double[:, :] weights, double[::1] out):
    cdef Py_ssize_t players[PATHMAX]
    cdef int step_player[PATHMAX]
    cdef double step_value[PATHMAX]
    cdef int k = 0, n_steps = 0, p, t
    cdef Py_ssize_t j = 0, f, m
    cdef double leaf_value, val
    cdef Work w
    while left[j] >= 0:
        if n_steps >= PATHMAX:
            raise ValueError("decision path too long")
        f = features[j]
        p = -1
        for t in range(k):
            if players[t] == f:
                p = t
                break
        if p < 0:
            p = k
            players[k] = f
            k += 1
        step_player[n_steps] = p
        step_value[n_steps] = values[j]
        n_steps += 1
        if x[f] <= thresholds[j]:
            j = left[j]
        else:
            j = right[j]
    leaf_value = values[j]
    _work_init(&w, k)
    try:
        for m in range((<Py_ssize_t> 1) << k):
            val = leaf_value
            for t in range(n_steps):
                if not (m >> step_player[t]) & 1:
                    val = step_value[t]
                    break
            w.u[m] = val
        _game_shapley(w.u, k, weights, w.pc, w.phi)
        for p in range(k):
            out[players[p]] += w.phi[p]
        return w.u[0], leaf_value
    finally:
        _work_free(&w)


cdef struct TSState:
    const Py_ssize_t* left
    const Py_ssize_t* right
    const Py_ssize_t* features
    const double* thresholds
    const double* values
    const double* cover
    const double* x
    double* out
    Py_ssize_t pf[PATHMAX]
    double pA[PATHMAX]
    double pR[PATHMAX]
    int np
    double base
    double full


cdef void _ts_walk(TSState* s, Work* w, const double[:, :] weights, Py_ssize_t j) nogil:
    cdef Py_ssize_t a, b, c, f
    cdef int p, t, side, k
    cdef double ind, ratio, oldA, oldR, v
    cdef bint goes_left
    cdef Py_ssize_t size
    if s.left[j] < 0:
        v = s.values[j]
        k = s.np
        _product_game(w.u, s.pA, s.pR, k)
        size = (<Py_ssize_t> 1) << k
        s.base += v * w.u[0]
        s.full += v * w.u[size - 1]
        _game_shapley(w.u, k, weights, w.pc, w.phi)
        for p in range(k):
            s.out[s.pf[p]] += v * w.phi[p]
        return
    f = s.features[j]
    goes_left = s.x[f] <= s.thresholds[j]
    for side in range(2):
        if side == 0:
            c = s.left[j]
            ind = 1.0 if goes_left else 0.0
        else:
            c = s.right[j]
            ind = 0.0 if goes_left else 1.0
        ratio = s.cover[c] / s.cover[j]
        p = -1
        for t in range(s.np):
            if s.pf[t] == f:
                p = t
                break
        if p >= 0:
            oldA = s.pA[p]
            oldR = s.pR[p]
            s.pA[p] = oldA * ind
            s.pR[p] = oldR * ratio
            _ts_walk(s, w, weights, c)
            s.pA[p] = oldA
            s.pR[p] = oldR
        else:
            p = s.np
            s.pf[p] = f
            s.pA[p] = ind
            s.pR[p] = ratio
            s.np += 1
            _ts_walk(s, w, weights, c)
            s.np -= 1


def treeshap_tree(const Py_ssize_t[::1] left, const Py_ssize_t[::1] right, const Py_ssize_t[::1] features,
                  const double[::1] thresholds, const double[::1] values, const double[::1] cover,
                  const double[::1] x, const double[:, :] weights, double[::1] out):
    cdef TSState s
    cdef Work w
    cdef int depth = _depth(left, right)
    if depth >= PATHMAX:
        raise ValueError("tree too deep")
    s.left = &left[0]
    s.right = &right[0]
    s.features = &features[0]
    s.thresholds = &thresholds[0]
    s.values = &values[0]
    s.cover = &cover[0]
    s.x = &x[0]
    s.out = &out[0]
    s.np = 0
    s.base = 0.0
    s.full = 0.0
    if depth > KMAX:
        raise ValueError(f"depth {depth} exceeds kernel limit {KMAX}")
    _work_init(&w, depth)
    try:
        _ts_walk(&s, &w, weights, 0)
        return s.base, s.full
    finally:
        _work_free(&w)


cdef struct IVState:
    const Py_ssize_t* left
    const Py_ssize_t* right
    const Py_ssize_t* features
    const double* thresholds
    const double* values
    const double* x
    const double* y
    double* acc
    Py_ssize_t pf[PATHMAX]
    double pX[PATHMAX]
    double pY[PATHMAX]
    int np
    Py_ssize_t df[PATHMAX]
    double dA[PATHMAX]
    double dR[PATHMAX]


cdef double _iv_walk(IVState* s, Work* w, const double[:, :] weights, Py_ssize_t j) nogil:
    cdef Py_ssize_t c, f
    cdef int p, t, side, k
    cdef double v, total, oldX, oldY, nX, nY
    cdef bint x_left, y_left, xi, yi
    if s.left[j] < 0:
        v = s.values[j]
        k = 0
        for t in range(s.np):
            if s.pX[t] != s.pY[t]:
                s.df[k] = s.pf[t]
                s.dA[k] = s.pX[t]
                s.dR[k] = s.pY[t]
                k += 1
        _product_game(w.u, s.dA, s.dR, k)
        _game_shapley(w.u, k, weights, w.pc, w.phi)
        for p in range(k):
            s.acc[s.df[p]] += v * w.phi[p]
        return v * w.u[0]
    f = s.features[j]
    x_left = s.x[f] <= s.thresholds[j]
    y_left = s.y[f] <= s.thresholds[j]
    total = 0.0
    for side in range(2):
        if side == 0:
            c = s.left[j]
            xi = x_left
            yi = y_left
        else:
            c = s.right[j]
            xi = not x_left
            yi = not y_left
        p = -1
        for t in range(s.np):
            if s.pf[t] == f:
                p = t
                break
        if p >= 0:
            oldX = s.pX[p]
            oldY = s.pY[p]
            nX = oldX if xi else 0.0
            nY = oldY if yi else 0.0
            if nX != 0.0 or nY != 0.0:
                s.pX[p] = nX
                s.pY[p] = nY
                total += _iv_walk(s, w, weights, c)
                s.pX[p] = oldX
                s.pY[p] = oldY
        elif xi or yi:
            p = s.np
            s.pf[p] = f
            s.pX[p] = 1.0 if xi else 0.0
            s.pY[p] = 1.0 if yi else 0.0
            s.np += 1
            total += _iv_walk(s, w, weights, c)
            s.np -= 1
    return total


def interventional_tree(const Py_ssize_t[::1] left, const Py_ssize_t[::1] right, const Py_ssize_t[::1] features,
                        const double[::1] thresholds, const double[::1] values, const double[::1] x,
                        const double[:, ::1] ref, const double[:, :] weights, double[::1] out):
    cdef Py_ssize_t n_ref = ref.shape[0], n_feat = out.shape[0], i, f
    cdef IVState s
    cdef Work w
    cdef double base = 0.0, full
    cdef int depth = _depth(left, right)
    if n_ref == 0:
        raise ValueError("empty reference set")
    if depth >= PATHMAX or depth > KMAX:
        raise ValueError(f"depth {depth} exceeds kernel limit {KMAX}")
    cdef double* acc = <double*> malloc(n_feat * sizeof(double))
    if acc == NULL:
        raise MemoryError()
    for f in range(n_feat):
        acc[f] = 0.0
    s.left = &left[0]
    s.right = &right[0]
    s.features = &features[0]
    s.thresholds = &thresholds[0]
    s.values = &values[0]
    s.x = &x[0]
    s.acc = acc
    _work_init(&w, depth)
    try:
        for i in range(n_ref):
            s.y = &ref[i, 0]
            s.np = 0
            base += _iv_walk(&s, &w, weights, 0)
        for f in range(n_feat):
            out[f] += acc[f] / n_ref
        full = predict_tree(left, right, features, thresholds, values, x)
        return base / n_ref, full
    finally:
        _work_free(&w)
        free(acc)
