"""Univariate and tensor-product B-spline / NURBS evaluation and refinement.

Conventions used throughout the package:

* knot vectors are open and normalized to the reference interval [0, 1];
* the span convention at x = 1 is the last non-empty span, so the right
  endpoint is evaluable;
* 0/0 terms arising in the Cox-de Boor recursion evaluate to 0;
* rational derivatives are obtained by the quotient rule on the weighted
  homogeneous form, so B-splines are just NURBS with unit weights;
* trivariate control nets are stored flat in lexicographic order with the
  first parametric index running fastest.

All classes are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RefinementError

__all__ = [
    "KnotVector",
    "BasisEvaluation",
    "NurbsCurve",
    "NurbsPatch",
    "find_span",
    "eval_basis",
    "eval_curve",
    "eval_patch",
    "knot_insert",
    "degree_elevate",
]


def _as_readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector on [0, 1] with its polynomial degree.

    The number of basis functions is ``n_basis = len(knots) - degree - 1``.
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=float)
        p = self.degree
        if p < 0:
            raise ValueError("degree must be non-negative")
        if kn.ndim != 1 or kn.size < 2 * (p + 1):
            raise ValueError("knot vector too short for degree %d" % p)
        if np.any(np.diff(kn) < 0):
            raise ValueError("knot vector must be non-decreasing")
        span = kn[-1] - kn[0]
        if span <= 0:
            raise ValueError("degenerate knot vector")
        if kn[0] != 0.0 or kn[-1] != 1.0:
            kn = (kn - kn[0]) / span
        if np.any(kn[: p + 1] != 0.0) or np.any(kn[-(p + 1):] != 1.0):
            raise ValueError("knot vector must be open (ends repeated degree+1 times)")
        if kn.size > 2 * (p + 1):
            interior = kn[p + 1 : -(p + 1)]
            if interior.size:
                _, counts = np.unique(interior, return_counts=True)
                if np.any(counts > p + 1):
                    raise ValueError("interior knot multiplicity exceeds degree+1")
        object.__setattr__(self, "knots", _as_readonly(kn))

    @property
    def n_basis(self):
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self):
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    @property
    def n_spans(self):
        return self.breakpoints.size - 1

    def span_starts(self):
        """Index i of each non-empty span [knots[i], knots[i+1])."""
        kn = self.knots
        return np.nonzero(kn[1:] > kn[:-1])[0]

    def greville(self):
        """Greville abscissae (knot averages), one per basis function."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        out = np.empty(self.n_basis)
        for i in range(self.n_basis):
            out[i] = self.knots[i + 1 : i + p + 1].mean()
        return out

    def reduce_degree_vector(self):
        """Knot vector of the derivative space: degree p-1, same breakpoints
        and interior multiplicities, boundary multiplicity reduced by one."""
        if self.degree < 1:
            raise ValueError("cannot reduce a degree-0 knot vector")
        return KnotVector(self.knots[1:-1].copy(), self.degree - 1)


@dataclass(frozen=True)
class BasisEvaluation:
    """Non-vanishing basis values (and derivatives) at one point.

    ``values[j]`` is B_{span-degree+j}; ``derivatives[k, j]`` is its k-th
    derivative, with row 0 equal to ``values``.
    """

    span_index: int
    values: np.ndarray
    derivatives: np.ndarray = field(repr=False)


def find_span(kv: KnotVector, x: float) -> int:
    """Locate the knot span containing x: the unique i with
    knots[i] <= x < knots[i+1], with x = 1 mapping to the last non-empty span."""
    kn, p, n = kv.knots, kv.degree, kv.n_basis
    if not (0.0 <= x <= 1.0):
        raise ValueError("parameter %r outside the reference interval [0, 1]" % (x,))
    if x >= kn[n]:
        i = n - 1
        while kn[i + 1] <= kn[i]:
            i -= 1
        return i
    return int(np.searchsorted(kn, x, side="right") - 1)


def _ders_basis(kn, p, span, x, nders):
    """Values and derivatives of the p+1 non-vanishing functions at x.

    Standard triangular-table algorithm for the Cox-de Boor recursion; the
    0/0 convention is implicit because vanishing denominators never get
    visited for valid spans.
    """
    ndu = np.empty((p + 1, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - kn[span + 1 - j]
        right[j] = kn[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nders + 1, p + 1))
    ders[0] = ndu[:, p]
    if nders == 0:
        return ders

    a = np.empty((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nders + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    fac = float(p)
    for k in range(1, nders + 1):
        ders[k] *= fac
        fac *= p - k
    return ders


def eval_basis(kv: KnotVector, x: float, max_deriv: int = 0) -> BasisEvaluation:
    """Evaluate the non-vanishing basis functions and derivatives at x.

    Derivative orders beyond the degree come back as zero rows (the
    derivative of a piecewise polynomial of degree p vanishes beyond order p).
    """
    span = find_span(kv, x)
    ders = _ders_basis(kv.knots, kv.degree, span, x, min(max_deriv, kv.degree))
    if max_deriv > kv.degree:
        pad = np.zeros((max_deriv - kv.degree, kv.degree + 1))
        ders = np.vstack([ders, pad])
    return BasisEvaluation(span, ders[0], ders)


def basis_table(kv: KnotVector, points, nders=1):
    """Tabulate basis values/derivatives at many points.

    Returns ``(spans, table)`` with ``table[k, m, j]`` the k-th derivative of
    B_{spans[m]-degree+j} at ``points[m]``.
    """
    points = np.asarray(points, dtype=float).ravel()
    p = kv.degree
    spans = np.empty(points.size, dtype=np.int64)
    table = np.empty((nders + 1, points.size, p + 1))
    for m, x in enumerate(points):
        spans[m] = find_span(kv, x)
        table[:, m, :] = _ders_basis(kv.knots, p, spans[m], x, nders)
    return spans, table


# ---------------------------------------------------------------------------
# Homogeneous-coordinate helpers. Control nets are handled as (n, k) arrays
# of weighted points (w*x, ..., w); all refinement algorithms act on them.
# ---------------------------------------------------------------------------


def _homogeneous(points, weights):
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float).reshape(-1, 1)
    return np.hstack([points * weights, weights])


def _dehomogenize(pw):
    w = pw[:, -1]
    return pw[:, :-1] / w[:, None], w.copy()


def _insert_knot_1d(kn, p, pw, x):
    """Single Boehm insertion of x into (kn, pw); returns (kn', pw')."""
    span = int(np.searchsorted(kn, x, side="right") - 1)
    new = np.empty((pw.shape[0] + 1, pw.shape[1]))
    new[: span - p + 1] = pw[: span - p + 1]
    new[span + 1 :] = pw[span:]
    for i in range(span - p + 1, span + 1):
        denom = kn[i + p] - kn[i]
        alpha = 0.0 if denom == 0.0 else (x - kn[i]) / denom
        new[i] = alpha * pw[i] + (1.0 - alpha) * pw[i - 1]
    return np.insert(kn, span + 1, x), new


def _elevate_degree_1d(kn, p, pw):
    """Raise the degree by one, keeping the geometry and increasing every
    knot multiplicity by one (The NURBS Book, degree elevation A5.9)."""
    t = 1
    dim = pw.shape[1]
    ph = p + t
    ph2 = ph // 2

    # coefficients for degree elevating the Bezier segments
    bezalfs = np.zeros((p + t + 1, p + 1))
    bezalfs[0, 0] = 1.0
    bezalfs[ph, p] = 1.0
    from math import comb

    for i in range(1, ph2 + 1):
        inv = 1.0 / comb(ph, i)
        mpi = min(p, i)
        for j in range(max(0, i - t), mpi + 1):
            bezalfs[i, j] = inv * comb(p, j) * comb(t, i - j)
    for i in range(ph2 + 1, ph):
        mpi = min(p, i)
        for j in range(max(0, i - t), mpi + 1):
            bezalfs[i, j] = bezalfs[ph - i, p - j]

    n = pw.shape[0] - 1
    m = n + p + 1
    # generous upper bound on output size: every distinct knot gains one copy
    s_distinct = np.unique(kn).size
    nh_max = n + 1 + s_distinct + 2
    Qw = np.zeros((nh_max + 10, dim))
    Uh = np.zeros(m + s_distinct * (t + 1) + 10)

    bpts = np.zeros((p + 1, dim))
    ebpts = np.zeros((p + t + 1, dim))
    nextbpts = np.zeros((p - 1 if p > 1 else 1, dim))
    alfs = np.zeros(max(p - 1, 1))

    mh = ph
    kind = ph + 1
    r = -1
    a = p
    b = p + 1
    cind = 1
    ua = kn[0]
    Qw[0] = pw[0]
    Uh[: ph + 1] = ua
    bpts[:] = pw[: p + 1]

    while b < m:
        i = b
        while b < m and kn[b] == kn[b + 1]:
            b += 1
        mul = b - i + 1
        mh += mul + t
        ub = kn[b]
        oldr = r
        r = p - mul
        lbz = (oldr + 2) // 2 if oldr > 0 else 1
        rbz = ph - (r + 1) // 2 if r > 0 else ph
        if r > 0:
            numer = ub - ua
            for k in range(p, mul, -1):
                alfs[k - mul - 1] = numer / (kn[a + k] - ua)
            for j in range(1, r + 1):
                save = r - j
                s = mul + j
                for k in range(p, s - 1, -1):
                    bpts[k] = alfs[k - s] * bpts[k] + (1.0 - alfs[k - s]) * bpts[k - 1]
                nextbpts[save] = bpts[p]
        for i2 in range(lbz, ph + 1):
            ebpts[i2] = 0.0
            mpi = min(p, i2)
            for j in range(max(0, i2 - t), mpi + 1):
                ebpts[i2] += bezalfs[i2, j] * bpts[j]
        if oldr > 1:
            first = kind - 2
            last = kind
            den = ub - ua
            bet = (ub - Uh[kind - 1]) / den
            for tr in range(1, oldr):
                i2 = first
                j = last
                kj = j - kind + 1
                while j - i2 > tr:
                    if i2 < cind:
                        alf = (ub - Uh[i2]) / (ua - Uh[i2])
                        Qw[i2] = alf * Qw[i2] + (1.0 - alf) * Qw[i2 - 1]
                    if j >= lbz:
                        if j - tr <= kind - ph + oldr:
                            gam = (ub - Uh[j - tr]) / den
                            ebpts[kj] = gam * ebpts[kj] + (1.0 - gam) * ebpts[kj + 1]
                        else:
                            ebpts[kj] = bet * ebpts[kj] + (1.0 - bet) * ebpts[kj + 1]
                    i2 += 1
                    j -= 1
                    kj -= 1
                first -= 1
                last += 1
        if a != p:
            for _ in range(ph - oldr):
                Uh[kind] = ua
                kind += 1
        for j in range(lbz, rbz + 1):
            Qw[cind] = ebpts[j]
            cind += 1
        if b < m:
            bpts[:r] = nextbpts[:r]
            bpts[r : p + 1] = pw[b - p + r : b + 1]
            a = b
            b += 1
            ua = ub
        else:
            for i2 in range(ph + 1):
                Uh[kind + i2] = ub
    nh = mh - ph - 1
    return Uh[: nh + ph + 2].copy(), Qw[: nh + 1].copy()


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NurbsCurve:
    """Rational curve: control points of any spatial dimension plus weights."""

    kv: KnotVector
    control_points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != self.kv.n_basis:
            raise ValueError("control point count does not match the knot vector")
        if w.size != pts.shape[0]:
            raise ValueError("one weight per control point required")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "control_points", _as_readonly(pts))
        object.__setattr__(self, "weights", _as_readonly(w))

    @property
    def dim(self):
        return self.control_points.shape[1]

    def eval(self, x, nders=0):
        """Point (and derivatives) at parameter x via the quotient rule."""
        p = self.kv.degree
        be = eval_basis(self.kv, float(x), min(nders, p))
        lo = be.span_index - p
        pw = _homogeneous(self.control_points[lo : lo + p + 1], self.weights[lo : lo + p + 1])
        A = be.derivatives @ pw  # (nders+1, dim+1) hom. value and derivatives
        if nders > p:
            A = np.vstack([A, np.zeros((nders - p, A.shape[1]))])
        out = np.empty((nders + 1, self.dim))
        from math import comb

        for k in range(nders + 1):
            v = A[k, :-1].copy()
            for i in range(1, k + 1):
                v -= comb(k, i) * A[i, -1] * out[k - i]
            out[k] = v / A[0, -1]
        return out[0] if nders == 0 else out


def eval_curve(curve: NurbsCurve, x):
    """Point on the curve at parameter x (vectorized over an array of x)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([curve.eval(t) for t in xs])
    return out[0] if np.isscalar(x) or np.asarray(x).ndim == 0 else out


# ---------------------------------------------------------------------------
# Trivariate patches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NurbsPatch:
    """Tensor-product NURBS volume mapping the unit cube into physical space.

    ``control_points`` is (n1*n2*n3, 3), lexicographic with i1 fastest;
    ``weights`` is the matching strictly positive weight array.
    """

    degrees: tuple
    knot_vectors: tuple
    control_points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        degrees = tuple(int(p) for p in self.degrees)
        kvs = tuple(self.knot_vectors)
        if len(degrees) != 3 or len(kvs) != 3:
            raise ValueError("a patch needs 3 degrees and 3 knot vectors")
        for p, kv in zip(degrees, kvs):
            if p != kv.degree:
                raise ValueError("degree does not match its knot vector")
        pts = np.asarray(self.control_points, dtype=float).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=float).ravel()
        n = self.shape_of(kvs)
        if pts.shape[0] != n[0] * n[1] * n[2] or w.size != pts.shape[0]:
            raise ValueError("control net size does not match the knot vectors")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "knot_vectors", kvs)
        object.__setattr__(self, "control_points", _as_readonly(pts))
        object.__setattr__(self, "weights", _as_readonly(w))

    @staticmethod
    def shape_of(kvs):
        return tuple(kv.n_basis for kv in kvs)

    @property
    def shape(self):
        return self.shape_of(self.knot_vectors)

    def hom_grid(self):
        """Homogeneous control net with axes (i1, i2, i3, comp)."""
        n1, n2, n3 = self.shape
        pw = _homogeneous(self.control_points, self.weights)
        return pw.reshape(n3, n2, n1, 4).transpose(2, 1, 0, 3)

    @classmethod
    def from_hom_grid(cls, degrees, kvs, grid):
        n1, n2, n3, _ = grid.shape
        flat = grid.transpose(2, 1, 0, 3).reshape(-1, 4)
        pts, w = _dehomogenize(flat)
        return cls(tuple(degrees), tuple(kvs), pts, w)

    def flat_index(self, i1, i2, i3):
        n1, n2, _ = self.shape
        return i1 + n1 * (i2 + n2 * i3)

    def eval(self, xhat, nders=1):
        """Geometry map and Jacobian at one reference point.

        Returns ``(point, jac)`` where ``jac[:, d]`` is the derivative of the
        map along reference direction d (or ``point`` alone for nders=0).
        """
        xhat = np.asarray(xhat, dtype=float).ravel()
        bes = [eval_basis(kv, xhat[d], min(1, nders)) for d, kv in enumerate(self.knot_vectors)]
        grid = self.hom_grid()
        p1, p2, p3 = self.degrees
        lo = [be.span_index - p for be, p in zip(bes, self.degrees)]
        block = grid[lo[0] : lo[0] + p1 + 1, lo[1] : lo[1] + p2 + 1, lo[2] : lo[2] + p3 + 1]

        def contract(d1, d2, d3):
            t = np.einsum("i,j,k,ijkc->c", bes[0].derivatives[d1], bes[1].derivatives[d2],
                          bes[2].derivatives[d3], block)
            return t

        A = contract(0, 0, 0)
        point = A[:3] / A[3]
        if nders == 0:
            return point
        jac = np.empty((3, 3))
        for d in range(3):
            Ad = contract(*(1 if e == d else 0 for e in range(3)))
            jac[:, d] = (Ad[:3] - Ad[3] * point) / A[3]
        return point, jac


def eval_patch(patch: NurbsPatch, xhat):
    """Map a reference point through the patch; returns (point, 3x3 Jacobian)."""
    return patch.eval(xhat, nders=1)


def _axis_apply(patch: NurbsPatch, direction: int, fn):
    """Apply a 1D homogeneous-net algorithm along one parametric direction."""
    grid = patch.hom_grid()
    moved = np.moveaxis(grid, direction, 0)
    n = moved.shape[0]
    flat = moved.reshape(n, -1)
    kv = patch.knot_vectors[direction]
    new_kn, new_flat = fn(kv.knots.copy(), kv.degree, flat)
    out_shape = (new_flat.shape[0],) + moved.shape[1:]
    new_grid = np.moveaxis(new_flat.reshape(out_shape), 0, direction)
    return new_kn, new_grid


def knot_insert(patch: NurbsPatch, direction: int, new_knot: float) -> NurbsPatch:
    """Insert one knot without changing the geometry map."""
    if not (0.0 < new_knot < 1.0):
        raise RefinementError("inserted knot must lie strictly inside (0, 1)")
    kv = patch.knot_vectors[direction]
    mult = int(np.sum(kv.knots == new_knot))
    if mult >= kv.degree + 1:
        raise RefinementError("knot multiplicity would exceed degree+1")
    new_kn, new_grid = _axis_apply(patch, direction,
                                   lambda kn, p, pw: _insert_knot_1d(kn, p, pw, new_knot))
    kvs = list(patch.knot_vectors)
    kvs[direction] = KnotVector(new_kn, kv.degree)
    return NurbsPatch.from_hom_grid(patch.degrees, kvs, new_grid)


def degree_elevate(patch: NurbsPatch, direction: int) -> NurbsPatch:
    """Raise the degree in one direction by one, geometry unchanged."""
    new_kn, new_grid = _axis_apply(patch, direction, _elevate_degree_1d)
    kvs = list(patch.knot_vectors)
    degrees = list(patch.degrees)
    degrees[direction] += 1
    kvs[direction] = KnotVector(new_kn, degrees[direction])
    return NurbsPatch.from_hom_grid(degrees, kvs, new_grid)


def refine_patch(patch: NurbsPatch, direction: int, knots) -> NurbsPatch:
    """Insert several knots (repeats allowed) in one direction."""
    out = patch
    for x in np.sort(np.asarray(knots, dtype=float).ravel()):
        out = knot_insert(out, direction, float(x))
    return out


def subdivide_patch(patch: NurbsPatch, levels=(1, 1, 1)) -> NurbsPatch:
    """Bisect every non-empty span ``levels[d]`` times in each direction."""
    out = patch
    for d in range(3):
        for _ in range(int(levels[d])):
            bp = out.knot_vectors[d].breakpoints
            mids = 0.5 * (bp[:-1] + bp[1:])
            out = refine_patch(out, d, mids)
    return out


def elevate_patch_to(patch: NurbsPatch, degrees) -> NurbsPatch:
    """Degree elevate (never lower) each direction to the requested degree."""
    out = patch
    for d in range(3):
        target = int(degrees[d])
        if target < out.degrees[d]:
            raise RefinementError(
                "cannot lower degree %d below the geometry degree %d"
                % (target, out.degrees[d]))
        while out.degrees[d] < target:
            out = degree_elevate(out, d)
    return out


def curve_insert_knot(curve: NurbsCurve, new_knot: float) -> NurbsCurve:
    """Boehm insertion for curves (used by profile handling)."""
    kv = curve.kv
    if not (0.0 < new_knot < 1.0):
        raise RefinementError("inserted knot must lie strictly inside (0, 1)")
    if int(np.sum(kv.knots == new_knot)) >= kv.degree + 1:
        raise RefinementError("knot multiplicity would exceed degree+1")
    pw = _homogeneous(curve.control_points, curve.weights)
    new_kn, new_pw = _insert_knot_1d(kv.knots.copy(), kv.degree, pw, new_knot)
    pts, w = _dehomogenize(new_pw)
    return NurbsCurve(KnotVector(new_kn, kv.degree), pts, w)


def curve_elevate(curve: NurbsCurve) -> NurbsCurve:
    pw = _homogeneous(curve.control_points, curve.weights)
    new_kn, new_pw = _elevate_degree_1d(curve.kv.knots.copy(), curve.kv.degree, pw)
    pts, w = _dehomogenize(new_pw)
    return NurbsCurve(KnotVector(new_kn, curve.kv.degree + 1), pts, w)
