"""Analytic truncation sets for the post-clustering tests.

The inference perturbs the data along the tested mean directions while
freezing everything it conditions on. Requiring the perturbed matrix to
reproduce the observed clustering history (and, when applicable, the
observed pair selection) pins the statistic to a union of intervals.
With the variance known each requirement is a quadratic inequality in
the perturbation parameter psi; with the variance estimated in-sample
it takes the radical form

    l1*psi + l2*sqrt(psi) + l3*sqrt(psi*(psi+r*)) + l4*sqrt(psi+r*) + l5 <= 0,

solved exactly through a quartic in y = sqrt(psi). All inequalities are
intersected into one canonical IntervalUnion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    INF,
    ClusterPartition,
    DataMatrix,
    Interval,
    IntervalUnion,
    NotAvailable,
    interval_intersect,
)
from .kmeans import KMeansTrace, step_centroids
from .projection import ProjectionBundle, apply_P1, apply_PE
from .selection import SelectionRule, pair_center_diffs, select_pairs

# Candidate quartic roots are accepted with deliberately loose tolerances:
# spurious candidates only refine the sign partition, while a missed real
# root could corrupt it.
_IMAG_TOL = 1.0
_RESIDUAL_TOL = 1.0
_ROOT_COLLAPSE = 1e-30
# Gram differences of the unit-normalized path matrices are O(1) (times
# powers of r*), with cancellation noise around n*eps. Radical-form
# coefficients below this fraction of the vector's scale are arithmetic
# noise on an exact zero; left in, they flip the sign of g at enormous
# psi and corrupt the partition scan.
_COEFF_NOISE = 1e-11


@dataclass(frozen=True)
class QuadCoeffs:
    """The quadratic a*psi^2 + b*psi + c.

    A single squared distance along the known-variance path has a >= 0
    (it is a squared norm); differences of two such forms may have
    either sign.
    """

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class SqrtCoeffs:
    """The function l1*psi + l2*sqrt(psi) + l3*sqrt(psi)*sqrt(psi+r*)
    + l4*sqrt(psi+r*) + l5 appearing in the estimated-variance path."""

    l1: float
    l2: float
    l3: float
    l4: float
    l5: float
    r_star: float

    def __post_init__(self):
        if not self.r_star > 0:
            raise ValueError("r_star must be positive")

    def value(self, psi: float) -> float:
        rt = math.sqrt(psi + self.r_star)
        sq = math.sqrt(psi)
        return (
            self.l1 * psi
            + self.l2 * sq
            + self.l3 * sq * rt
            + self.l4 * rt
            + self.l5
        )


def _interval(lo: float, hi: float, lo_closed: bool = True, hi_closed: bool = True):
    if lo < 0.0:
        # 0 is then interior to the unclipped solution, so the clipped
        # endpoint is attained regardless of strictness.
        lo, lo_closed = 0.0, True
    if hi < lo or (hi == lo and not (lo_closed and hi_closed)):
        return None
    return Interval(lo, hi, lo_closed, hi_closed if hi < INF else False)


def solve_quad_leq(c: QuadCoeffs, strict: bool = False) -> IntervalUnion:
    """{psi >= 0 : a*psi^2 + b*psi + c <= 0} (or < 0 when strict).

    All degenerate cases are handled: a zero leading coefficient falls
    back to the linear or constant inequality, and a non-positive
    discriminant keeps or discards the whole half-line by the sign of a.
    """
    a, b, cc = c.a, c.b, c.c
    closed = not strict
    if a == 0.0:
        if b == 0.0:
            ok = cc < 0.0 or (cc == 0.0 and closed)
            return IntervalUnion.full() if ok else IntervalUnion.empty()
        root = -cc / b
        if b > 0.0:
            iv = _interval(0.0, root, True, closed)
            return IntervalUnion((iv,) if iv else ())
        iv = _interval(root, INF, closed, False)
        return IntervalUnion((iv,))
    disc = b * b - 4.0 * a * cc
    if disc <= 0.0:
        if a > 0.0:
            if disc == 0.0 and closed:
                root = -b / (2.0 * a)
                if root >= 0.0:
                    return IntervalUnion((Interval(root, root),))
            return IntervalUnion.empty()
        if disc == 0.0 and strict:
            root = -b / (2.0 * a)
            if root > 0.0:
                return IntervalUnion(
                    (Interval(0.0, root, True, False), Interval(root, INF, False, False))
                )
            if root == 0.0:
                return IntervalUnion((Interval(0.0, INF, False, False),))
        return IntervalUnion.full()
    # Two real roots; the classical formula cancels when b^2 >> 4ac, so
    # derive one root from the stable intermediate q and the other from
    # the product c/a = r1*r2.
    s = math.sqrt(disc)
    qq = -(b + math.copysign(s, b)) / 2.0 if b != 0.0 else s / 2.0
    r1 = qq / a
    r2 = cc / qq
    lo, hi = (r1, r2) if r1 <= r2 else (r2, r1)
    if a > 0.0:
        iv = _interval(lo, hi, closed, closed)
        return IntervalUnion((iv,) if iv else ())
    pieces = []
    left = _interval(0.0, lo, True, closed)
    if left:
        pieces.append(left)
    right = _interval(hi, INF, closed, False)
    if right:
        pieces.append(right)
    return IntervalUnion(tuple(pieces))


def solve_sqrt_leq(c: SqrtCoeffs) -> IntervalUnion:
    """{psi >= 0 : c.value(psi) <= 0} for the radical form.

    Substituting y = sqrt(psi) and squaring the balanced equation
    (l3*y + l4)*sqrt(y^2 + r*) = -(l1*y^2 + l2*y + l5) turns the
    boundary into a quartic in y. Its admissible roots, together with
    the real roots of each side alone, partition [0, inf); a midpoint
    sign scan then keeps the non-positive pieces, mapped back through
    psi = y^2.
    """
    l1, l2, l3, l4, l5, rs = c.l1, c.l2, c.l3, c.l4, c.l5, c.r_star
    if l1 == 0.0 and l2 == 0.0 and l3 == 0.0 and l4 == 0.0:
        return IntervalUnion.full() if l5 <= 0.0 else IntervalUnion.empty()

    def g_of_y(y: float) -> float:
        rt = math.sqrt(y * y + rs)
        return l1 * y * y + l2 * y + l3 * y * rt + l4 * rt + l5

    def f1(y: float) -> float:
        return (l3 * y + l4) * math.sqrt(y * y + rs)

    def f2(y: float) -> float:
        return -(l1 * y * y + l2 * y + l5)

    quartic = np.array(
        [
            l3 * l3 - l1 * l1,
            2.0 * (l3 * l4 - l1 * l2),
            l4 * l4 + l3 * l3 * rs - l2 * l2 - 2.0 * l1 * l5,
            2.0 * (l3 * l4 * rs - l2 * l5),
            l4 * l4 * rs - l5 * l5,
        ]
    )
    cands = [0.0]
    if np.any(quartic != 0.0):
        for z in np.roots(quartic):
            y = float(z.real)
            if abs(z.imag) <= _IMAG_TOL and y >= 0.0:
                # Squaring introduces sign-flipped impostors; keep only
                # roots where both sides genuinely meet.
                if abs(f1(y) - f2(y)) <= _RESIDUAL_TOL:
                    cands.append(y)
    # Roots of each side alone catch boundaries the squared equation
    # degenerates on (both sides vanishing identically).
    if l3 != 0.0:
        y = -l4 / l3
        if y >= 0.0:
            cands.append(y)
    if l1 != 0.0:
        disc = l2 * l2 - 4.0 * l1 * l5
        if disc >= 0.0:
            s = math.sqrt(disc)
            for y in ((-l2 - s) / (2.0 * l1), (-l2 + s) / (2.0 * l1)):
                if y >= 0.0:
                    cands.append(y)
    elif l2 != 0.0:
        y = -l5 / l2
        if y >= 0.0:
            cands.append(y)

    ys = sorted(cands)
    dedup = [ys[0]]
    for y in ys[1:]:
        if y - dedup[-1] > _ROOT_COLLAPSE:
            dedup.append(y)
    pieces = []
    for lo, hi in zip(dedup, dedup[1:]):
        if g_of_y(0.5 * (lo + hi)) <= 0.0:
            pieces.append(Interval(lo * lo, hi * hi))
    if g_of_y(dedup[-1] + 1.0) <= 0.0:
        pieces.append(Interval(dedup[-1] ** 2, INF))
    return IntervalUnion(tuple(pieces))


@dataclass(frozen=True)
class KnownPath:
    """The perturbation x(psi) = psi*D + E of the known-variance test:
    D carries the tested directions scaled to sigma per unit psi, E is
    the frozen orthogonal part. x(psi_obs) reproduces the data."""

    D: np.ndarray
    E: np.ndarray
    psi_obs: float

    def at(self, psi: float) -> np.ndarray:
        return psi * self.D + self.E


@dataclass(frozen=True)
class UnknownPath:
    """The perturbation of the estimated-variance test. A, B, C are the
    unit-normalized projections onto the tested directions, the
    within-cluster spread, and the remainder; total_sq is the combined
    squared norm split between A and B as psi varies."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    total_sq: float
    r_star: float
    psi_obs: float

    def at(self, psi: float) -> np.ndarray:
        scale = math.sqrt(self.total_sq)
        s1 = math.sqrt(psi / (psi + self.r_star))
        s2 = math.sqrt(self.r_star / (psi + self.r_star))
        return scale * (s1 * self.A + s2 * self.B + self.C)


def known_path(X: DataMatrix, bundle: ProjectionBundle, sigma: float) -> KnownPath:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    proj = apply_PE(bundle, X.values)
    nrm = float(np.linalg.norm(proj))
    if nrm == 0.0:
        raise NotAvailable("the data has no component along the tested directions")
    return KnownPath(D=sigma * proj / nrm, E=X.values - proj, psi_obs=nrm / sigma)


def unknown_path(
    X: DataMatrix, part: ClusterPartition, bundle: ProjectionBundle
) -> UnknownPath:
    proj = apply_PE(bundle, X.values)
    within = apply_P1(part, bundle.touched, X.values)
    npe = float(np.linalg.norm(proj))
    np1 = float(np.linalg.norm(within))
    if npe == 0.0:
        raise NotAvailable("the data has no component along the tested directions")
    if np1 == 0.0:
        raise NotAvailable("the clusters under test have no within-cluster spread")
    total_sq = npe * npe + np1 * np1
    rs = bundle.r_star
    return UnknownPath(
        A=proj / npe,
        B=within / np1,
        C=(X.values - proj - within) / math.sqrt(total_sq),
        total_sq=total_sq,
        r_star=rs,
        psi_obs=(npe * npe) / (np1 * np1) * rs,
    )


def _cross_gram(U: np.ndarray, W: np.ndarray, Ubar: np.ndarray, Wbar: np.ndarray):
    # entry (i, l) = <U_i - Ubar_l, W_i - Wbar_l>
    return (
        (U * W).sum(axis=1)[:, None]
        - U @ Wbar.T
        - W @ Ubar.T
        + (Ubar * Wbar).sum(axis=1)[None, :]
    )


def _competitor_diffs(mat_by_name: dict, curr: np.ndarray):
    """For each Gram matrix G (n x K), the differences
    G[i, curr_i] - G[i, l] flattened over the competitors l != curr_i."""
    n, K = next(iter(mat_by_name.values())).shape
    rows = np.arange(n)
    keep = np.ones((n, K), dtype=bool)
    keep[rows, curr] = False
    return {
        name: (G[rows, curr][:, None] - G)[keep] for name, G in mat_by_name.items()
    }


def _intersect_all(S: IntervalUnion, pieces) -> IntervalUnion:
    for piece in pieces:
        S = interval_intersect(S, piece)
        if S.is_empty:
            break
    return S


def known_sigma_truncation(
    X: DataMatrix, trace: KMeansTrace, bundle: ProjectionBundle, sigma: float
) -> IntervalUnion:
    """The set of psi for which x(psi) reproduces every assignment of
    every recorded iteration, given the variance.

    Step 0 compares distances to the initial center rows of x(psi);
    later steps compare distances to the centroids computed from the
    previous step's labels. Each comparison against a competitor
    cluster is one quadratic inequality; competitors equal to the
    assigned cluster are vacuous and skipped.
    """
    path = known_path(X, bundle, sigma)
    return _clustering_known(trace, path)


def _clustering_known(trace: KMeansTrace, path: KnownPath) -> IntervalUnion:
    D, E = path.D, path.E
    S = IntervalUnion.full()
    for j in range(trace.J + 1):
        Dbar = step_centroids(D, trace, j)
        Ebar = step_centroids(E, trace, j)
        curr = trace.assignments[j]
        grams = _competitor_diffs(
            {
                "a": _cross_gram(D, D, Dbar, Dbar),
                "b": _cross_gram(D, E, Dbar, Ebar),
                "c": _cross_gram(E, E, Ebar, Ebar),
            },
            curr,
        )
        S = _intersect_all(
            S,
            (
                solve_quad_leq(QuadCoeffs(a, 2.0 * b, c))
                for a, b, c in zip(grams["a"], grams["b"], grams["c"])
            ),
        )
        if S.is_empty:
            break
    return S


def selection_truncation_known(
    X: DataMatrix,
    trace: KMeansTrace,
    bundle: ProjectionBundle,
    sigma: float,
    rule: SelectionRule,
) -> IntervalUnion:
    """The set of psi for which the selection rule applied to x(psi)
    picks exactly the observed pairs.

    Rank rules pin every selected pair strictly ahead of every
    unselected one; threshold rules pin each pair to its own side of the
    threshold. Center differences are affine in psi, so each comparison
    is again one quadratic inequality.
    """
    if not rule.is_data_dependent:
        raise ValueError("selection truncation applies to data-dependent rules only")
    path = known_path(X, bundle, sigma)
    part = trace.final_partition()
    V = select_pairs(X, part, rule)
    pairs, dD = pair_center_diffs(path.D, part)
    _, dE = pair_center_diffs(path.E, part)
    # per-pair coefficients of ||x(psi)^T v||^2 = a*psi^2 + b*psi + c
    a = (dD**2).sum(axis=1)
    b = 2.0 * (dD * dE).sum(axis=1)
    cc = (dE**2).sum(axis=1)
    selected = np.array([p in V.pairs for p in pairs])
    return _intersect_all(
        IntervalUnion.full(), _selection_quads(rule, selected, a, b, cc)
    )


def _selection_quads(rule, selected, a, b, cc):
    sel = np.flatnonzero(selected)
    uns = np.flatnonzero(~selected)
    if rule.kind in ("top", "bottom"):
        for s in sel:
            for u in uns:
                if rule.kind == "top":
                    # unselected strictly smaller: q_u - q_s < 0
                    yield solve_quad_leq(
                        QuadCoeffs(a[u] - a[s], b[u] - b[s], cc[u] - cc[s]), strict=True
                    )
                else:
                    yield solve_quad_leq(
                        QuadCoeffs(a[s] - a[u], b[s] - b[u], cc[s] - cc[u]), strict=True
                    )
        return
    t2 = rule.threshold**2
    below = rule.kind == "below"
    for s in sel:
        if below:
            yield solve_quad_leq(QuadCoeffs(a[s], b[s], cc[s] - t2))
        else:
            yield solve_quad_leq(QuadCoeffs(-a[s], -b[s], t2 - cc[s]))
    for u in uns:
        if below:
            yield solve_quad_leq(QuadCoeffs(-a[u], -b[u], t2 - cc[u]), strict=True)
        else:
            yield solve_quad_leq(QuadCoeffs(a[u], b[u], cc[u] - t2), strict=True)


def _clean_lambda(vec: np.ndarray, rs: float) -> np.ndarray | None:
    """Zero noise-level radical coefficients; None for a vacuous vector."""
    scale = float(np.max(np.abs(vec)))
    if scale < 1e-13 * max(1.0, rs):
        return None
    out = vec.copy()
    out[np.abs(out) < _COEFF_NOISE * scale] = 0.0
    return out


def _lambda_diff_sets(A, B, C, trace, j, curr, rs):
    """SqrtCoeffs for every (point, competitor) inequality of step j.

    The radical form of a squared distance along the estimated-variance
    path, normalized by the combined squared norm and cleared of the
    psi + r* denominator, has coefficients built from the A, B, C parts
    of the difference vectors; inequalities compare assigned minus
    competitor forms.
    """
    Abar = step_centroids(A, trace, j)
    Bbar = step_centroids(B, trace, j)
    Cbar = step_centroids(C, trace, j)
    srs = math.sqrt(rs)
    d = _competitor_diffs(
        {
            "aa": _cross_gram(A, A, Abar, Abar),
            "bb": _cross_gram(B, B, Bbar, Bbar),
            "cc": _cross_gram(C, C, Cbar, Cbar),
            "ab": _cross_gram(A, B, Abar, Bbar),
            "ac": _cross_gram(A, C, Abar, Cbar),
            "bc": _cross_gram(B, C, Bbar, Cbar),
        },
        curr,
    )
    for aa, bb, cc, ab, ac, bc in zip(
        d["aa"], d["bb"], d["cc"], d["ab"], d["ac"], d["bc"]
    ):
        vec = _clean_lambda(
            np.array(
                [aa + cc, 2.0 * srs * ab, 2.0 * ac, 2.0 * srs * bc, rs * (bb + cc)]
            ),
            rs,
        )
        if vec is None:
            continue
        yield SqrtCoeffs(
            l1=vec[0], l2=vec[1], l3=vec[2], l4=vec[3], l5=vec[4], r_star=rs
        )


def unknown_sigma_truncation(
    X: DataMatrix,
    trace: KMeansTrace,
    part: ClusterPartition,
    bundle: ProjectionBundle,
) -> IntervalUnion:
    """The set of psi for which the estimated-variance perturbation
    reproduces every recorded assignment. Each comparison is one
    radical-form inequality solved by solve_sqrt_leq."""
    path = unknown_path(X, part, bundle)
    return _clustering_unknown(trace, path)


def _clustering_unknown(trace: KMeansTrace, path: UnknownPath) -> IntervalUnion:
    S = IntervalUnion.full()
    for j in range(trace.J + 1):
        coeffs = _lambda_diff_sets(
            path.A, path.B, path.C, trace, j, trace.assignments[j], path.r_star
        )
        S = _intersect_all(S, (solve_sqrt_leq(c) for c in coeffs))
        if S.is_empty:
            break
    return S


def selection_truncation_unknown(
    X: DataMatrix,
    trace: KMeansTrace,
    part: ClusterPartition,
    bundle: ProjectionBundle,
    rule: SelectionRule,
) -> IntervalUnion:
    """The set of psi for which the selection rule applied to the
    estimated-variance perturbation picks the observed pairs.

    Projected center differences have no within-cluster component, so
    each pair's squared norm already is a radical form; thresholds enter
    as the affine form gamma1*psi + gamma2 subtracted from it.
    """
    if not rule.is_data_dependent:
        raise ValueError("selection truncation applies to data-dependent rules only")
    path = unknown_path(X, part, bundle)
    V = select_pairs(X, part, rule)
    rs = path.r_star
    srs = math.sqrt(rs)
    pairs, dA = pair_center_diffs(path.A, part)
    _, dB = pair_center_diffs(path.B, part)
    _, dC = pair_center_diffs(path.C, part)
    aa = (dA**2).sum(axis=1)
    bb = (dB**2).sum(axis=1)
    cc = (dC**2).sum(axis=1)
    ab = (dA * dB).sum(axis=1)
    ac = (dA * dC).sum(axis=1)
    bc = (dB * dC).sum(axis=1)
    lam = np.column_stack(
        [aa + cc, 2.0 * srs * ab, 2.0 * ac, 2.0 * srs * bc, rs * (bb + cc)]
    )
    selected = np.array([p in V.pairs for p in pairs])
    sel = np.flatnonzero(selected)
    uns = np.flatnonzero(~selected)

    def solve(vec):
        cleaned = _clean_lambda(vec, rs)
        if cleaned is None:
            return IntervalUnion.full()
        return solve_sqrt_leq(
            SqrtCoeffs(
                l1=cleaned[0],
                l2=cleaned[1],
                l3=cleaned[2],
                l4=cleaned[3],
                l5=cleaned[4],
                r_star=rs,
            )
        )

    pieces = []
    if rule.kind in ("top", "bottom"):
        for s in sel:
            for u in uns:
                pieces.append(
                    solve(lam[u] - lam[s] if rule.kind == "top" else lam[s] - lam[u])
                )
    else:
        t2 = rule.threshold**2
        gamma = np.array([t2 / path.total_sq, 0.0, 0.0, 0.0, rs * t2 / path.total_sq])
        below = rule.kind == "below"
        for s in sel:
            pieces.append(solve(lam[s] - gamma if below else gamma - lam[s]))
        for u in uns:
            pieces.append(solve(gamma - lam[u] if below else lam[u] - gamma))
    return _intersect_all(IntervalUnion.full(), pieces)
