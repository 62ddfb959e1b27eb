"""Discrete ground truth: grid LPs solved by a dense two-phase primal simplex.

Marginals are discretized by quantile binning (equal-mass atoms at the
conditional means of their quantile bins), which keeps every mean exact.
All LPs are posed as ``max c.x`` over ``x >= 0`` with equality rows and
optional ``<=`` rows; the solver works on the standard form with slacks.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .problems import DCOT_KAPPA, DCOT_MARGINAL, MOT_MU1, MOT_MU2, Normal, Sampler1D

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9


# LP data ---------------------------------------------------------------------------

@dataclass
class DiscreteProblem:
    """max c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0."""
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    grid: np.ndarray | None = None
    names: dict = field(default_factory=dict)
    rank_report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        n = self.c.size
        self.A_eq = np.asarray(self.A_eq, dtype=np.float64).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=np.float64).ravel()
        if self.A_ub is None:
            self.A_ub, self.b_ub = np.zeros((0, n)), np.zeros(0)
        self.A_ub = np.asarray(self.A_ub, dtype=np.float64).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=np.float64).ravel()
        if self.A_eq.shape[0] != self.b_eq.size or self.A_ub.shape[0] != self.b_ub.size:
            raise ValueError("constraint matrix and right-hand side sizes differ")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.isfinite(arr).all():
                raise ValueError("LP data must be finite")
        self.reduce_rows()

    @property
    def n(self) -> int:
        return self.c.size

    def reduce_rows(self):
        """Drop linearly dependent equality rows (pivoted QR); inconsistent ones are kept."""
        m = self.A_eq.shape[0]
        if m == 0:
            self.rank_report = {"rows": 0, "rank": 0, "dropped": []}
            return
        _, r, piv = linalg.qr(self.A_eq.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = max(self.A_eq.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0) * 10
        rank = int((diag > tol).sum())
        keep = np.sort(piv[:rank])
        dropped = sorted(set(range(m)) - set(keep.tolist()))
        if dropped:
            # a dependent row is only redundant if its right-hand side is consistent
            coef, *_ = np.linalg.lstsq(self.A_eq[keep].T, self.A_eq[dropped].T, rcond=None)
            consistent = np.abs(coef.T @ self.b_eq[keep] - self.b_eq[dropped]) <= 1e-9
            bad = [d for d, ok in zip(dropped, consistent) if not ok]
            keep = np.sort(np.concatenate([keep, np.asarray(bad, dtype=int)])).astype(int)
            dropped = [d for d, ok in zip(dropped, consistent) if ok]
        self.rank_report = {"rows": m, "rank": rank, "dropped": dropped}
        self.A_eq, self.b_eq = self.A_eq[keep], self.b_eq[keep]


@dataclass
class SimplexResult:
    value: float
    x: np.ndarray
    status: str  # optimal | infeasible | unbounded
    pivots: int
    duals: np.ndarray | None = None
    basis: np.ndarray | None = None
    certificate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "pivots": self.pivots,
                "certificate": self.certificate}


# simplex ---------------------------------------------------------------------------

def _standard_form(lp: DiscreteProblem):
    """A x = b with b >= 0 over [x, slacks]; returns (A, b, c, slack column per row or -1)."""
    n, me, mu = lp.n, lp.A_eq.shape[0], lp.A_ub.shape[0]
    A = np.zeros((me + mu, n + mu))
    A[:me, :n] = lp.A_eq
    A[me:, :n] = lp.A_ub
    A[me:, n:] = np.eye(mu)
    b = np.concatenate([lp.b_eq, lp.b_ub])
    c = np.concatenate([lp.c, np.zeros(mu)])
    slack = np.full(me + mu, -1)
    slack[me:] = n + np.arange(mu)
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    slack[neg] = -1  # a negated slack column cannot start the basis
    return A, b, c, slack


class _Revised:
    """Revised primal simplex with an explicit basis inverse.

    Entering columns are priced by the largest reduced cost; after ``stall``
    consecutive degenerate pivots the solver switches to Bland's rule (lowest
    index entering and leaving), which cannot cycle, until progress resumes.
    """

    def __init__(self, A, b, basis, max_pivots, stall: int = 30):
        self.A, self.b = A, b
        self.basis = np.array(basis, dtype=int)
        self.Binv = np.linalg.inv(A[:, self.basis])
        self.xB = self.Binv @ b
        self.pivots = 0
        self.bland_pivots = 0
        self.max_pivots = max_pivots
        self.stall = stall

    def refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.xB = self.Binv @ self.b

    def run(self, c, allowed):
        """Maximize c.x over the current basis; ``allowed`` masks columns that may enter."""
        degenerate = 0
        while True:
            if self.pivots >= self.max_pivots:
                raise RuntimeError(f"simplex exceeded {self.max_pivots} pivots")
            y = c[self.basis] @ self.Binv
            red = c - y @ self.A
            red[self.basis] = 0.0
            red[~allowed] = 0.0
            bland = degenerate >= self.stall
            if bland:
                cand = np.flatnonzero(red > OPT_TOL)
                if cand.size == 0:
                    return "optimal"
                j = int(cand[0])
            else:
                j = int(np.argmax(red))
                if red[j] <= OPT_TOL:
                    return "optimal"
            col = self.Binv @ self.A[:, j]
            pos = col > PIVOT_TOL
            if not pos.any():
                return "unbounded"
            ratios = np.full(col.size, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / col[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
                self.bland_pivots += 1
            else:
                r = int(ties[np.argmax(col[ties])])  # largest pivot among ties
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(r, j, col)

    def pivot(self, r, j, col=None):
        if col is None:
            col = self.Binv @ self.A[:, j]
        piv = col[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(col, row)
        self.Binv[r] = row
        self.basis[r] = j
        self.pivots += 1
        if self.pivots % 50 == 0:
            self.refactor()
        else:
            self.xB = self.Binv @ self.b


def simplex_solve(lp: DiscreteProblem, warm_basis=None, max_pivots: int = 200_000) -> SimplexResult:
    """Two-phase primal simplex (largest-coefficient pricing, Bland's rule when stalled).

    ``warm_basis`` optionally lists structural columns forming a feasible basis for
    the equality rows (after row reduction); phase 1 is then skipped for them.
    """
    A, b, c, slack = _standard_form(lp)
    m, ntot = A.shape
    if m == 0:
        if np.any(c > 0):
            return SimplexResult(np.inf, np.zeros(lp.n), "unbounded", 0)
        return SimplexResult(0.0, np.zeros(lp.n), "optimal", 0, np.zeros(0))
    start = _warm_start(A, b, slack, warm_basis)
    if start is not None:
        solver = _Revised(A, b, start, max_pivots)
        n_art = 0
    else:
        # artificials only for rows without a usable slack
        need = np.flatnonzero(slack < 0)
        art = np.zeros((m, need.size))
        art[need, np.arange(need.size)] = 1.0
        A1 = np.hstack([A, art])
        basis = slack.copy()
        basis[need] = ntot + np.arange(need.size)
        solver = _Revised(A1, b, basis, max_pivots)
        n_art = need.size
        if n_art:
            c1 = np.zeros(ntot + n_art)
            c1[ntot:] = -1.0
            solver.run(c1, np.ones(ntot + n_art, dtype=bool))
            infeas = float(solver.xB[solver.basis >= ntot].sum())
            if infeas > 1e-8:
                return SimplexResult(np.nan, np.zeros(lp.n), "infeasible", solver.pivots,
                                     certificate={"phase1_residual": infeas})
            _drive_out_artificials(solver, ntot)
    c_full = np.concatenate([c, np.zeros(solver.A.shape[1] - ntot)])
    allowed = np.arange(solver.A.shape[1]) < ntot
    status = solver.run(c_full, allowed)
    if status == "unbounded":
        return SimplexResult(np.inf, np.zeros(lp.n), "unbounded", solver.pivots)
    solver.refactor()
    x_full = np.zeros(solver.A.shape[1])
    x_full[solver.basis] = np.maximum(solver.xB, 0.0)
    x = x_full[:ntot]
    y = c_full[solver.basis] @ solver.Binv
    res = SimplexResult(float(lp.c @ x[:lp.n]), x[:lp.n], "optimal", solver.pivots,
                        duals=y, basis=solver.basis.copy())
    res.certificate = certify(A, b, c, x, y)
    if not res.certificate["ok"]:
        log.warning("simplex certificate failed: %s", res.certificate)
    return res


def _warm_start(A, b, slack, warm_basis):
    if warm_basis is None:
        return None
    m = A.shape[0]
    basis = list(warm_basis)
    rows_without = [i for i in range(m) if slack[i] < 0]
    # slacks of inequality rows complete the basis
    basis += [int(slack[i]) for i in range(m) if slack[i] >= 0]
    if len(basis) != m or len(rows_without) != len(warm_basis):
        log.info("warm basis has %d columns for %d rows; ignoring it", len(warm_basis), m)
        return None
    B = A[:, basis]
    if np.linalg.matrix_rank(B) < m:
        log.info("warm basis is singular; ignoring it")
        return None
    xB = np.linalg.solve(B, b)
    if xB.min() < -1e-9:
        log.info("warm basis is infeasible (min %.3g); ignoring it", xB.min())
        return None
    return basis


def _drive_out_artificials(solver, ntot):
    """Pivot zero-level artificials out of the basis where a structural column allows it."""
    for r in range(len(solver.basis)):
        if solver.basis[r] < ntot:
            continue
        row = solver.Binv[r] @ solver.A[:, :ntot]
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        cand = cand[~np.isin(cand, solver.basis)]
        if cand.size:
            solver.pivot(r, int(cand[0]))
    solver.refactor()


def certify(A, b, c, x, y, tol: float = 1e-8) -> dict:
    """Independent optimality checks on the standard form: primal residual, reduced costs, gap."""
    scale = max(1.0, float(np.abs(b).max()))
    primal = float(np.abs(A @ x - b).max()) if b.size else 0.0
    red = c - y @ A
    dual_viol = float(max(0.0, red.max())) if red.size else 0.0
    gap = abs(float(c @ x - y @ b))
    return {"primal_residual": primal, "min_x": float(x.min()) if x.size else 0.0,
            "max_reduced_cost": dual_viol, "duality_gap": gap,
            "ok": bool(primal <= 1e-9 * scale and x.min(initial=0.0) >= -1e-12
                       and dual_viol <= tol and gap <= tol * max(1.0, abs(float(c @ x))))}


def enumerate_vertices(lp: DiscreteProblem) -> tuple[float, int]:
    """Best objective over all basic feasible solutions (equality rows only).

    Exhaustive and exponential; meant for tiny instances as an independent check.
    """
    A, b, c = lp.A_eq, lp.b_eq, lp.c
    if lp.A_ub.shape[0]:
        raise ValueError("vertex enumeration supports equality-constrained LPs only")
    m, n = A.shape
    best, count = -np.inf, 0
    combos = itertools.combinations(range(n), m)
    while True:
        chunk = np.array(list(itertools.islice(combos, 20000)), dtype=int)
        if chunk.size == 0:
            break
        B = A[:, chunk].transpose(1, 0, 2)  # (k, m, m)
        det = np.linalg.det(B)
        ok = np.abs(det) > 1e-10
        if not ok.any():
            continue
        xB = np.linalg.solve(B[ok], np.broadcast_to(b, (int(ok.sum()), m))[..., None])[..., 0]
        feas = (xB >= -1e-12).all(axis=1)
        if feas.any():
            vals = (c[chunk[ok][feas]] * xB[feas]).sum(axis=1)
            best = max(best, float(vals.max()))
            count += int(feas.sum())
    return best, count


# discretization -------------------------------------------------------------------

def quantile_atoms(law: Sampler1D, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n equal-mass atoms at the conditional means of the quantile bins."""
    if n < 1:
        raise ValueError("need at least one atom")
    edges = np.concatenate([[-np.inf], np.atleast_1d(law.ppf(np.arange(1, n) / n)), [np.inf]])
    atoms = np.array([law.partial_expectation(edges[k], edges[k + 1]) for k in range(n)]) * n
    return atoms.astype(float).ravel(), np.full(n, 1.0 / n)


def northwest_corner(a, b) -> list[int]:
    """Spanning-tree basic feasible solution for a transport polytope (flat indices)."""
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)
    m, n = a.size, b.size
    i = j = 0
    cells = []
    while True:
        q = min(a[i], b[j])
        cells.append(i * n + j)
        a[i] -= q
        b[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if (a[i] <= b[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return cells


def transport_rows(m: int, n: int, p: np.ndarray, q: np.ndarray, normalization: bool = True):
    """Equality rows for couplings on an m x n grid (row-major flattening)."""
    rows, rhs = [], []
    for i in range(m):
        r = np.zeros((m, n))
        r[i, :] = 1.0
        rows.append(r.ravel())
        rhs.append(p[i])
    for j in range(n):
        r = np.zeros((m, n))
        r[:, j] = 1.0
        rows.append(r.ravel())
        rhs.append(q[j])
    if normalization:
        rows.append(np.ones(m * n))
        rhs.append(1.0)
    return np.array(rows), np.array(rhs)


def _reward(f, x1, x2):
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    return np.asarray(f(np.stack([X1.ravel(), X2.ravel()], axis=1)), dtype=float)


def _ot_basis(lp, p, q):
    """Northwest-corner basis expressed for the reduced equality rows."""
    cells = northwest_corner(p, q)
    return cells if len(cells) == lp.A_eq.shape[0] else None


@dataclass
class OracleValue:
    value: float
    status: str
    pivots: int
    grid: tuple
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "status": self.status, "pivots": self.pivots,
                "grid": list(self.grid), **self.detail}


def discrete_ot(mu1: Sampler1D, mu2: Sampler1D, f, n1: int = 40, n2: int | None = None,
                warm: bool = True) -> OracleValue:
    """Two-marginal transport LP on quantile atoms; ``f`` maps (k, 2) arrays to rewards."""
    n2 = n2 or n1
    x1, p = quantile_atoms(mu1, n1)
    x2, q = quantile_atoms(mu2, n2)
    A, rhs = transport_rows(n1, n2, p, q)
    lp = DiscreteProblem(_reward(f, x1, x2), A, rhs)
    res = simplex_solve(lp, _ot_basis(lp, p, q) if warm else None)
    return OracleValue(res.value, res.status, res.pivots, (n1, n2),
                       {"certificate": res.certificate, "rank": lp.rank_report})


def call_prices_discrete(atoms, weights, strikes) -> np.ndarray:
    atoms, weights = np.asarray(atoms), np.asarray(weights)
    return np.array([np.dot(weights, np.maximum(atoms - k, 0.0)) for k in np.atleast_1d(strikes)])


def convex_order_check(x1, p, x2, q, tol: float = 1e-12) -> dict:
    """Equal means and call prices of law 1 below law 2 at every atom of either grid."""
    strikes = np.union1d(x1, x2)
    c1 = call_prices_discrete(x1, p, strikes)
    c2 = call_prices_discrete(x2, q, strikes)
    mean_gap = float(np.dot(p, x1) - np.dot(q, x2))
    worst = float((c1 - c2).max())
    k = float(strikes[int(np.argmax(c1 - c2))])
    return {"ok": bool(abs(mean_gap) <= 1e-10 and worst <= tol), "mean_gap": mean_gap,
            "max_call_excess": worst, "at_strike": k}


def discrete_mot(mu1: Sampler1D = MOT_MU1, mu2: Sampler1D = MOT_MU2, f=None, n1: int = 60,
                 n2: int | None = None) -> OracleValue:
    """Martingale transport LP: marginals plus sum_j nu_ij (x2_j - x1_i) = 0 for every i."""
    n2 = n2 or n1
    f = f or (lambda x: np.maximum(x[:, 1] - x[:, 0], 0.0))
    x1, p = quantile_atoms(mu1, n1)
    x2, q = quantile_atoms(mu2, n2)
    check = convex_order_check(x1, p, x2, q)
    if not check["ok"]:
        return OracleValue(np.nan, "infeasible", 0, (n1, n2), {"convex_order": check})
    A, rhs = transport_rows(n1, n2, p, q)
    mart = np.zeros((n1, n1 * n2))
    for i in range(n1):
        mart[i, i * n2:(i + 1) * n2] = x2 - x1[i]
    lp = DiscreteProblem(_reward(f, x1, x2), np.vstack([A, mart]), np.concatenate([rhs, np.zeros(n1)]))
    res = simplex_solve(lp)
    return OracleValue(res.value, res.status, res.pivots, (n1, n2),
                       {"certificate": res.certificate, "convex_order": check, "rank": lp.rank_report})


def dcot_rows(x1, x2, kappa: Sampler1D, bins: int, tol: float):
    """Paired rows keeping each equal-mass bin of x2 - x1 within ``tol`` of 1/bins."""
    edges = np.concatenate([[-np.inf], np.atleast_1d(kappa.ppf(np.arange(1, bins) / bins)), [np.inf]])
    diff = (x2[None, :] - x1[:, None]).ravel()
    which = np.searchsorted(edges, diff, side="right") - 1
    member = np.zeros((bins, diff.size))
    member[which, np.arange(diff.size)] = 1.0
    target = np.full(bins, 1.0 / bins)
    return np.vstack([member, -member]), np.concatenate([target + tol, -(target - tol)])


def discrete_dcot(n1: int = 40, n2: int | None = None, bins: int = 25, tol: float = 1e-3,
                  mu1: Sampler1D = DCOT_MARGINAL, mu2: Sampler1D = DCOT_MARGINAL,
                  kappa: Sampler1D = DCOT_KAPPA, f=None, with_kappa: bool = True) -> OracleValue:
    """Transport LP with the law of x2 - x1 matched bin by bin (within ``tol`` mass)."""
    n2 = n2 or n1
    f = f or (lambda x: np.maximum(x[:, 0] + x[:, 1], 0.0))
    x1, p = quantile_atoms(mu1, n1)
    x2, q = quantile_atoms(mu2, n2)
    A, rhs = transport_rows(n1, n2, p, q)
    A_ub = b_ub = None
    if with_kappa:
        A_ub, b_ub = dcot_rows(x1, x2, kappa, bins, tol)
    lp = DiscreteProblem(_reward(f, x1, x2), A, rhs, A_ub, b_ub)
    res = simplex_solve(lp)
    return OracleValue(res.value, res.status, res.pivots, (n1, n2),
                       {"bins": bins if with_kappa else 0, "tol": tol, "certificate": res.certificate})


def discrete_lipschitz_relaxation(mu1: Sampler1D, mu2: Sampler1D, f, L: float, n: int = 30,
                                  n_grid: int | None = None) -> OracleValue:
    """sup over nu on the grid of E_nu f - L (W1(nu_1, mu_1) + W1(nu_2, mu_2)) as one LP.

    nu lives on the product of the two atom grids; W1 on the line is the L1 norm of
    the CDF difference, written with one slack per grid gap and marginal.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    x1, p = quantile_atoms(mu1, n)
    x2, q = quantile_atoms(mu2, n_grid or n)
    n1, n2 = x1.size, x2.size
    nv = n1 * n2
    gaps = [np.diff(x1), np.diff(x2)]
    ns = (n1 - 1) + (n2 - 1)
    c = np.concatenate([_reward(f, x1, x2), -L * np.concatenate(gaps)])
    rows_ub, rhs_ub = [], []
    for axis, (w, gap) in enumerate(zip((p, q), gaps)):
        cum_target = np.cumsum(w)[:-1]
        off = nv + (0 if axis == 0 else n1 - 1)
        for k in range(gap.size):
            # F_nu(x_k) = mass of nu on grid points <= x_k along this axis
            mask = np.zeros((n1, n2))
            if axis == 0:
                mask[:k + 1, :] = 1.0
            else:
                mask[:, :k + 1] = 1.0
            for sign in (1.0, -1.0):
                row = np.zeros(nv + ns)
                row[:nv] = sign * mask.ravel()
                row[off + k] = -1.0
                rows_ub.append(row)
                rhs_ub.append(sign * cum_target[k])
    A_eq = np.concatenate([np.ones(nv), np.zeros(ns)])[None, :]
    lp = DiscreteProblem(c, A_eq, [1.0], np.array(rows_ub), np.array(rhs_ub))
    res = simplex_solve(lp)
    return OracleValue(res.value, res.status, res.pivots, (n1, n2),
                       {"L": L, "certificate": res.certificate})


# closed forms -------------------------------------------------------------------

def comonotone_value(mu1: Sampler1D, mu2: Sampler1D, f, n: int = 20000) -> float:
    """Midpoint quadrature of f(F1^-1(u), F2^-1(u)) over u in (0, 1)."""
    u = (np.arange(n) + 0.5) / n
    x = np.stack([np.ravel(mu1.ppf(u)), np.ravel(mu2.ppf(u))], axis=1)
    return float(np.mean(f(x)))


def gaussian_w2_squared(s1: float, s2: float, m1: float = 0.0, m2: float = 0.0) -> float:
    return (m1 - m2) ** 2 + (s1 - s2) ** 2


# command line glue ----------------------------------------------------------------

def _sweep(text: str) -> list[int]:
    a, b, s = (int(v) for v in text.split(":"))
    return list(range(a, b + 1, s))


def oracle_command(args) -> tuple[dict, str]:
    """Run the oracle selected by parsed CLI ``args``; returns (JSON-able result, status)."""
    from .runner import ConfigError

    call = lambda x: np.maximum(x[:, 0] + x[:, 1], 0.0)  # noqa: E731
    preset = args.preset
    grids = _sweep(args.grid_sweep) if args.grid_sweep else [args.grid]
    if preset == "ot-lipschitz":
        Ls = [float(v) for v in str(args.L).split(",")]
        base = discrete_ot(DCOT_MARGINAL, DCOT_MARGINAL, call, grids[0])
        vals = [discrete_lipschitz_relaxation(DCOT_MARGINAL, DCOT_MARGINAL, call, L, grids[0]) for L in Ls]
        status = "optimal" if all(v.status == "optimal" for v in vals + [base]) else "infeasible"
        return {"preset": preset, "grid": grids[0], "L": Ls, "values": [v.value for v in vals],
                "ot_value": base.value, "status": status}, status
    rows = []
    for g in grids:
        if preset == "mot":
            r = discrete_mot(n1=g)
        elif preset == "dcot":
            r = discrete_dcot(n1=g, bins=args.bins)
        elif preset == "ot":
            r = discrete_ot(DCOT_MARGINAL, DCOT_MARGINAL, call, g)
        elif preset == "w2":
            if args.dim != 1:
                raise ConfigError("the w2 oracle is one-dimensional; use the closed form for dim > 1")
            r = discrete_ot(Normal(0, 1), Normal(0, 2), lambda x: -(x[:, 0] - x[:, 1]) ** 2, g)
            r.detail["closed_form"] = -gaussian_w2_squared(1.0, 2.0)
        else:
            raise ConfigError(f"unknown oracle preset {preset!r}")
        row = r.to_dict()
        row.pop("certificate", None)
        rows.append(row)
    status = "optimal" if all(r["status"] == "optimal" for r in rows) else "infeasible"
    if len(rows) == 1:
        return {"preset": preset, **rows[0]}, status
    return {"preset": preset, "sweep": rows, "status": status}, status


__all__ = [
    "DiscreteProblem", "OracleValue", "SimplexResult", "call_prices_discrete", "certify",
    "comonotone_value", "convex_order_check", "discrete_dcot", "discrete_lipschitz_relaxation",
    "discrete_mot", "discrete_ot", "enumerate_vertices", "gaussian_w2_squared", "northwest_corner",
    "quantile_atoms", "simplex_solve", "transport_rows",
]
