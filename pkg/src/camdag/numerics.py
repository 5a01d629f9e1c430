"""Penalized regression splines for additive models.

Every predictor is expanded in a cubic B-spline basis whose columns are
centered over the fitting sample.  Because centered B-spline columns sum to
zero, the coefficient vector of each block is constrained to be orthogonal
to the all-ones vector; blocks are therefore solved in a reduced
``num_basis - 1`` dimensional coordinate system and mapped back.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats
from scipy.interpolate import BSpline

from .data import Dataset
from .errors import DegenerateColumn, InvalidData, SingularFit

DEGREE = 3
LAMBDA_GRID = np.logspace(-6, 4, 20)
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SplineBasis:
    """Centered cubic B-spline basis fitted to one sample column.

    ``knots`` are the distinct breakpoints (boundary knots included);
    the full knot vector repeats each boundary knot ``degree + 1`` times.
    """

    degree: int
    num_basis: int
    knots: np.ndarray
    centering_offsets: np.ndarray

    @property
    def knot_vector(self) -> np.ndarray:
        k = self.degree
        return np.r_[[self.knots[0]] * k, self.knots, [self.knots[-1]] * k]

    def raw(self, x) -> np.ndarray:
        """Uncentered basis values; rows sum to one inside the boundary knots."""
        x = np.clip(np.asarray(x, dtype=float), self.knots[0], self.knots[-1])
        return BSpline.design_matrix(x, self.knot_vector, self.degree, extrapolate=True).toarray()

    def evaluate(self, x) -> np.ndarray:
        return self.raw(x) - self.centering_offsets


def make_basis(x_column, num_basis: int = 10) -> SplineBasis:
    """Cubic B-spline basis with interior knots at empirical quantiles."""
    x = np.asarray(x_column, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidData("column contains NaN or Inf")
    if num_basis < DEGREE + 1:
        raise ValueError(f"num_basis must be >= {DEGREE + 1} for cubic splines")
    n_distinct = np.unique(x).size
    if n_distinct < num_basis or x.size < num_basis + 2:
        raise DegenerateColumn(
            f"column has {n_distinct} distinct values over n={x.size}; need {num_basis}"
        )
    n_interior = num_basis - DEGREE - 1
    lo, hi = x.min(), x.max()
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.quantile(x, probs)
    knots = np.r_[lo, interior, hi]
    if np.any(np.diff(knots) <= 0):
        # heavy ties: fall back to equally spaced breakpoints
        knots = np.linspace(lo, hi, n_interior + 2)
    basis = SplineBasis(DEGREE, num_basis, knots, np.zeros(num_basis))
    offsets = basis.raw(x).mean(axis=0)
    return SplineBasis(DEGREE, num_basis, knots, offsets)


def difference_penalty(num_basis: int, order: int = 2) -> np.ndarray:
    d = np.diff(np.eye(num_basis), n=order, axis=0)
    return d.T @ d


def sum_to_zero_map(num_basis: int) -> np.ndarray:
    """Orthonormal ``num_basis x (num_basis - 1)`` basis of {b : sum(b) = 0}."""
    return linalg.null_space(np.ones((1, num_basis)))


@dataclass
class AdditiveDesign:
    """Cached spline designs and cross-products for all columns of a dataset.

    With the Gram matrix of every centered, reduced spline block and its
    products with every centered data column precomputed, each additive fit
    of one column on a set of others costs only small dense solves.
    """

    data: Dataset
    num_basis: int
    bases: list
    blocks: list  # reduced n x (num_basis-1) design per column, None if degenerate
    zmap: np.ndarray
    penalty: np.ndarray  # reduced penalty, shared by all blocks
    gram: np.ndarray = field(repr=False)
    cross: np.ndarray = field(repr=False)  # gram-layout rows x p data columns
    col_ss: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, data: Dataset, num_basis: int = 10) -> "AdditiveDesign":
        zmap = sum_to_zero_map(num_basis)
        bases, blocks = [], []
        for k in range(data.p):
            try:
                b = make_basis(data.column(k), num_basis)
            except DegenerateColumn:
                bases.append(None)
                blocks.append(None)
                continue
            bases.append(b)
            blocks.append(b.evaluate(data.column(k)) @ zmap)
        q = num_basis - 1
        full = np.zeros((data.n, q * data.p))
        for k, blk in enumerate(blocks):
            if blk is not None:
                full[:, k * q:(k + 1) * q] = blk
        centered = data.values - data.values.mean(axis=0)
        penalty = zmap.T @ difference_penalty(num_basis) @ zmap
        return cls(
            data=data,
            num_basis=num_basis,
            bases=bases,
            blocks=blocks,
            zmap=zmap,
            penalty=penalty,
            gram=full.T @ full,
            cross=full.T @ centered,
            col_ss=np.einsum("ij,ij->j", centered, centered),
        )

    @property
    def q(self) -> int:
        return self.num_basis - 1

    def index(self, predictors) -> np.ndarray:
        q = self.q
        return np.concatenate([np.arange(k * q, (k + 1) * q) for k in predictors]).astype(int) \
            if len(predictors) else np.zeros(0, dtype=int)

    def check(self, predictors) -> None:
        for k in predictors:
            if self.blocks[k] is None:
                raise DegenerateColumn(f"column {k} cannot carry a spline basis")


@dataclass(frozen=True)
class AdditiveFit:
    """Result of a penalized additive least-squares fit.

    ``coef_blocks[i]`` holds the ``num_basis`` B-spline coefficients of
    ``predictors[i]``; ``sigma2_hat`` is the residual mean square (divisor n).
    """

    predictors: tuple
    coef_blocks: tuple
    intercept: float
    sigma2_hat: float
    smoothing: tuple
    edf: tuple
    n: int
    num_basis: int
    design: AdditiveDesign | None = field(default=None, repr=False, compare=False)
    target: int | None = field(default=None, repr=False)

    @property
    def rss(self) -> float:
        return self.sigma2_hat * self.n

    @property
    def residual_df(self) -> float:
        return self.n - sum(self.edf) - 1

    def component(self, k: int, x=None) -> np.ndarray:
        """Fitted function for predictor ``k`` at ``x`` (default: fitting sample)."""
        i = self.predictors.index(k)
        basis = self.design.bases[k]
        if x is None:
            x = self.design.data.column(k)
        return basis.evaluate(x) @ self.coef_blocks[i]

    def predict(self, data: Dataset | None = None) -> np.ndarray:
        data = data if data is not None else self.design.data
        out = np.full(data.n, self.intercept)
        for k in self.predictors:
            out += self.component(k, data.column(k))
        return out


@dataclass
class _System:
    """Normal equations of one regression in reduced coordinates."""

    gram: np.ndarray
    xty: np.ndarray
    yy: float
    n: int
    m: int
    q: int
    penalty: np.ndarray

    def penalty_matrix(self, lams) -> np.ndarray:
        return linalg.block_diag(*[lam * self.penalty for lam in lams]) if self.m else np.zeros((0, 0))

    def solve(self, lams):
        """Return (beta, rss, hat-trace matrix diagonal) or ``None`` if singular."""
        a = self.gram + self.penalty_matrix(lams)
        try:
            cf = linalg.cho_factor(a, lower=True, check_finite=False)
        except linalg.LinAlgError:
            return None
        diag = np.diag(cf[0]) ** 2
        if diag.size and diag.min() <= RANK_TOL * diag.max():
            return None
        beta = linalg.cho_solve(cf, self.xty, check_finite=False)
        if not np.any(lams):
            # least squares: rss = yy - |L^-1 X'y|^2, free of cancellation in beta
            w = linalg.solve_triangular(cf[0], self.xty, lower=True, check_finite=False)
            rss = self.yy - w @ w
        else:
            rss = self.yy - 2.0 * beta @ self.xty + beta @ self.gram @ beta
        infl = linalg.cho_solve(cf, self.gram, check_finite=False)
        if not (np.all(np.isfinite(beta)) and np.isfinite(rss)):
            return None
        return beta, max(rss, 0.0), np.diag(infl)

    def gcv(self, lams) -> float:
        sol = self.solve(lams)
        if sol is None:
            return np.inf
        _, rss, infl = sol
        resid_df = self.n - 1 - infl.sum()
        if resid_df <= 0:
            return np.inf
        return self.n * rss / resid_df**2


def _select_smoothing(system: _System, sweeps: int) -> np.ndarray:
    """GCV over the fixed grid: one common value, then blockwise sweeps."""
    m = system.m
    scores = [system.gcv(np.full(m, lam)) for lam in LAMBDA_GRID]
    best = int(np.argmin(scores))  # argmin returns the lowest index on ties
    if not np.isfinite(scores[best]):
        raise SingularFit("no smoothing value on the grid gives a solvable system")
    idx = np.full(m, best)
    current = scores[best]
    if m > 1:
        for _ in range(sweeps):
            changed = False
            for b in range(m):
                trial = []
                for g in range(len(LAMBDA_GRID)):
                    if g == idx[b]:
                        trial.append(current)
                        continue
                    cand = idx.copy()
                    cand[b] = g
                    trial.append(system.gcv(LAMBDA_GRID[cand]))
                g = int(np.argmin(trial))
                if trial[g] < current:
                    idx[b] = g
                    current = trial[g]
                    changed = True
            if not changed:
                break
    return LAMBDA_GRID[idx]


def _system_for(design: AdditiveDesign, y, predictors, target=None) -> _System:
    idx = design.index(predictors)
    gram = design.gram[np.ix_(idx, idx)]
    if target is not None:
        xty = design.cross[idx, target]
        yy = float(design.col_ss[target])
    else:
        yc = y - y.mean()
        x = np.hstack([design.blocks[k] for k in predictors]) if predictors else np.zeros((len(y), 0))
        xty = x.T @ yc
        yy = float(yc @ yc)
    return _System(gram, xty, yy, design.data.n, len(predictors), design.q, design.penalty)


def _check_y(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise InvalidData("response must be a finite vector")
    return y


def fit_additive(
    y,
    data: Dataset,
    predictors,
    num_basis: int = 10,
    *,
    design: AdditiveDesign | None = None,
    target: int | None = None,
    smoothing=None,
    penalized: bool = True,
    sweeps: int = 1,
) -> AdditiveFit:
    """Fit ``y`` as an intercept plus one penalized spline per predictor.

    Parameters
    ----------
    y : array, shape (n,)
        Response.  May be ``None`` when ``target`` names a data column.
    data : Dataset
    predictors : iterable of int
        Column indices; empty gives the intercept-only fit.
    num_basis : int
        B-spline basis size per predictor.
    design : AdditiveDesign, optional
        Precomputed cache for ``data``; built on demand.
    target : int, optional
        If ``y`` is column ``target`` of ``data``, the cached cross-products
        are used.
    smoothing : sequence of float, optional
        Fixed penalty weights; skips GCV.
    penalized : bool
        ``False`` gives the plain least-squares regression-spline fit (all
        penalty weights zero), whose residual variance can only shrink when
        predictors are added.
    sweeps : int
        Number of blockwise GCV refinement passes.
    """
    if design is None:
        design = AdditiveDesign.build(data, num_basis)
    if y is None:
        y = data.column(target)
    y = _check_y(y)
    if y.size != data.n:
        raise InvalidData(f"response has length {y.size}, data has n={data.n}")
    predictors = tuple(sorted(int(k) for k in predictors))
    if target is not None and target in predictors:
        raise ValueError(f"target {target} cannot be its own predictor")
    design.check(predictors)
    system = _system_for(design, y, predictors, target)
    m, q = len(predictors), design.q

    if m == 0:
        lams = np.zeros(0)
        beta, rss, infl = np.zeros(0), system.yy, np.zeros(0)
    else:
        if not penalized:
            lams = np.zeros(m)
        elif smoothing is not None:
            lams = np.asarray(smoothing, dtype=float)
        else:
            lams = _select_smoothing(system, sweeps)
        sol = system.solve(lams)
        if sol is None:
            raise SingularFit(f"penalized system singular for predictors {predictors}", node=target)
        beta, rss, infl = sol

    blocks = tuple(design.zmap @ beta[i * q:(i + 1) * q] for i in range(m))
    edf = tuple(float(np.clip(infl[i * q:(i + 1) * q].sum(), 0.0, num_basis)) for i in range(m))
    return AdditiveFit(
        predictors=predictors,
        coef_blocks=blocks,
        intercept=float(y.mean()),
        sigma2_hat=rss / data.n,
        smoothing=tuple(float(v) for v in lams),
        edf=edf,
        n=data.n,
        num_basis=num_basis,
        design=design,
        target=target,
    )


def term_significance(fit: AdditiveFit, data: Dataset, y, k: int) -> float:
    """Approximate F-test p-value for dropping predictor ``k`` from ``fit``.

    The reduced model keeps the smoothing weights of the remaining blocks.
    """
    if k not in fit.predictors:
        raise ValueError(f"{k} is not a predictor of this fit")
    design = fit.design if fit.design is not None and fit.design.data is data else AdditiveDesign.build(data, fit.num_basis)
    if y is None:
        y = data.column(fit.target)
    y = _check_y(y)
    i = fit.predictors.index(k)
    rest = tuple(v for v in fit.predictors if v != k)
    lams = tuple(lam for v, lam in zip(fit.predictors, fit.smoothing) if v != k)
    reduced = fit_additive(y, data, rest, fit.num_basis, design=design, target=fit.target, smoothing=lams)

    rss1, rss0 = fit.rss, reduced.rss
    df1 = fit.edf[i]
    df2 = fit.residual_df
    if df2 <= 0 or df1 <= 0:
        raise SingularFit(f"no residual degrees of freedom for testing {k}", node=fit.target)
    if rss1 <= 0:
        return 0.0 if rss0 > 0 else 1.0
    f_stat = max(rss0 - rss1, 0.0) / df1 / (rss1 / df2)
    return float(np.clip(stats.f.sf(f_stat, df1, df2), 0.0, 1.0))


# -- componentwise boosting ------------------------------------------------


@dataclass(frozen=True)
class BoostTrace:
    iterations: int
    selection_counts: dict
    step_length: float


def lambda_for_df(gram: np.ndarray, penalty: np.ndarray, df: float) -> float:
    """Penalty weight giving a smoother with ``df`` effective degrees of freedom."""
    # generalized eigenproblem penalty v = mu gram v; trace = sum 1/(1 + lam mu)
    mu = linalg.eigh(penalty, gram, eigvals_only=True)
    mu = np.clip(mu, 0.0, None)
    if df >= mu.size:
        return 0.0
    lo, hi = -12.0, 12.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(1.0 / (1.0 + 10.0**mid * mu)) > df:
            lo = mid
        else:
            hi = mid
    return float(10.0 ** (0.5 * (lo + hi)))


class BoostLearners:
    """Fixed-penalty univariate spline smoothers for every usable column."""

    def __init__(self, design: AdditiveDesign, df: float = 4.0):
        self.design = design
        self.maps = {}
        for k, blk in enumerate(design.blocks):
            if blk is None:
                continue
            g = blk.T @ blk
            lam = lambda_for_df(g, design.penalty, df)
            self.maps[k] = linalg.solve(g + lam * design.penalty, blk.T, assume_a="pos")

    def usable(self, candidates):
        out = []
        for k in candidates:
            if k in self.maps:
                out.append(k)
            else:
                warnings.warn(f"skipping degenerate boosting candidate {k}", stacklevel=3)
        return out


def boost_select(
    y,
    data: Dataset,
    candidates,
    iterations: int = 100,
    step: float = 0.1,
    *,
    learners: BoostLearners | None = None,
    num_basis: int = 10,
) -> BoostTrace:
    """Componentwise L2-boosting with penalized spline base learners.

    Each iteration fits every candidate to the current residual and moves
    the residual by ``step`` times the best (smallest RSS) fit.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if step <= 0:
        raise ValueError("step must be positive")
    candidates = sorted(int(k) for k in candidates)
    if not candidates:
        raise ValueError("at least one candidate is required")
    if learners is None:
        learners = BoostLearners(AdditiveDesign.build(data, num_basis))
    y = _check_y(y)
    counts = {k: 0 for k in candidates}
    usable = learners.usable(candidates)
    if not usable:
        return BoostTrace(0, counts, step)

    blocks = np.stack([learners.design.blocks[k] for k in usable])  # K x n x q
    maps = np.stack([learners.maps[k] for k in usable])  # K x q x n
    r = y - y.mean()
    for _ in range(iterations):
        coef = maps @ r  # K x q
        fitted = np.einsum("knq,kq->kn", blocks, coef)
        rss = ((r[None, :] - fitted) ** 2).sum(axis=1)
        best = int(np.argmin(rss))
        counts[usable[best]] += 1
        r = r - step * fitted[best]
    return BoostTrace(iterations, counts, step)
