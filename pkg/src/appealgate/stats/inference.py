"""Hypothesis tests and regression tables used by the experiment report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from appealgate.logistic import ConvergenceError, fit_logistic, information_matrix
from appealgate.stats.special import chi2_sf, normal_sf_two_sided, student_t_sf_two_sided


class DegenerateDataError(ValueError):
    """The data do not support the requested test."""


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Rows are groups, columns are (outcome, complement)."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"cell {name} must be a non-negative integer, got {v!r}")
        if self.n < 1:
            raise ValueError("table is empty")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "ContingencyTable2x2":
        (a, b), (c, d) = rows
        return cls(int(a), int(b), int(c), int(d))

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    def rows(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p: float
    n: int | None = None

    __test__ = False  # keep pytest from collecting this class


def chi2_yates(table: ContingencyTable2x2 | Sequence[Sequence[int]]) -> TestResult:
    """Pearson chi-squared with Yates' continuity correction, df = 1.

    Each cell contributes ``max(|O - E| - 0.5, 0)^2 / E``.
    """
    if not isinstance(table, ContingencyTable2x2):
        table = ContingencyTable2x2.from_rows(table)
    obs = table.rows()
    n = table.n
    row_tot = [sum(r) for r in obs]
    col_tot = [obs[0][j] + obs[1][j] for j in range(2)]
    if 0 in row_tot or 0 in col_tot:
        raise DegenerateDataError("degenerate table: a row or column total is zero")
    stat = 0.0
    for i in range(2):
        for j in range(2):
            expected = row_tot[i] * col_tot[j] / n
            dev = max(abs(obs[i][j] - expected) - 0.5, 0.0)
            stat += dev * dev / expected
    return TestResult(statistic=stat, df=1, p=chi2_sf(stat, 1), n=n)


def t_test_independent(sample_a, sample_b, *, equal_var: bool = True) -> TestResult:
    """Two-sided independent-samples t-test.

    Pooled-variance Student test by default; ``equal_var=False`` gives Welch's
    test with Satterthwaite degrees of freedom.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise DegenerateDataError("each sample needs at least two observations")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    if equal_var:
        df = na + nb - 2
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1)) if se > 0 else na + nb - 2
    if se == 0:
        if ma == mb:
            return TestResult(statistic=0.0, df=df, p=1.0, n=na + nb)
        raise DegenerateDataError("degenerate variance: both samples are constant")
    t = (ma - mb) / se
    return TestResult(statistic=t, df=df, p=student_t_sf_two_sided(t, df), n=na + nb)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class Coefficient:
    name: str
    estimate: float
    se: float
    z: float
    p: float

    @property
    def stars(self) -> str:
        return significance_stars(self.p)


@dataclass
class RegressionTable:
    coefficients: list[Coefficient]
    log_likelihood: float
    aic: float
    n: int
    iterations: int = 0
    dependent: str = "y"
    covariance: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, name: str) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)


def logit_inference(X, y, names: Sequence[str] | None = None, *, dependent: str = "y") -> RegressionTable:
    """Unpenalized logistic MLE with Wald inference.

    ``X`` holds the covariates without an intercept column; one is added.
    Standard errors come from the inverse observed information at the MLE.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n != y.size:
        raise ValueError("X and y have different numbers of rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary")
    if y.min() == y.max():
        raise DegenerateDataError("degenerate labels: only one class present")
    design = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(design) < p + 1:
        raise DegenerateDataError("design matrix is rank deficient")
    if names is None:
        names = [f"x{j}" for j in range(1, p + 1)] if p > 1 else ["x"]
    if len(names) != p:
        raise ValueError("need one name per covariate")
    fit = fit_logistic(X, y, 0.0, max_iter=200)
    info = information_matrix(X, fit.intercept, fit.coef)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise ConvergenceError(
            "nonconvergence: singular information matrix", iterations=fit.iterations,
            grad_norm=fit.grad_norm, max_abs_coef=float(np.max(np.abs(fit.coef))),
        ) from None
    estimates = np.concatenate([[fit.intercept], fit.coef])
    ses = np.sqrt(np.diag(cov))
    coefs = []
    for name, est, se in zip(["Intercept", *names], estimates, ses):
        z = est / se
        coefs.append(Coefficient(name, float(est), float(se), float(z), normal_sf_two_sided(float(z))))
    k = p + 1
    return RegressionTable(
        coefficients=coefs,
        log_likelihood=fit.log_likelihood,
        aic=2 * k - 2 * fit.log_likelihood,
        n=n,
        iterations=fit.iterations,
        dependent=dependent,
        covariance=cov,
    )


def odds_ratio(coefficient: float, delta: float = 1.0) -> float:
    """Multiplicative change in odds for a ``delta`` change in the covariate."""
    return math.exp(coefficient * delta)


def proportion_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    phat = successes / n
    z2n = z * z / n
    centre = (phat + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(phat * (1.0 - phat) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi
