"""From-scratch statistical inference for the experiment report."""

from appealgate.stats.inference import (
    Coefficient,
    ContingencyTable2x2,
    DegenerateDataError,
    RegressionTable,
    TestResult,
    chi2_yates,
    logit_inference,
    odds_ratio,
    proportion_ci,
    significance_stars,
    t_test_independent,
)
from appealgate.stats.special import betainc, erfc, gammainc, gammaincc

__all__ = [
    "Coefficient",
    "ContingencyTable2x2",
    "DegenerateDataError",
    "RegressionTable",
    "TestResult",
    "betainc",
    "chi2_yates",
    "erfc",
    "gammainc",
    "gammaincc",
    "logit_inference",
    "odds_ratio",
    "proportion_ci",
    "significance_stars",
    "t_test_independent",
]
