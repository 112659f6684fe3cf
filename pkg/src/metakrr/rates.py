"""Theoretical regularization schedules and regime classification.

Pure arithmetic on the regularity triple (r, p, alpha): source smoothness,
covariance eigenvalue decay, and embedding index. Classifies a task budget
(n per task, N tasks) into the small-task / large-task / exponential regimes,
produces the matching pretraining lambda schedule, the pretraining error
exponent, the regression-optimal lambda for comparison, and the table of
conditions under which meta-learning reaches the parametric target rate.

Constants are dropped throughout: only orders in n and N are meaningful, and
the log-power mismatch between the small-task schedule (log^2) and the
large-task schedules (log^omega, any omega > 2) is inherent to the source
analysis and reported as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class RegularityParams:
    """Regularity triple: 0 <= r <= 1 and 0 <= p <= alpha <= 1."""

    r: float
    p: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r must be in [0, 1], got {self.r}")
        if not 0.0 <= self.p <= self.alpha <= 1.0:
            raise ValueError(
                f"need 0 <= p <= alpha <= 1, got p={self.p}, alpha={self.alpha}"
            )


@dataclass(frozen=True)
class RegimeResult:
    regime: str              # one of A, B1, B2, EXP
    lambda_pretrain: float
    rate_exponent: float     # pretraining error decays like axis^(-rate_exponent)
    rate_axis: str           # "nN" or "n"
    description: str
    finite_dim_form: str | None = None

    def to_dict(self) -> dict:
        out = {
            "regime": self.regime,
            "lambda_pretrain": self.lambda_pretrain,
            "rate_exponent": self.rate_exponent,
            "rate_axis": self.rate_axis,
            "description": self.description,
        }
        if self.finite_dim_form is not None:
            out["finite_dim_form"] = self.finite_dim_form
        return out


def _small_task_boundary_exponent(params: RegularityParams) -> float:
    """N stays in the small-task regime while N <= n**(this exponent)."""
    r, p, alpha = params.r, params.p, params.alpha
    if r <= 0.5:
        return math.inf if alpha == 0 else (2 * r + 1 + p) / alpha - 1
    return (2 * r + 1 + p) / (p + 1) - 1


def classify_regime(
    params: RegularityParams, n: int, N: int, omega: float = 2.5
) -> RegimeResult:
    """Regime label, pretraining lambda schedule, and error exponent.

    omega is the free log power of the large-task schedules; any omega > 2 is
    admissible.
    """
    if n < 2 or N < 2:
        raise ValueError(f"need n, N >= 2, got n={n}, N={N}")
    if omega <= 2:
        raise ValueError(f"omega must be > 2, got {omega}")
    r, p, alpha = params.r, params.p, params.alpha
    log_nn = math.log(n * N)
    finite_dim_form = "sqrt(k/(n*N)) * log(n*N)" if p == 0 else None

    if math.log(N) > n:
        return RegimeResult(
            regime="EXP",
            lambda_pretrain=n**-0.5,
            rate_exponent=r / 2.0,
            rate_axis="n",
            description=(
                "exponentially many tasks: lambda = n^(-1/2), pretraining error "
                f"~ n^(-{r / 2.0:g})"
            ),
            finite_dim_form=finite_dim_form,
        )

    boundary = _small_task_boundary_exponent(params)
    if math.log(N) <= boundary * math.log(n):
        lam = (log_nn**2 / (n * N)) ** (1.0 / (2 * r + 1 + p))
        expo = r / (2 * r + 1 + p)
        return RegimeResult(
            regime="A",
            lambda_pretrain=lam,
            rate_exponent=expo,
            rate_axis="nN",
            description=(
                "small number of tasks: lambda = (log^2(nN)/(nN))^(1/(2r+1+p)), "
                f"pretraining error ~ (nN)^(-{expo:g}) up to logs"
            ),
            finite_dim_form=finite_dim_form,
        )

    if r <= 0.5:
        lam = (log_nn**omega / n) ** (1.0 / alpha)
        expo = r / alpha
        regime, denom = "B1", "alpha"
    else:
        lam = (log_nn**omega / n) ** (1.0 / (p + 1))
        expo = r / (p + 1)
        regime, denom = "B2", "p+1"
    return RegimeResult(
        regime=regime,
        lambda_pretrain=lam,
        rate_exponent=expo,
        rate_axis="n",
        description=(
            f"large number of tasks: lambda = (log^omega(nN)/n)^(1/{denom}), "
            f"pretraining error ~ n^(-{expo:g}) up to logs"
        ),
        finite_dim_form=finite_dim_form,
    )


def krr_optimal_lambda(params: RegularityParams, n: int) -> float:
    """Regression-optimal per-task lambda: n^(-1/(2 min(r, 1/2) + 1 + p)).

    Pretraining schedules in the gain regimes sit strictly below this value:
    subspace estimation wants deliberately under-regularized task fits.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return float(n) ** (-1.0 / (2.0 * min(params.r, 0.5) + 1.0 + params.p))


@dataclass(frozen=True)
class GainRow:
    case: str                  # A-low, A-high, B1, B2
    gain_condition: str
    gain_condition_holds: bool
    n_range_exponents: tuple[float, float]   # N in [n^lo, n^hi]; hi=inf means o(e^n)
    n_range: tuple[float, float]             # evaluated at this n (capped at e^n)
    nonempty: bool
    lambda_formula: str
    satisfied: bool = field(default=False)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "gain_condition": self.gain_condition,
            "gain_condition_holds": self.gain_condition_holds,
            "n_range_exponents": list(self.n_range_exponents),
            "n_range": list(self.n_range),
            "nonempty": self.nonempty,
            "lambda_formula": self.lambda_formula,
            "satisfied": self.satisfied,
        }


def _pow_or_inf(n: int, exponent: float) -> float:
    if math.isinf(exponent):
        return math.inf
    try:
        return float(n) ** exponent
    except OverflowError:
        return math.inf


def _exp_or_inf(n: int) -> float:
    try:
        return math.exp(n)
    except OverflowError:
        return math.inf


def gain_conditions(params: RegularityParams, n: int) -> dict:
    """Table of regimes where meta-learning reaches the parametric rate.

    Each row reports its smoothness condition on r, the admissible N interval
    at this n, and the (log-free, as printed in the source table) lambda
    schedule. greatest_gain is True when some row is satisfiable.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    r, p, alpha = params.r, params.p, params.alpha
    lo_a = math.inf if r == 0 else (2 * r + 1 + p) / (2 * r) - 1
    hi_a_low = math.inf if alpha == 0 else (2 * r + 1 + p) / alpha - 1
    hi_a_high = (2 * r + 1 + p) / (p + 1) - 1

    def make_row(case, cond_str, cond_holds, lo_exp, hi_exp, lam_formula, hi_cap=None):
        lo_val = _pow_or_inf(n, lo_exp)
        hi_val = _exp_or_inf(n) if hi_cap == "exp" else _pow_or_inf(n, hi_exp)
        # An infinite lower endpoint means no finite N qualifies.
        nonempty = math.isfinite(lo_val) and lo_val <= hi_val
        return GainRow(
            case=case,
            gain_condition=cond_str,
            gain_condition_holds=cond_holds,
            n_range_exponents=(lo_exp, hi_exp),
            n_range=(lo_val, hi_val),
            nonempty=nonempty,
            lambda_formula=lam_formula,
            satisfied=cond_holds and nonempty,
        )

    rows = [
        make_row(
            "A-low",
            "alpha/2 <= r <= 1/2",
            alpha / 2 <= r <= 0.5,
            lo_a,
            hi_a_low,
            "(n*N)^(-1/(2r+1+p))",
        ),
        make_row(
            "A-high",
            "(p+1)/2 <= r <= 1",
            (p + 1) / 2 <= r <= 1.0,
            lo_a,
            hi_a_high,
            "(n*N)^(-1/(2r+1+p))",
        ),
        make_row(
            "B1",
            "alpha/2 <= r <= 1/2",
            alpha / 2 <= r <= 0.5,
            hi_a_low,
            math.inf,
            "n^(-r/alpha)",
            hi_cap="exp",
        ),
        make_row(
            "B2",
            "(p+1)/2 <= r <= 1",
            (p + 1) / 2 <= r <= 1.0,
            hi_a_high,
            math.inf,
            "n^(-r/(p+1))",
            hi_cap="exp",
        ),
    ]
    return {
        "greatest_gain": any(row.satisfied for row in rows),
        "case_rows": rows,
    }
