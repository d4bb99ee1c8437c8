"""Overall fit statistics and the standardized solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .ptable import (
    ROLE_BETA,
    ROLE_LOADING,
    ROLE_PSI,
    ROLE_T,
    ROLE_THETA,
    ROLE_WEIGHT,
)


@dataclass
class FitStatistics:
    chisq: float
    df: int
    pvalue: float | None
    srmr: float
    rmsea: float
    aic: float
    loglik: float
    N: int

    def to_dict(self):
        return {
            "chisq": self.chisq,
            "df": self.df,
            "pvalue": self.pvalue,
            "srmr": self.srmr,
            "rmsea": self.rmsea,
            "aic": self.aic,
            "loglik": self.loglik,
            "n_obs": self.N,
        }


def srmr(S, Sigma):
    """Root mean squared correlation-metric residual over the non-redundant
    cells, diagonal included."""
    S = np.asarray(S, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    ds = np.sqrt(np.diag(S))
    dm = np.sqrt(np.diag(Sigma))
    R = S / np.outer(ds, ds) - Sigma / np.outer(dm, dm)
    iu = np.triu_indices(S.shape[0])
    return float(np.sqrt(np.mean(R[iu] ** 2)))


def fit_statistics(fitresult, df: int) -> FitStatistics:
    """Chi-square test and descriptive fit indices for a converged fit."""
    moments = fitresult.moments
    options = fitresult.options
    mult = options.multiplier(moments.N)
    S = moments.S
    Sigma = fitresult.Sigma_hat
    P = S.shape[0]
    chisq = mult * fitresult.F_min
    pvalue = float(stats.chi2.sf(chisq, df)) if df > 0 else None
    rmsea = 0.0 if df == 0 else float(np.sqrt(max(chisq - df, 0.0) / (df * mult)))
    sign, logdet = np.linalg.slogdet(Sigma)
    trace = float(np.trace(np.linalg.solve(Sigma, S)))
    loglik = -(mult / 2.0) * (logdet + trace) - (mult * P / 2.0) * np.log(2 * np.pi)
    k = fitresult.table.n_params
    aic = -2.0 * loglik + 2.0 * k
    return FitStatistics(
        chisq=float(chisq),
        df=df,
        pvalue=pvalue,
        srmr=srmr(S, Sigma),
        rmsea=rmsea,
        aic=float(aic),
        loglik=float(loglik),
        N=moments.N,
    )


def standardize(fitresult):
    """Standardized parameter table: every construct and indicator rescaled
    to unit variance.  Returns a table copy with standardized values (and no
    standard errors)."""
    table = fitresult.table.copy()
    structure = fitresult.structure
    bundle = fitresult.bundle
    V = bundle["V_eta"]
    Sigma = fitresult.Sigma_hat
    cix = structure.construct_index
    vix = {n: i for i, n in enumerate(structure.names)}
    sd_eta = np.sqrt(np.diag(V))
    sd_y = np.sqrt(np.diag(Sigma))
    comp_var = (
        np.diag(bundle["Ct"]) if structure.Mc else np.zeros(0)
    )
    problems = []
    for r in table.rows:
        r.se = None
        try:
            if r.role == ROLE_LOADING:
                r.value = r.value * sd_eta[cix[r.lhs]] / sd_y[vix[r.rhs]]
            elif r.role == ROLE_WEIGHT:
                v = comp_var[cix[r.lhs] - structure.Ml]
                r.value = r.value * sd_y[vix[r.rhs]] / np.sqrt(v)
            elif r.role == ROLE_BETA:
                r.value = r.value * sd_eta[cix[r.rhs]] / sd_eta[cix[r.lhs]]
            elif r.role == ROLE_PSI and not r.is_variance:
                r.value = r.value / (sd_eta[cix[r.lhs]] * sd_eta[cix[r.rhs]])
            elif r.role == ROLE_PSI:
                r.value = r.value / V[cix[r.lhs], cix[r.lhs]]
            elif r.role == ROLE_THETA:
                r.value = r.value / (sd_y[vix[r.lhs]] * sd_y[vix[r.rhs]])
            elif r.role == ROLE_T:
                r.value = r.value / (sd_y[vix[r.lhs]] * sd_y[vix[r.rhs]])
        except (ZeroDivisionError, FloatingPointError):
            problems.append(r.id)
    return table
