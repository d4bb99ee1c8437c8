"""Data ingestion: raw CSV, covariance CSV, and exact-population samples."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .estimate import SampleMoments

_NA_TOKENS = ["", "NA"]


class DataError(ValueError):
    pass


def read_csv(path, delimiter=",") -> pd.DataFrame:
    """Read a header-first CSV of reals; empty cells and ``NA`` are missing."""
    try:
        df = pd.read_csv(
            path, sep=delimiter, na_values=_NA_TOKENS, keep_default_na=False,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: missing header row") from e
    return df


def complete_cases(df: pd.DataFrame, variables) -> tuple[pd.DataFrame, int]:
    """Subset to *variables*, coerce to numeric, drop incomplete rows
    listwise.  Returns (data, number of dropped rows)."""
    missing = [v for v in variables if v not in df.columns]
    if missing:
        raise DataError(f"columns not in data: {missing}")
    sub = df[list(variables)].copy()
    for col in sub.columns:
        coerced = pd.to_numeric(sub[col], errors="coerce")
        bad = coerced.isna() & sub[col].notna()
        if bad.any():
            raise DataError(
                f"non-numeric value {sub[col][bad].iloc[0]!r} in column {col!r}"
            )
        sub[col] = coerced
    n0 = len(sub)
    sub = sub.dropna()
    if len(sub) == 0:
        raise DataError("zero complete rows after listwise deletion")
    return sub, n0 - len(sub)


def sample_moments(dataset: pd.DataFrame, divisor="n-1") -> SampleMoments:
    """Column-mean-centered sample covariance of all columns."""
    X = dataset.to_numpy(dtype=float)
    N, P = X.shape
    if N < 2:
        raise DataError("need at least 2 rows")
    var = X.var(axis=0)
    if np.any(var == 0):
        bad = [dataset.columns[i] for i in np.flatnonzero(var == 0)]
        raise DataError(f"constant column(s): {bad}")
    Xc = X - X.mean(axis=0)
    denom = N - 1 if divisor == "n-1" else N
    S = Xc.T @ Xc / denom
    return SampleMoments(list(dataset.columns), 0.5 * (S + S.T), N, divisor)


def read_cov_csv(path, n, delimiter=",", divisor="n-1") -> SampleMoments:
    """Read a square covariance CSV: header row and matching first column."""
    df = pd.read_csv(path, sep=delimiter, index_col=0, encoding="utf-8")
    names = list(df.columns)
    if list(df.index) != names:
        raise DataError("covariance CSV: row labels do not match column labels")
    S = df.to_numpy(dtype=float)
    if not np.allclose(S, S.T, atol=1e-8):
        raise DataError("covariance CSV is not symmetric (tolerance 1e-8)")
    return SampleMoments(names, 0.5 * (S + S.T), n, divisor)


def exact_population_sample(Sigma, N, names=None, seed=0) -> pd.DataFrame:
    """Draw N rows whose sample covariance (divisor N-1) equals *Sigma*.

    Random full-rank data is centered, whitened by its own covariance
    factor, and colored by the factor of Sigma.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    P = Sigma.shape[0]
    if N <= P:
        raise DataError(f"need N > P (got N={N}, P={P})")
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(Sigma)
    X = rng.standard_normal((N, P))
    X -= X.mean(axis=0)
    S0 = X.T @ X / (N - 1)
    L0 = np.linalg.cholesky(S0)
    Y = np.linalg.solve(L0, X.T).T @ L.T
    if names is None:
        names = [f"y{i + 1}" for i in range(P)]
    return pd.DataFrame(Y, columns=list(names))
