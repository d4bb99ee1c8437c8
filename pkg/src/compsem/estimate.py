"""Discrepancy minimization and standard errors.

The objective is the classical normal-theory ML discrepancy
F = ln|Sigma| + tr(S Sigma^-1) - ln|S| - P (GLS optional).  The gradient
is numerical (central differences); minimization uses BFGS with a
backtracking line search.  Points where Sigma is not positive definite, or
where the model matrices are singular, return a large barrier value so the
line search backtracks instead of aborting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matrices import ModelStructure, SingularModelError, assemble
from .ptable import ParameterTable, start_values

_BARRIER = 1e12


class MomentsError(ValueError):
    pass


@dataclass
class SampleMoments:
    names: list[str]
    S: np.ndarray
    N: int
    divisor: str = "n-1"

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        P = len(self.names)
        if self.S.shape != (P, P):
            raise MomentsError(f"covariance is {self.S.shape}, expected {(P, P)}")
        if not np.allclose(self.S, self.S.T, atol=1e-8):
            raise MomentsError("sample covariance is not symmetric")
        self.S = 0.5 * (self.S + self.S.T)
        if np.any(np.diag(self.S) <= 0):
            bad = [self.names[i] for i in np.flatnonzero(np.diag(self.S) <= 0)]
            raise MomentsError(f"non-positive variance for {bad}")
        if len(set(self.names)) != len(self.names):
            raise MomentsError("duplicate variable names")
        if self.N < 2:
            raise MomentsError("need at least 2 observations")

    def subset(self, names):
        pos = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise MomentsError(f"variables not in sample moments: {missing}")
        ix = [pos[n] for n in names]
        return SampleMoments(list(names), self.S[np.ix_(ix, ix)], self.N, self.divisor)


@dataclass
class FitOptions:
    estimator: str = "ml"  # "ml" or "gls"
    grad_tol: float = 1e-6
    f_rel_tol: float = 1e-10
    max_iter: int = 1000
    grad_step: float = 1e-6
    hess_step: float = 1e-4
    multistart: int = 0
    multistart_noise: float = 0.1
    seed: int = 0
    chisq_multiplier: str = "n-1"  # "n-1" or "n"

    @property
    def multiplier_value(self):
        return None  # resolved against N by callers

    def multiplier(self, N):
        return N - 1 if self.chisq_multiplier == "n-1" else N


@dataclass
class FitResult:
    table: ParameterTable
    theta_hat: np.ndarray
    F_min: float
    converged: bool
    iterations: int
    gradient_norm: float
    structure: ModelStructure
    moments: SampleMoments
    options: FitOptions
    Sigma_hat: np.ndarray
    bundle: dict
    se: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    n_evaluations: int = 0


def ml_discrepancy(S, Sigma):
    """Normal-theory ML fit function; >= 0, zero iff Sigma == S."""
    S = np.asarray(S, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    P = S.shape[0]
    try:
        c = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as e:
        raise SingularModelError("Sigma not positive definite") from e
    logdet_sigma = 2.0 * np.sum(np.log(np.diag(c)))
    x = np.linalg.solve(c, S)
    trace = np.sum(np.linalg.solve(c.T, x).diagonal())
    sign, logdet_s = np.linalg.slogdet(S)
    if sign <= 0:
        raise SingularModelError("sample covariance not positive definite")
    return float(logdet_sigma + trace - logdet_s - P)


def gls_discrepancy(S, Sigma):
    """Generalized least squares fit function 0.5 tr[(I - Sigma S^-1)^2]."""
    S = np.asarray(S, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    P = S.shape[0]
    try:
        R = np.eye(P) - np.linalg.solve(S.T, Sigma.T).T
    except np.linalg.LinAlgError as e:
        raise SingularModelError("singular sample covariance") from e
    return float(0.5 * np.trace(R @ R))


def _objective(structure, S, estimator):
    disc = ml_discrepancy if estimator == "ml" else gls_discrepancy

    def f(theta):
        try:
            Sigma, _ = assemble(structure, theta)
            return disc(S, Sigma)
        except (SingularModelError, ValueError):
            return _BARRIER

    return f


def numerical_gradient(f, x, step=1e-6):
    """Central-difference gradient with per-coordinate step
    h_i = max(step, step * |x_i|)."""
    g = np.zeros_like(x)
    for i in range(x.size):
        h = max(step, step * abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def numerical_hessian(f, x, step=1e-4):
    """Central-difference Hessian with scaled steps; symmetrized."""
    n = x.size
    h = np.array([step * max(1.0, abs(x[i])) for i in range(n)])
    H = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        for j in range(i, n):
            if i == j:
                xp = x.copy(); xp[i] += h[i]
                xm = x.copy(); xm[i] -= h[i]
                H[i, i] = (f(xp) - 2 * f0 + f(xm)) / h[i] ** 2
            else:
                xpp = x.copy(); xpp[i] += h[i]; xpp[j] += h[j]
                xpm = x.copy(); xpm[i] += h[i]; xpm[j] -= h[j]
                xmp = x.copy(); xmp[i] -= h[i]; xmp[j] += h[j]
                xmm = x.copy(); xmm[i] -= h[i]; xmm[j] -= h[j]
                H[i, j] = H[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (
                    4 * h[i] * h[j]
                )
    return H


def _minimize_bfgs(f, x0, options: FitOptions):
    """BFGS with backtracking (Armijo) line search and numerical gradient.

    Returns (x, fval, gradient, converged, iterations)."""
    x = x0.copy()
    fx = f(x)
    g = numerical_gradient(f, x, options.grad_step)
    n = x.size
    H = np.eye(n)  # inverse-Hessian approximation
    converged = n == 0
    it = 0
    for it in range(1, options.max_iter + 1):
        if np.max(np.abs(g)) <= options.grad_tol:
            converged = True
            break
        d = -H @ g
        if d @ g >= 0:  # update lost positive definiteness; restart
            H = np.eye(n)
            d = -g
        alpha = 1.0
        gd = g @ d
        f_new = None
        for _ in range(60):
            cand = f(x + alpha * d)
            if cand <= fx + 1e-4 * alpha * gd:
                f_new = cand
                break
            alpha *= 0.5
        if f_new is None:
            # no Armijo decrease; stationary up to central-difference noise
            converged = np.max(np.abs(g)) <= max(options.grad_tol, 1e-8)
            break
        x_new = x + alpha * d
        g_new = numerical_gradient(f, x_new, options.grad_step)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            I = np.eye(n)
            V = I - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        else:
            H = np.eye(n)
        small_change = abs(fx - f_new) <= options.f_rel_tol * max(1.0, abs(fx))
        x, fx, g = x_new, f_new, g_new
        if small_change and np.max(np.abs(g)) <= options.grad_tol:
            converged = True
            break
    return x, fx, g, converged, it


def fit(moments: SampleMoments, table: ParameterTable, options: FitOptions | None = None) -> FitResult:
    """Estimate the free parameters by minimizing the chosen discrepancy."""
    options = options or FitOptions()
    moments = moments.subset(table.variable_names)
    table = start_values(table, moments)
    structure = ModelStructure(table)
    f = _objective(structure, moments.S, options.estimator)
    theta0 = table.free_vector("start")

    starts = [theta0]
    if options.multistart > 0:
        rng = np.random.default_rng(options.seed)
        for _ in range(options.multistart):
            noise = 1.0 + options.multistart_noise * rng.standard_normal(theta0.size)
            starts.append(theta0 * noise)

    best = None
    for s0 in starts:
        res = _minimize_bfgs(f, s0, options)
        if best is None or res[1] < best[1]:
            best = res
    theta_hat, F_min, g, converged, iterations = best

    warnings = []
    table.set_free_values(theta_hat)
    Sigma_hat, bundle = assemble(structure, theta_hat if theta_hat.size else None)
    for val, k in zip(bundle["derived_psi"], structure.derived_psi):
        name = structure.constructs[k]
        for r in table.rows:
            if r.status == "derived" and r.lhs == name and r.is_variance:
                r.value = float(val)
        if val < 0:
            warnings.append(
                f"negative derived variance for {name!r} (improper solution)"
            )
    for r in table.rows:
        if r.is_variance and r.free_index is not None and r.value < 0:
            warnings.append(f"negative variance estimate for {r.lhs!r}")
    if not converged:
        warnings.append("optimizer did not converge")
    if F_min >= _BARRIER:
        warnings.append("no feasible point found (Sigma not positive definite)")

    se = None
    if theta_hat.size:
        H = numerical_hessian(f, theta_hat, options.hess_step)
        H = 0.5 * (H + H.T)
        eig = np.linalg.eigvalsh(H)
        if eig.min() > 0:
            cov = (2.0 / options.multiplier(moments.N)) * np.linalg.inv(H)
            se = np.sqrt(np.maximum(np.diag(cov), 0.0))
            for r in table.rows:
                if r.free_index is not None:
                    r.se = float(se[r.free_index])
        else:
            warnings.append("Hessian not positive definite; standard errors unavailable")

    return FitResult(
        table=table,
        theta_hat=theta_hat,
        F_min=max(F_min, 0.0) if F_min > -1e-10 else F_min,
        converged=converged,
        iterations=iterations,
        gradient_norm=float(np.max(np.abs(g))) if g.size else 0.0,
        structure=structure,
        moments=moments,
        options=options,
        Sigma_hat=Sigma_hat,
        bundle=bundle,
        se=se,
        warnings=warnings,
    )
