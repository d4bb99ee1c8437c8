"""Mapping from the free-parameter vector to model matrices and the
model-implied covariance of the indicators.

Constructs are ordered latent variables first (covariates included as
single-indicator latent variables), composites last, matching the block
structure of the joint loading matrix.  Composite loadings are never
parameters: they are recomputed from (T, W) on every evaluation, and the
variances of composite constructs (or of their structural errors) are
derived so that the structural model reproduces diag(W'TW).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ptable import (
    DERIVED,
    ROLE_BETA,
    ROLE_LOADING,
    ROLE_PSI,
    ROLE_T,
    ROLE_THETA,
    ROLE_WEIGHT,
    ParameterTable,
)

_SINGULAR_RTOL = 1e-12


class SingularModelError(ValueError):
    """A required matrix factorization failed (singular system)."""


def _solve_spd(A, B):
    """Solve A X = B for symmetric positive definite A via Cholesky."""
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as e:
        raise SingularModelError("matrix not positive definite") from e
    y = np.linalg.solve(c, B)
    return np.linalg.solve(c.T, y)


def _solve_square(A, B, what):
    d = np.abs(A).max()
    if d == 0 or np.linalg.cond(A) > 1.0 / _SINGULAR_RTOL:
        raise SingularModelError(f"singular matrix: {what}")
    return np.linalg.solve(A, B)


def composite_loadings(T, W):
    """Composite loadings TW(W'TW)^-1; OLS coefficients of each indicator
    on its composite."""
    T = np.asarray(T, dtype=float)
    W = np.asarray(W, dtype=float)
    Ct = W.T @ T @ W
    try:
        return _solve_spd(Ct.T, (T @ W).T).T
    except SingularModelError as e:
        raise SingularModelError(
            "degenerate composite: W'TW is singular (zero-variance combination)"
        ) from e


def structural_covariance(B, Psi):
    """Construct covariance (I-B)^-1 Psi (I-B)^-T."""
    B = np.asarray(B, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    ImB = np.eye(B.shape[0]) - B
    A = _solve_square(ImB, np.eye(B.shape[0]), "I - B")
    V = A @ Psi @ A.T
    return 0.5 * (V + V.T)


@dataclass
class ModelMatrices:
    Lambda_l: np.ndarray
    W: np.ndarray
    B: np.ndarray
    Psi: np.ndarray
    Theta_l: np.ndarray
    T: np.ndarray

    def composite_variances(self):
        return np.diag(self.W.T @ self.T @ self.W).copy()


class ModelStructure:
    """Immutable index structure binding table rows to matrix cells."""

    def __init__(self, table: ParameterTable):
        self.table = table
        self.latent_like = table.latent_names + table.covariate_names
        self.constructs = self.latent_like + table.composite_names
        self.Ml = len(self.latent_like)
        self.Mc = len(table.composite_names)
        self.M = self.Ml + self.Mc
        self.Pl = len(table.latent_indicators)
        self.Pc = len(table.composite_indicators)
        self.P = self.Pl + self.Pc
        self.names = table.latent_indicators + table.composite_indicators
        c_ix = {n: i for i, n in enumerate(self.constructs)}
        vl_ix = {n: i for i, n in enumerate(table.latent_indicators)}
        vc_ix = {n: i for i, n in enumerate(table.composite_indicators)}
        self.construct_index = c_ix
        self.derived_psi = [
            c_ix[r.lhs] for r in table.rows if r.status == DERIVED
        ]
        # row id -> (matrix key, i, j, symmetric?)
        self.cells = {}
        for r in table.rows:
            if r.role == ROLE_LOADING:
                cell = ("Lambda_l", vl_ix[r.rhs], c_ix[r.lhs], False)
            elif r.role == ROLE_WEIGHT:
                cell = ("W", vc_ix[r.rhs], c_ix[r.lhs] - self.Ml, False)
            elif r.role == ROLE_BETA:
                cell = ("B", c_ix[r.lhs], c_ix[r.rhs], False)
            elif r.role == ROLE_PSI:
                cell = ("Psi", c_ix[r.lhs], c_ix[r.rhs], True)
            elif r.role == ROLE_THETA:
                cell = ("Theta_l", vl_ix[r.lhs], vl_ix[r.rhs], True)
            elif r.role == ROLE_T:
                cell = ("T", vc_ix[r.lhs], vc_ix[r.rhs], True)
            else:  # pragma: no cover - roles are exhaustive
                raise ValueError(r.role)
            self.cells[r.id] = cell

    def materialize(self, theta=None) -> ModelMatrices:
        """Assemble model matrices from table values, overriding free cells
        with *theta* when given."""
        m = ModelMatrices(
            Lambda_l=np.zeros((self.Pl, self.Ml)),
            W=np.zeros((self.Pc, self.Mc)),
            B=np.zeros((self.M, self.M)),
            Psi=np.zeros((self.M, self.M)),
            Theta_l=np.zeros((self.Pl, self.Pl)),
            T=np.zeros((self.Pc, self.Pc)),
        )
        mats = {
            "Lambda_l": m.Lambda_l, "W": m.W, "B": m.B,
            "Psi": m.Psi, "Theta_l": m.Theta_l, "T": m.T,
        }
        if theta is not None:
            theta = np.asarray(theta, dtype=float)
            if theta.shape != (self.table.n_free,):
                raise ValueError(
                    f"theta has length {theta.shape}, expected {self.table.n_free}"
                )
            if not np.all(np.isfinite(theta)):
                raise ValueError("non-finite entries in theta")
        for r in self.table.rows:
            if r.status == DERIVED:
                continue
            if theta is not None and r.free_index is not None:
                val = theta[r.free_index]
            else:
                val = r.value
            key, i, j, sym = self.cells[r.id]
            mats[key][i, j] = val
            if sym:
                mats[key][j, i] = val
        return m


def apply_composite_variance_constraints(structure: ModelStructure, m: ModelMatrices):
    """Fill the derived Psi diagonal entries so that the construct variances
    of all composites equal diag(W'TW).  Modifies m.Psi in place and returns
    the vector of derived values (in structure.derived_psi order)."""
    unknown = structure.derived_psi
    if not unknown:
        return np.zeros(0)
    targets = m.composite_variances()
    ImB = np.eye(structure.M) - m.B
    A = _solve_square(ImB, np.eye(structure.M), "I - B")
    for k in unknown:
        m.Psi[k, k] = 0.0
    base = np.einsum("ij,jk,ik->i", A, m.Psi, A)
    coef = np.empty((len(unknown), len(unknown)))
    rhs = np.empty(len(unknown))
    for a, ci in enumerate(unknown):
        rhs[a] = targets[ci - structure.Ml] - base[ci]
        for b, cj in enumerate(unknown):
            coef[a, b] = A[ci, cj] ** 2
    try:
        x = _solve_square(coef, rhs, "composite variance constraints")
    except SingularModelError as e:
        names = [structure.constructs[k] for k in unknown]
        raise SingularModelError(
            f"composite variance constraints are ill-posed for {names}"
        ) from e
    for val, k in zip(x, unknown):
        m.Psi[k, k] = val
    return x


def assemble(structure: ModelStructure, theta=None):
    """Full evaluation: returns (Sigma, bundle) where bundle carries all
    intermediate matrices for reuse by assessment code."""
    m = structure.materialize(theta)
    derived = apply_composite_variance_constraints(structure, m)
    V_eta = structural_covariance(m.B, m.Psi)
    if structure.Mc > 0:
        Ct = m.W.T @ m.T @ m.W
        Lambda_c = composite_loadings(m.T, m.W)
        Theta_c = m.T - Lambda_c @ Ct @ Lambda_c.T
    else:
        Ct = np.zeros((0, 0))
        Lambda_c = np.zeros((0, 0))
        Theta_c = np.zeros((0, 0))
    Lam = np.zeros((structure.P, structure.M))
    Lam[: structure.Pl, : structure.Ml] = m.Lambda_l
    Lam[structure.Pl :, structure.Ml :] = Lambda_c
    Theta = np.zeros((structure.P, structure.P))
    Theta[: structure.Pl, : structure.Pl] = m.Theta_l
    Theta[structure.Pl :, structure.Pl :] = Theta_c
    Sigma = Lam @ V_eta @ Lam.T + Theta
    Sigma = 0.5 * (Sigma + Sigma.T)
    bundle = {
        "matrices": m,
        "Lambda_c": Lambda_c,
        "Lambda": Lam,
        "V_eta": V_eta,
        "Theta_c": Theta_c,
        "Theta": Theta,
        "Ct": Ct,
        "derived_psi": derived,
    }
    return Sigma, bundle


def implied_covariance(theta, structure: ModelStructure):
    """Model-implied covariance Sigma(theta) of the indicators."""
    return assemble(structure, theta)[0]
