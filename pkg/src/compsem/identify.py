"""Degrees of freedom and necessary-condition identification checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matrices
from .ptable import (
    DERIVED,
    FIXED,
    FREE,
    ROLE_BETA,
    ROLE_LOADING,
    ROLE_PSI,
    ROLE_T,
    ROLE_THETA,
    ROLE_WEIGHT,
    SAMPLE,
    ParameterTable,
)

PASS = "pass"
FAIL = "fail"
WARN = "warning"
NA = "not-applicable"


@dataclass
class Check:
    name: str
    status: str
    message: str = ""


@dataclass
class IdentificationReport:
    df: int
    n_params: int
    P: int
    checks: list[Check] = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def overall(self):
        return all(c.status != FAIL for c in self.checks)

    def to_dict(self):
        return {
            "df": self.df,
            "n_params": self.n_params,
            "n_indicators": self.P,
            "overall": "pass" if self.overall else "fail",
            "counts": self.counts,
            "checks": [
                {"name": c.name, "status": c.status, "message": c.message}
                for c in self.checks
            ],
        }


def parameter_counts(table: ParameterTable) -> dict:
    """Itemized parameter counts by role, matching the df accounting.

    Label-shared free rows count once; sample-pinned composite-indicator
    (co)variances count as parameters.
    """
    latset = set(table.latent_names) | set(table.covariate_names)
    counts = {
        "measurement_error_covariances": 0,
        "composite_indicator_covariances": 0,
        "loadings": 0,
        "weights": 0,
        "structural_coefficients": 0,
        "structural_error_variances": 0,
        "construct_covariances": 0,
        "exogenous_construct_variances": 0,
    }
    seen = set()
    for r in table.rows:
        if r.status == SAMPLE:
            pass
        elif r.free_index is None or r.free_index in seen:
            continue
        else:
            seen.add(r.free_index)
        if r.role == ROLE_THETA:
            counts["measurement_error_covariances"] += 1
        elif r.role == ROLE_T:
            counts["composite_indicator_covariances"] += 1
        elif r.role == ROLE_LOADING:
            counts["loadings"] += 1
        elif r.role == ROLE_WEIGHT:
            counts["weights"] += 1
        elif r.role == ROLE_BETA:
            counts["structural_coefficients"] += 1
        elif r.role == ROLE_PSI and not r.is_variance:
            counts["construct_covariances"] += 1
        elif r.role == ROLE_PSI:
            if r.lhs in table.endogenous and r.lhs in latset:
                counts["structural_error_variances"] += 1
            else:
                counts["exogenous_construct_variances"] += 1
    return counts


def count_df(table: ParameterTable, P: int) -> int:
    """t-rule degrees of freedom: non-redundant moments minus parameters."""
    return P * (P + 1) // 2 - table.n_params


def check_identification(spec, table: ParameterTable, jacobian_rank=False) -> IdentificationReport:
    """Necessary-condition identification checks; findings never raise."""
    P = len(table.variable_names)
    df = count_df(table, P)
    checks = []

    checks.append(
        Check("t-rule", PASS if df >= 0 else FAIL, f"df = {df}")
    )

    # Every construct scaled (enforced at build time, re-verified here).
    unscaled = []
    for c in table.latent_names + table.composite_names:
        role = ROLE_LOADING if c in set(table.latent_names) else ROLE_WEIGHT
        has_fixed_slope = any(
            r.role == role and r.lhs == c and r.status == FIXED and r.value != 0
            for r in table.rows
        )
        has_fixed_var = any(
            r.role == ROLE_PSI and r.is_variance and r.lhs == c and r.status == FIXED
            for r in table.rows
        )
        if not (has_fixed_slope or has_fixed_var):
            unscaled.append(c)
    checks.append(
        Check(
            "scaling",
            PASS if not unscaled else FAIL,
            "all constructs scaled" if not unscaled else f"unscaled: {unscaled}",
        )
    )

    # Two-indicator heuristic for latent variables.
    weak = []
    def _active(r):
        return r.status == FREE or (r.status == FIXED and r.value != 0)

    structural_pairs = {
        (r.lhs, r.rhs) for r in table.rows if r.role == ROLE_BETA and _active(r)
    } | {
        (r.lhs, r.rhs)
        for r in table.rows
        if r.role == ROLE_PSI and not r.is_variance and _active(r)
    }
    connected = {a for pair in structural_pairs for a in pair}
    for c in table.latent_names:
        inds = table.blocks[c]
        corr_errors = any(
            r.role == ROLE_THETA
            and not r.is_variance
            and r.lhs in inds
            and r.rhs in inds
            and r.status != FIXED
            for r in table.rows
        )
        if len(inds) >= 2 and not corr_errors:
            continue
        if len(inds) >= 1 and c in connected:
            continue
        weak.append(c)
    checks.append(
        Check(
            "latent-indicators",
            PASS if not weak else WARN,
            "two-indicator rule satisfied"
            if not weak
            else f"latent variables not covered by the two-indicator rule: {weak}",
        )
    )

    # Composite connectivity.
    isolated = []
    for c in table.composite_names:
        all_fixed = all(
            r.status == FIXED
            for r in table.rows
            if r.role == ROLE_WEIGHT and r.lhs == c
        )
        if all_fixed:
            continue
        related = any(
            (a == c or b == c) and a != b for (a, b) in structural_pairs
        )
        if not related:
            isolated.append(c)
    checks.append(
        Check(
            "composite-connectivity",
            PASS if not isolated else FAIL,
            "each composite related to an outside variable"
            if not isolated
            else f"isolated composites with free weights: {isolated}",
        )
    )

    # Recursive-rule heuristic for the structural model.
    structure = matrices.ModelStructure(table)
    m = structure.materialize()
    recursive = _is_recursive(table, structure, m)
    checks.append(
        Check(
            "structural-recursive",
            PASS if recursive else WARN,
            "recursive (no feedback loops, uncorrelated structural errors)"
            if recursive
            else "structural model is non-recursive; identification not verified",
        )
    )

    # I - B nonsingular at start values.
    ImB = np.eye(structure.M) - m.B
    ok = np.linalg.matrix_rank(ImB) == structure.M
    checks.append(
        Check("I-B-nonsingular", PASS if ok else FAIL,
              "nonsingular at start values" if ok else "I - B singular at start values")
    )

    # No indicator attached to more than one construct (parser invariant).
    multi = []
    seen = {}
    for c, inds in table.blocks.items():
        for v in inds:
            if v in seen and seen[v] != c:
                multi.append(v)
            seen[v] = c
    checks.append(
        Check("single-attachment", PASS if not multi else FAIL,
              "" if not multi else f"indicators on multiple constructs: {multi}")
    )

    if jacobian_rank:
        checks.append(_jacobian_check(table, structure))

    return IdentificationReport(
        df=df, n_params=table.n_params, P=P, checks=checks,
        counts=parameter_counts(table),
    )


def _is_recursive(table, structure, m):
    M = structure.M
    free_B = (m.B != 0) | _free_mask(table, structure, "B")
    # topological-order test: B permutable to strict lower triangular
    adj = free_B.copy()
    remaining = set(range(M))
    while remaining:
        sinks = [i for i in remaining if not any(adj[i, j] for j in remaining if j != i)]
        if not sinks:
            return False
        for i in sinks:
            remaining.discard(i)
    # uncorrelated structural errors among endogenous constructs
    endo = {structure.construct_index[c] for c in table.endogenous}
    for r in table.rows:
        if r.role == ROLE_PSI and not r.is_variance and r.status != DERIVED:
            i = structure.construct_index[r.lhs]
            j = structure.construct_index[r.rhs]
            if i in endo and j in endo and (r.status != FIXED or r.value != 0):
                return False
    return True


def _free_mask(table, structure, key):
    mask = np.zeros((structure.M, structure.M), dtype=bool)
    for r in table.rows:
        k, i, j, sym = structure.cells[r.id]
        if k == key and r.free_index is not None:
            mask[i, j] = True
    return mask


def _jacobian_check(table, structure):
    from .matrices import implied_covariance

    theta0 = table.free_vector("start")
    n = theta0.size
    if n == 0:
        return Check("jacobian-rank", NA, "no free parameters")
    P = structure.P
    iu = np.triu_indices(P)
    J = np.zeros((iu[0].size, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(theta0[i]))
        tp = theta0.copy(); tp[i] += h
        tm = theta0.copy(); tm[i] -= h
        try:
            J[:, i] = (implied_covariance(tp, structure)[iu]
                       - implied_covariance(tm, structure)[iu]) / (2 * h)
        except (ValueError, matrices.SingularModelError):
            return Check("jacobian-rank", NA, "Jacobian not computable at start values")
    sv = np.linalg.svd(J, compute_uv=False)
    deficient = sv.size and sv[-1] < 1e-8 * sv[0]
    return Check(
        "jacobian-rank",
        WARN if deficient else PASS,
        "rank-deficient Jacobian at start values" if deficient
        else "full-rank Jacobian at start values",
    )
