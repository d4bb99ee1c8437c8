"""Expansion of a parsed model into a flat parameter table.

Every model parameter becomes one row with a role (loading, weight,
structural coefficient, construct (co)variance, measurement-error
(co)variance, composite-indicator (co)variance), a status and, for free
parameters, a position in the free-parameter vector.

Default scaling fixes the first loading per latent variable and the first
weight per composite to one.  Composite-indicator (co)variances default to
"sample" status: their values are pinned to the sample statistics but they
still count as model parameters in the degrees-of-freedom computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import syntax
from .syntax import COMPOSED_OF, COVARIES_WITH, MEASURED_BY, REGRESSED_ON, ModelSpec

ROLE_LOADING = "loading"
ROLE_WEIGHT = "weight"
ROLE_BETA = "beta"
ROLE_PSI = "psi"
ROLE_THETA = "theta"
ROLE_T = "t"

FREE = "free"
FIXED = "fixed"
SAMPLE = "sample"  # fixed to the sample statistic, counted as a parameter
DERIVED = "derived"


class ModelBuildError(ValueError):
    pass


@dataclass
class ScalingOptions:
    std_lv: bool = False
    estimate_t: bool = False


@dataclass
class ParamRow:
    id: int
    lhs: str
    op: str
    rhs: str
    role: str
    status: str
    value: float = 0.0
    start: float = 0.0
    label: str | None = None
    free_index: int | None = None
    se: float | None = None

    @property
    def is_variance(self):
        return self.op == COVARIES_WITH and self.lhs == self.rhs


@dataclass
class ParameterTable:
    rows: list[ParamRow]
    latent_names: list[str]
    covariate_names: list[str]
    composite_names: list[str]
    latent_indicators: list[str]
    composite_indicators: list[str]
    blocks: dict[str, list[str]]
    endogenous: set[str] = field(default_factory=set)

    @property
    def construct_names(self):
        return self.latent_names + self.covariate_names + self.composite_names

    @property
    def variable_names(self):
        return self.latent_indicators + self.composite_indicators

    @property
    def n_free(self):
        """Number of optimized parameters (distinct free indices)."""
        idx = {r.free_index for r in self.rows if r.free_index is not None}
        return len(idx)

    @property
    def n_params(self):
        """Parameter count K for the degrees-of-freedom rule: free rows plus
        sample-pinned composite-indicator (co)variances."""
        return self.n_free + sum(1 for r in self.rows if r.status == SAMPLE)

    def free_vector(self, attr="start"):
        theta = np.zeros(self.n_free)
        for r in self.rows:
            if r.free_index is not None:
                theta[r.free_index] = getattr(r, attr)
        return theta

    def set_free_values(self, theta):
        for r in self.rows:
            if r.free_index is not None:
                r.value = float(theta[r.free_index])

    def copy(self):
        return ParameterTable(
            rows=[replace(r) for r in self.rows],
            latent_names=list(self.latent_names),
            covariate_names=list(self.covariate_names),
            composite_names=list(self.composite_names),
            latent_indicators=list(self.latent_indicators),
            composite_indicators=list(self.composite_indicators),
            blocks={k: list(v) for k, v in self.blocks.items()},
            endogenous=set(self.endogenous),
        )

    def to_records(self):
        recs = []
        for r in self.rows:
            recs.append(
                {
                    "id": r.id,
                    "lhs": r.lhs,
                    "op": r.op,
                    "rhs": r.rhs,
                    "role": r.role,
                    "status": r.status,
                    "value": r.value,
                    "label": r.label,
                    "free_index": r.free_index,
                    "se": r.se,
                }
            )
        return recs


def build_parameter_table(
    spec: ModelSpec, observed: list[str], options: ScalingOptions | None = None
) -> ParameterTable:
    """Expand *spec* against the observed-variable list into a full table."""
    options = options or ScalingOptions()
    latents = spec.latent_names
    composites = spec.composite_names
    blocks = {}
    indicator_of = {}
    for s in spec.statements:
        if s.op in (MEASURED_BY, COMPOSED_OF):
            blocks[s.lhs] = [t.name for t in s.rhs]
            for t in s.rhs:
                indicator_of[t.name] = s.lhs

    known = set(latents) | set(composites)
    observed_set = set(observed)
    for name in indicator_of:
        if name not in observed_set:
            raise ModelBuildError(f"indicator {name!r} is not an observed variable")

    # Observed variables appearing directly in structural or covariance
    # statements become single-indicator latent variables without error.
    covariates = []
    for s in spec.statements:
        if s.op not in (REGRESSED_ON, COVARIES_WITH):
            continue
        for name in [s.lhs] + [t.name for t in s.rhs]:
            if name in known or name in covariates:
                continue
            if name in indicator_of:
                if s.op == REGRESSED_ON:
                    raise ModelBuildError(
                        f"{name!r} is an indicator of {indicator_of[name]!r} and "
                        "cannot also appear in a structural statement"
                    )
                continue  # indicator (co)variance statement, handled below
            if name not in observed_set:
                raise ModelBuildError(f"unknown variable {name!r}")
            covariates.append(name)

    latent_inds = [v for c in latents for v in blocks[c]]
    composite_inds = [v for c in composites for v in blocks[c]]
    for c in covariates:
        blocks[c] = [c]
    latent_inds = latent_inds + covariates

    constructs = latents + covariates + composites
    endogenous = {
        s.lhs for s in spec.statements if s.op == REGRESSED_ON and s.lhs in constructs
    }

    rows: list[ParamRow] = []

    def add(lhs, op, rhs, role, status, value=0.0, start=None, label=None):
        rows.append(
            ParamRow(
                len(rows), lhs, op, rhs, role, status,
                value=value, start=value if start is None else start, label=label,
            )
        )

    # Measurement and composite blocks.
    for s in spec.statements:
        if s.op not in (MEASURED_BY, COMPOSED_OF):
            continue
        role = ROLE_LOADING if s.op == MEASURED_BY else ROLE_WEIGHT
        user_fixed = any(t.fixed is not None for t in s.rhs)
        unit_var = options.std_lv and s.op == MEASURED_BY
        if user_fixed and unit_var:
            raise ModelBuildError(
                f"scaling conflict for {s.lhs!r}: a fixed loading and "
                "unit-variance scaling were both requested"
            )
        for k, t in enumerate(s.rhs):
            if t.fixed is not None:
                add(s.lhs, s.op, t.name, role, FIXED, value=t.fixed)
            elif k == 0 and not user_fixed and not unit_var and not t.force_free:
                add(s.lhs, s.op, t.name, role, FIXED, value=1.0)
            else:
                add(s.lhs, s.op, t.name, role, FREE, value=1.0, label=t.label)

    # Covariate pseudo-blocks: loading one, no measurement error.
    for c in covariates:
        add(c, MEASURED_BY, c, ROLE_LOADING, FIXED, value=1.0)

    # Structural coefficients.
    for s in spec.statements:
        if s.op != REGRESSED_ON:
            continue
        for t in s.rhs:
            if t.fixed is not None:
                add(s.lhs, s.op, t.name, ROLE_BETA, FIXED, value=t.fixed)
            else:
                add(s.lhs, s.op, t.name, ROLE_BETA, FREE, label=t.label)

    # User (co)variance statements.
    user_cov_keys = set()
    construct_set = set(constructs)
    comp_ind_set = set(composite_inds)
    lat_ind_set = set(latent_inds)
    for s in spec.statements:
        if s.op != COVARIES_WITH:
            continue
        for t in s.rhs:
            a, b = s.lhs, t.name
            key = frozenset((a, b)) if a != b else frozenset((a,))
            if a in construct_set and b in construct_set:
                role = ROLE_PSI
            elif a in comp_ind_set and b in comp_ind_set:
                if indicator_of[a] != indicator_of[b]:
                    raise ModelBuildError(
                        f"covariance between {a!r} and {b!r} crosses composite "
                        "blocks and is structurally zero"
                    )
                role = ROLE_T
            elif a in lat_ind_set and b in lat_ind_set:
                role = ROLE_THETA
            else:
                raise ModelBuildError(
                    f"unsupported covariance between {a!r} and {b!r}"
                )
            user_cov_keys.add((role, key))
            if t.fixed is not None:
                add(a, COVARIES_WITH, b, role, FIXED, value=t.fixed)
            else:
                add(a, COVARIES_WITH, b, role, FREE, label=t.label)

    # Measurement-error variances.
    for v in latent_inds:
        if (ROLE_THETA, frozenset((v,))) in user_cov_keys:
            continue
        if v in covariates:
            add(v, COVARIES_WITH, v, ROLE_THETA, FIXED, value=0.0)
        else:
            add(v, COVARIES_WITH, v, ROLE_THETA, FREE, value=0.5)

    # Composite-indicator (co)variances: full within-block triangle.
    t_status = FREE if options.estimate_t else SAMPLE
    for c in composites:
        inds = blocks[c]
        for i, a in enumerate(inds):
            for b in inds[i:]:
                key = frozenset((a, b)) if a != b else frozenset((a,))
                if (ROLE_T, key) in user_cov_keys:
                    continue
                add(a, COVARIES_WITH, b, ROLE_T, t_status, value=1.0 if a == b else 0.0)

    # Construct variances and exogenous covariances.
    composite_set = set(composites)
    for c in constructs:
        if (ROLE_PSI, frozenset((c,))) in user_cov_keys:
            continue
        if c in composite_set:
            add(c, COVARIES_WITH, c, ROLE_PSI, DERIVED)
        elif options.std_lv and c in set(latents):
            add(c, COVARIES_WITH, c, ROLE_PSI, FIXED, value=1.0)
        else:
            add(c, COVARIES_WITH, c, ROLE_PSI, FREE, value=1.0)
    exo = [c for c in constructs if c not in endogenous]
    for i, a in enumerate(exo):
        for b in exo[i + 1 :]:
            if (ROLE_PSI, frozenset((a, b))) in user_cov_keys:
                continue
            add(a, COVARIES_WITH, b, ROLE_PSI, FREE, value=0.0)

    table = ParameterTable(
        rows=rows,
        latent_names=latents,
        covariate_names=covariates,
        composite_names=composites,
        latent_indicators=latent_inds,
        composite_indicators=composite_inds,
        blocks=blocks,
        endogenous=endogenous,
    )
    _assign_free_indices(table)
    _check_scaled(table)
    return table


def _assign_free_indices(table):
    by_label = {}
    nxt = 0
    for r in table.rows:
        if r.status != FREE:
            r.free_index = None
            continue
        if r.label is not None and r.label in by_label:
            r.free_index = by_label[r.label]
            continue
        r.free_index = nxt
        if r.label is not None:
            by_label[r.label] = nxt
        nxt += 1


def _check_scaled(table):
    for c in table.latent_names + table.composite_names:
        role = ROLE_LOADING if c in set(table.latent_names) else ROLE_WEIGHT
        fixed_slope = any(
            r.role == role and r.lhs == c and r.status == FIXED for r in table.rows
        )
        fixed_var = any(
            r.role == ROLE_PSI and r.is_variance and r.lhs == c and r.status == FIXED
            for r in table.rows
        )
        if not fixed_slope and not fixed_var:
            raise ModelBuildError(
                f"construct {c!r} is not scaled: fix one loading/weight or its variance"
            )


def scaling_indicator(table, construct):
    """Indicator whose loading/weight is fixed for *construct*; falls back to
    the first indicator when the construct is variance-scaled."""
    role = ROLE_LOADING if construct in set(table.latent_names) else ROLE_WEIGHT
    for r in table.rows:
        if r.role == role and r.lhs == construct and r.status == FIXED and r.value != 0:
            return r.rhs
    return table.blocks[construct][0]


def start_values(table: ParameterTable, moments) -> ParameterTable:
    """Populate start values (and sample-pinned values) from sample moments.

    Returns a new table; the input is unchanged.
    """
    table = table.copy()
    S = moments.S
    pos = {n: i for i, n in enumerate(moments.names)}
    latset = set(table.latent_names)
    for r in table.rows:
        if r.status == FIXED:
            r.start = r.value
            continue
        if r.status == SAMPLE:
            r.value = r.start = float(S[pos[r.lhs], pos[r.rhs]])
            continue
        if r.role == ROLE_LOADING:
            ref = scaling_indicator(table, r.lhs)
            s = S[pos[r.rhs], pos[ref]] if r.rhs != ref else 1.0
            r.start = 1.0 if s >= 0 else -1.0
        elif r.role == ROLE_WEIGHT:
            r.start = 1.0 / len(table.blocks[r.lhs])
        elif r.role == ROLE_BETA:
            r.start = 0.0
        elif r.role == ROLE_THETA and r.is_variance:
            r.start = 0.5 * float(S[pos[r.lhs], pos[r.lhs]])
        elif r.role == ROLE_THETA:
            r.start = 0.0
        elif r.role == ROLE_T:
            r.start = float(S[pos[r.lhs], pos[r.rhs]])
        elif r.role == ROLE_PSI and r.is_variance and r.status == FREE:
            if r.lhs in latset:
                ref = scaling_indicator(table, r.lhs)
                r.start = 0.5 * float(S[pos[ref], pos[ref]])
            elif r.lhs in set(table.covariate_names):
                r.start = float(S[pos[r.lhs], pos[r.lhs]])
            else:
                r.start = 1.0
        elif r.role == ROLE_PSI:
            r.start = 0.0
    for r in table.rows:
        if r.free_index is not None:
            r.value = r.start
    return table
