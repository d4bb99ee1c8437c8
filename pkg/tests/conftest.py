import numpy as np
import pytest

import compsem as cs

SCENARIO_MODEL = """\
eta1 =~ y1 + y2 + y3
eta2 =~ y4 + y5 + y6
eta3 <~ y7 + y8 + y9
eta4 <~ y10 + y11 + y12 + y13
eta4 ~ eta1 + eta3
eta2 ~ eta1 + eta3 + eta4
"""

SCENARIO_NAMES = [f"y{i}" for i in range(1, 14)]

T3 = np.array([[6.0, 2.0, 1.2], [2.0, 5.0, 1.5], [1.2, 1.5, 2.0]])
T4 = np.array(
    [
        [7.0, 0.9, 0.5, 1.2],
        [0.9, 3.0, 0.7, 1.8],
        [0.5, 0.7, 2.0, 0.5],
        [1.2, 1.8, 0.5, 5.0],
    ]
)
W3 = np.array([1.0, 0.4, 0.6])
W4 = np.array([1.0, 0.2, 0.5, 0.3])

# population structural coefficients, construct order (eta1, eta2, eta3, eta4)
B_POP = np.zeros((4, 4))
B_POP[1, 0] = 0.2
B_POP[1, 2] = 0.1
B_POP[1, 3] = 0.3
B_POP[3, 0] = 0.6
B_POP[3, 2] = 0.5

VAR_ETA3 = float(W3 @ T3 @ W3)       # 11.28
VAR_ETA4 = float(W4 @ T4 @ W4)       # 10.156
VAR_ZETA4 = VAR_ETA4 - 0.36 * 2.0 - 0.25 * VAR_ETA3 - 2 * 0.6 * 0.5 * 0.1  # 6.556

PSI_POP = np.diag([2.0, 1.5, VAR_ETA3, VAR_ZETA4])
PSI_POP[0, 2] = PSI_POP[2, 0] = 0.1

T_POP = np.zeros((7, 7))
T_POP[:3, :3] = T3
T_POP[3:, 3:] = T4
W_POP = np.zeros((7, 2))
W_POP[:3, 0] = W3
W_POP[3:, 1] = W4

LAMBDA_L_POP = np.zeros((6, 2))
LAMBDA_L_POP[0:3, 0] = [1.0, 0.8, 0.9]
LAMBDA_L_POP[3:6, 1] = [1.0, 0.7, 0.8]

THETA_L_POP = 0.5 * np.eye(6)


def population_sigma():
    Ct = W_POP.T @ T_POP @ W_POP
    Lc = T_POP @ W_POP @ np.linalg.inv(Ct)
    A = np.linalg.inv(np.eye(4) - B_POP)
    V = A @ PSI_POP @ A.T
    Lam = np.zeros((13, 4))
    Lam[:6, :2] = LAMBDA_L_POP
    Lam[6:, 2:] = Lc
    Theta = np.zeros((13, 13))
    Theta[:6, :6] = THETA_L_POP
    Theta[6:, 6:] = T_POP - Lc @ Ct @ Lc.T
    S = Lam @ V @ Lam.T + Theta
    return 0.5 * (S + S.T)


SIGMA_POP = population_sigma()

# population values keyed by (lhs, op, rhs) table coordinates
SCENARIO_TRUTH = {
    ("eta1", "=~", "y2"): 0.8,
    ("eta1", "=~", "y3"): 0.9,
    ("eta2", "=~", "y5"): 0.7,
    ("eta2", "=~", "y6"): 0.8,
    ("eta3", "<~", "y8"): 0.4,
    ("eta3", "<~", "y9"): 0.6,
    ("eta4", "<~", "y11"): 0.2,
    ("eta4", "<~", "y12"): 0.5,
    ("eta4", "<~", "y13"): 0.3,
    ("eta4", "~", "eta1"): 0.6,
    ("eta4", "~", "eta3"): 0.5,
    ("eta2", "~", "eta1"): 0.2,
    ("eta2", "~", "eta3"): 0.1,
    ("eta2", "~", "eta4"): 0.3,
    ("eta1", "~~", "eta1"): 2.0,
    ("eta2", "~~", "eta2"): 1.5,
    ("eta1", "~~", "eta3"): 0.1,
    ("y1", "~~", "y1"): 0.5,
    ("y2", "~~", "y2"): 0.5,
    ("y3", "~~", "y3"): 0.5,
    ("y4", "~~", "y4"): 0.5,
    ("y5", "~~", "y5"): 0.5,
    ("y6", "~~", "y6"): 0.5,
}


@pytest.fixture(scope="session")
def scenario_spec():
    return cs.parse_model(SCENARIO_MODEL)


@pytest.fixture(scope="session")
def scenario_table(scenario_spec):
    return cs.build_parameter_table(scenario_spec, SCENARIO_NAMES)


@pytest.fixture(scope="session")
def scenario_moments():
    df = cs.exact_population_sample(SIGMA_POP, 200, SCENARIO_NAMES, seed=11)
    return cs.sample_moments(df)


@pytest.fixture(scope="session")
def scenario_fit(scenario_table, scenario_moments):
    return cs.fit(scenario_moments, scenario_table, cs.FitOptions())


def scenario_theta0(table):
    """Free vector holding the population values (sample rows already pinned
    by start_values against exact-population moments)."""
    theta = np.zeros(table.n_free)
    for r in table.rows:
        if r.free_index is not None:
            theta[r.free_index] = SCENARIO_TRUTH[(r.lhs, r.op, r.rhs)]
    return theta
