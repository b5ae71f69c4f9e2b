import numpy as np
import pytest
from hypothesis import settings

from tikhonov_flow.problem import build_paper_problem

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

# Hand-checked solution of min (x1 - x2)^2 + x3^2 s.t. x1 - x2 + x3 = 2:
# with d = x1 - x2 the problem is min d^2 + x3^2 s.t. d + x3 = 2, so d = x3 = 1,
# the minimum-norm primal point splits d evenly, and 2d + lambda = 0.
X_STAR = np.array([0.5, -0.5, 1.0])
LAMBDA_STAR = np.array([-2.0])
F_STAR = 2.0

EXP1_START = np.array([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0])


@pytest.fixture
def paper():
    return build_paper_problem()
