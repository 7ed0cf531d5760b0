"""Qualitative comparisons on simulated data (p=20, K=3, n=2000)."""
import numpy as np
import pytest

from infrec.baselines import fit_netrate, fit_topiccascade
from infrec.diagnostics import evaluate
from infrec.estimation import InfluenceReceptivity, cross_validate
from infrec.simulate import SyntheticConfig, generate_cascades, generate_dataset

pytestmark = pytest.mark.slow

GRID = (0.0, 1e-3, 1e-2, 1e-1)
FLOOR = 1e-6


@pytest.fixture(scope="module")
def experiment():
    truth, train = generate_dataset(SyntheticConfig(p=20, K=3, n=2000, seed=3))
    test = generate_cascades(truth, 1000, 1.0, "exp", seed=1003)
    make = lambda lam: InfluenceReceptivity(n_topics=3, lam=lam, step_growth=1.5, max_iters=300,
                                            init_iters=100, n_nodes=20)
    best, scores = cross_validate(make(0.0), train, "lam", GRID, holdout=0.2, seed=0)
    fits = {lam: make(lam).fit(train) for lam in sorted({0.0, best, GRID[-1]})}
    reports = {lam: evaluate(m, None, test, truth, rate_floor=FLOOR)
               for lam, m in fits.items()}
    return truth, train, test, best, scores, reports


def test_validated_lambda_generalizes(experiment):
    _, _, _, best, scores, reports = experiment
    assert np.all(np.isfinite(scores[:2]))
    assert reports[best].test_nll <= reports[0.0].test_nll
    assert reports[best].test_nll <= reports[GRID[-1]].test_nll


def test_ours_beats_netrate_on_test_nll(experiment):
    truth, train, test, best, _, reports = experiment
    nr = fit_netrate(train, "exp", 1e-3, max_iters=300, p=20)
    assert reports[best].test_nll <= evaluate(nr, None, test, truth, rate_floor=FLOOR).test_nll


def test_topiccascade_error_not_below_ours(experiment):
    truth, train, test, best, _, reports = experiment
    tc = fit_topiccascade(train, 3, "exp", 1e-3, max_iters=100, p=20)
    assert evaluate(tc, None, test, truth).topic_error >= reports[best].topic_error
