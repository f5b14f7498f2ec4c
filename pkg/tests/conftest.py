import os
import warnings
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd
import pytest
import scipy.stats
from _pytest.logging import LogCaptureFixture
from loguru import logger

from saiplab.diffusion import make_scaled_linear_schedule
from saiplab.gmm import GmmPrior
from saiplab.operators import MatrixOperator, MeasurementModel
from saiplab.tasks import canonical_toy


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: mark test as slow to run")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        # --runslow given in cli: do not skip slow tests
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        # Automatically tag all tests in the tests/integration dir as slow
        if Path(item.parent.path).parent.stem == "integration":
            item.add_marker(pytest.mark.slow)
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def caplog(caplog: LogCaptureFixture):
    handler_id = logger.add(
        caplog.handler,
        format="{message}",
        level=0,
        filter=lambda record: record["level"].no >= caplog.handler.level,
        enqueue=False,  # Set to 'True' if your test is spawning child processes.
    )
    yield caplog
    logger.remove(handler_id)


@pytest.fixture(scope="session")
def toy_task():
    return canonical_toy()


@pytest.fixture
def short_schedule():
    return make_scaled_linear_schedule(20)


@pytest.fixture
def random_mixture() -> GmmPrior:
    """A 2-component 2D mixture with full, non-diagonal covariances."""
    return GmmPrior(
        [0.4, 0.6],
        [[-1.0, 0.5], [1.5, -0.5]],
        [np.array([[0.8, 0.3], [0.3, 0.5]]), np.array([[0.4, -0.1], [-0.1, 0.9]])],
    )


@pytest.fixture
def first_coordinate_model() -> MeasurementModel:
    return MeasurementModel(MatrixOperator.from_matrix([[1.0, 0.0]]), 0.3)


class FuzzyChecker:
    """
    Manages "fuzzy" checks of proportions that are subject to stochastic
    variation, e.g. how often each mixture component is drawn.

    An observed proportion fails when a Bayesian hypothesis test decisively
    favors a Jeffreys "bug" distribution over the binomial target distribution.
    Diagnostics of every assertion are kept for the whole session.
    """

    def __init__(self) -> None:
        self.proportion_test_diagnostics: List[dict] = []

    def fuzzy_assert_proportion(
        self,
        name: str,
        observed_numerator: int,
        observed_denominator: int,
        target_proportion: float,
        fail_bayes_factor_cutoff: float = 100.0,
        inconclusive_bayes_factor_cutoff: float = 0.1,
    ) -> None:
        """
        Assert that an observed proportion of events came from the target proportion.

        :param name:
            The name of the assertion, for use in messages and diagnostics.
        :param observed_numerator:
            The observed number of events.
        :param observed_denominator:
            The number of opportunities there were for an event to be observed.
        :param target_proportion:
            What the proportion of events / opportunities should be as the number
            of opportunities goes to infinity.
        :param fail_bayes_factor_cutoff:
            The Bayes factor above which the test favors a bug so strongly that the
            assertion fails.
        :param inconclusive_bayes_factor_cutoff:
            The Bayes factor above which the test is inconclusive. This only warns.
        """
        assert (
            observed_numerator <= observed_denominator
        ), f"There cannot be more events ({observed_numerator}) than opportunities for events ({observed_denominator})"

        bug_distribution = scipy.stats.betabinom(a=0.5, b=0.5, n=observed_denominator)
        no_bug_distribution = scipy.stats.binom(p=target_proportion, n=observed_denominator)
        with np.errstate(under="ignore"):
            bug_likelihood = bug_distribution.pmf(observed_numerator)
            no_bug_likelihood = no_bug_distribution.pmf(observed_numerator)
        bayes_factor = (
            bug_likelihood / no_bug_likelihood if no_bug_likelihood > 0 else np.finfo(float).max
        )

        observed_proportion = observed_numerator / observed_denominator
        reject_null = bayes_factor > fail_bayes_factor_cutoff
        self.proportion_test_diagnostics.append(
            {
                "name": name,
                "observed_proportion": observed_proportion,
                "observed_numerator": observed_numerator,
                "observed_denominator": observed_denominator,
                "target_proportion": target_proportion,
                "bayes_factor": bayes_factor,
                "reject_null": reject_null,
            }
        )

        if reject_null:
            relation = "less" if observed_proportion < target_proportion else "greater"
            raise AssertionError(
                f"{name} value {observed_proportion:g} is significantly {relation} than expected "
                f"{target_proportion:g}, bayes factor = {bayes_factor:g}"
            )
        if fail_bayes_factor_cutoff > bayes_factor > inconclusive_bayes_factor_cutoff:
            warnings.warn(f"Bayes factor for '{name}' is not conclusive.")

    def save_diagnostic_output(self) -> None:
        """Save diagnostics for optional human inspection."""
        output_dir = Path(os.path.dirname(__file__)) / "v_and_v_output"
        output_dir.mkdir(exist_ok=True)
        pd.DataFrame(self.proportion_test_diagnostics).to_csv(
            output_dir / "proportion_test_diagnostics.csv", index=False
        )


@pytest.fixture(scope="session")
def fuzzy_checker() -> FuzzyChecker:
    checker = FuzzyChecker()

    yield checker

    checker.save_diagnostic_output()
