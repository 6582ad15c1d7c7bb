"""Online algorithm selection for closed-loop process optimization.

The package fits Gaussian process models to process data, draws simulation
instances from them, benchmarks a portfolio of black-box optimizers on the
instances under resource metering, rates the optimizers with a weighted
normalized aggregate, and applies the winner's parameter proposal back to
the (simulated) plant.
"""

__version__ = "0.1.0"
