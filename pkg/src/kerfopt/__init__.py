"""kerfopt: constrained trust-region Bayesian optimization for multi-pass
laser dicing process discovery, with a synthetic wafer simulator, an
ask/tell campaign service, and a CLI."""

__version__ = "0.1.0"
