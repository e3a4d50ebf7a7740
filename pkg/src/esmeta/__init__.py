"""Meta-RL by evolution strategies over Gaussian policy-parameter
distributions, with deterministic-policy-gradient inner-loop adaptation."""

__version__ = "0.1.0"
