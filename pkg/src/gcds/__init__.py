"""gcds: a generative conditional distribution sampler.

Trains a noise-fed neural sampler of Y | X = x by matching the joint
law of (X, sampler output) to the data law under a variational
divergence bound, then estimates conditional means, spreads, quantiles
and densities by Monte Carlo.  A conditional kernel density baseline
and a simulation benchmark harness are included.
"""

__version__ = "0.1.0"
