"""cellbo: cellular downlink simulation and Bayesian tilt/power tuning.

Submodules:
    deploy   hexagonal layout, wrap-around, user drops
    channel  path loss, LoS, shadowing, antenna pattern, small-scale fading
    netsim   SINR assembly, RSS association, mean-SINR objective
    gp       Matern-5/2 Gaussian-process surrogate
    bo       round-robin per-cell Bayesian optimization loop
    cli      optimize / baseline / eval / report command line

The package root stays import-light so the CLI can cap BLAS threads
before numerical libraries load; import the submodules directly.
"""

__version__ = "0.1.0"

__all__ = ["deploy", "channel", "netsim", "gp", "bo", "cli"]
