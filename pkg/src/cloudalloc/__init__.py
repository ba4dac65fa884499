"""Deterministic desk-scale toolkit for ML-driven cloud resource allocation.

Subpackages:
    trace     synthetic tidal workload generation and preprocessing
    forecast  from-scratch LSTM demand forecaster with baselines
    simenv    discrete-time cluster simulator with constraint checks
    agent     double-DQN scheduler plus static/threshold baselines
    optimize  multi-objective scoring function and particle swarm optimizer
    report    evaluation metrics, cost breakdowns, plots, comparisons
    cli       end-to-end pipeline frontend
"""

__version__ = "0.1.0"
