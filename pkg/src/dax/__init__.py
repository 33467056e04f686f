"""
dax: ensemble data assimilation experiments on Lorenz-96.

Layer 1: config, errors, models, linalg
Layer 2: dynamics, observation, ensemble, spectral
Layer 3: filters (sequential EnKF, 4D-EnKF, QPCA-EnDCF)
Layer 4: diagnostics, theory_checks
Layer 5: settings, harness, report, cli
"""

__version__ = "0.3.0"
