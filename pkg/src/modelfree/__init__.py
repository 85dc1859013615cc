"""Model-free price bounds for options.

``lp``        dense two-phase simplex
``core``      quotes, snapshots, payoffs and feature vectors
``hedge``     super/sub-hedging bounds on a price grid
``mot``       quantization and martingale transport bounds
``mlp``       ReLU network, Adam, early stopping
``pipeline``  labelled data generation
``report``    error summaries
``cli``       the ``modelfree`` command
"""

__version__ = "0.1.0"
