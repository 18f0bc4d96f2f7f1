"""innovnet: patent-embedding innovation networks and panel econometrics.

The pipeline turns timestamped patent documents into firm-level
innovation-similarity graphs, centrality measures, and regression tables:

    prep -> pairs -> embed/train-head -> network -> centrality -> panel/stats

Every stage is deterministic given (inputs, parameters, seed).
"""

__version__ = "0.1.0"

from .rng import SeededRng

__all__ = ["SeededRng", "__version__"]
