"""Phase classification of branching Markov chains: spectral radii, generating
functions, large deviations, Monte Carlo evidence."""

__version__ = "0.1.0"

from .models import (CycleGraph, ConeTypeTree, DriftZd, Finite, Glued, OffspringLaw, RegularTree,  # noqa: F401
                     SeedChain, TwoPointEnvironmentZ, build_ball, law_with_mean, line_tree, neighbors,
                     path_graph, pos_rec_law)
