"""lmpath: language-mediated exploration priors and UAV search-path planning.

Pipeline: a geofenced satellite mosaic and a target-object prompt become a
normalized heat-density prior; the prior is integrated over Voronoi cells of
a sensor-coverage waypoint grid; tours are solved to minimize expected search
time (or to cover threshold-filtered sub-regions); a Monte Carlo evaluator
compares planners on seeded random-target trials.
"""

__version__ = "0.1.0"
