"""Numerical laboratory for dimensions of convolutions of self-conformal measures."""

from .conditions import ConditionsReport, check_log_ratio, check_theorem_conditions
from .conformal_maps import (ConformalMap, Inversion, MoebiusWord, PlanarAnalytic,
                             Similarity, compose)
from .convolution import (DissonanceConfig, DissonanceReport, OrthogonalProjector,
                          ProjectionParams, convolve, dissonance_experiment, orthogonal_project,
                          project_lambda, random_basis, random_lambda, sumset)
from .dimension import (BoxCountingDimension, CorrelationDimension, DimensionEstimate,
                        LocalDimension, box_dim, correlation_dim, energy, local_dim)
from .errors import DissonanceError
from .ifs import (IFS, BoxCover, PointCloud, cantor, chaos_game, check_strong_separation,
                  four_corner, middle_thirds, moran_dimension, refine_cover, support_geometry)
from .lie import (ConformalLinear, GenerationVerdict, check_generates_CO, check_generates_SO,
                  so_exp, so_log, span_rank, wedge_to_skew)
from .rational import continued_fraction, rational_approximation
from .scenery import (DiscretizedMeasure, SceneryDistribution, discretize, levy_prokhorov,
                      magnify, scenery_dim, scenery_distribution, semiflow)

__version__ = "0.1.0"
