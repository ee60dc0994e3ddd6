"""Exact Wasserstein losses for histograms over circular (periodic) labels."""

from .errors import (CircWassError, DivergedLoss, NotConverged, NumericalError, NumericalFailure,
                     ValidationError)
from .ground_metric import (GroundMetricSpec, MetricKind, arc_length, arc_length_matrix,
                            blend_adaptive, blend_schedule, centroid_distances, ground_matrix,
                            line_ground_matrix, rescale_distances)
from .histogram import (CumulativeDistribution, Histogram, cumulative, load_histogram,
                        new_histogram, one_hot, quantile, rotate, uniform)
from .labels import Family, SmoothingSpec, conservative_label, conservative_labels
from .metrics import acc_at, maad, mean_ae, median_ae
from .oracle import lp_exact, sinkhorn_approx
from .result import LossValue, TransportPlan
from .solvers import (QuantilePrecision, convex_circular, convex_circular_grad, cross_entropy,
                      dispatch_grad, dispatch_loss, line_wasserstein, linear_circular,
                      linear_circular_grad, one_hot_grad, one_hot_loss, step_l1, step_l1_grad)
from .toy import NoiseSpec, SyntheticDataset, ToyModel, gen_synthetic, parse_loss, train_toy

__version__ = "0.1.0"
