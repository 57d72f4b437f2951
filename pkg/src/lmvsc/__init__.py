"""Large-scale multi-view subspace clustering with learned anchor graphs."""

from .anchor_graph import (AnchorGraph, AnchorSet, QpSettings, gaussian_anchor_graph,
                           learn_anchor_graph, project_simplex, select_anchors,
                           solve_anchor_coeffs)
from .dataset import (LabelVector, MultiViewDataset, NoiseSpec, ViewMatrix, add_noise,
                      load_multiview, load_view_csv, standardize, synth_multiview)
from .embedding import ConcatGraph, Embedding, NormalizedGraph, concat_views, embed, normalize_graph
from .errors import (ConvergenceError, DegenerateGraph, DimensionMismatch, LengthMismatch,
                     ParseError, RankDeficient, SizeGuard)
from .kmeans import KMeansConfig, KMeansModel, assign, kmeans_fit
from .metrics import accuracy, nmi, purity
from .pipeline import (ClusteringResult, GridSpec, LmvscConfig, grid_search, lmvsc_fit,
                       single_view_fit)

__version__ = "0.1.0"
