"""Graph Fourier transforms with a choice of variation and vertex inner product."""

from .errors import (
    ConvergenceError,
    DimensionError,
    FormatError,
    GftkError,
    GraphError,
    NotPositiveDefiniteError,
)
from .graph import (
    Graph,
    OperatorKind,
    build_operator,
    knn_graph,
    path_graph,
    prenormalize_adjacency,
    random_graph,
    read_graph,
    ring_graph,
    spectral_radius,
    write_graph,
)
from .operators import (
    InnerProduct,
    QKind,
    VariationKind,
    VariationOperator,
    inner_product,
    q_inner,
    q_norm,
    q_norm_squared,
    variation_matrix,
    variation_operator,
    variation_value,
)
from .voronoi import UNIT_SQUARE, Rectangle, voronoi_areas
from .gft import (
    GftBasis,
    forward,
    fundamental_matrix,
    gft_basis,
    gft_basis_hpsd,
    gft_basis_nonhpsd,
    hilbert_map,
    inverse,
)

__version__ = "0.1.0"
