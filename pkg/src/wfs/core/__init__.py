"""Grids, domains, multi-indices, finite differences and weighted seminorms."""
from wfs.core.domain import (DomainSpec, Region, ball, box_domain, closed_ball, closed_inf_ball,
                             empty_set, everything, full_space, half_space, product_domain,
                             unit_interval)
from wfs.core.fd import diff_axis, finite_difference, stencil_weights
from wfs.core.grid import Grid, GridFunction, rle_decode, rle_encode
from wfs.core.multiindex import MultiIndex, multi_indices
from wfs.core.seminorm import (SeminormSpec, coordinate_abs, curried_derivative, iterated_seminorm,
                               p_norm, sup_norm, weight_on_grid, weighted_seminorm_c,
                               weighted_seminorm_ck, weighted_seminorm_ckl)

__all__ = [
    "DomainSpec", "Region", "ball", "box_domain", "closed_ball", "closed_inf_ball", "empty_set",
    "everything", "full_space", "half_space", "product_domain", "unit_interval",
    "diff_axis", "finite_difference", "stencil_weights", "Grid", "GridFunction", "rle_decode",
    "rle_encode", "MultiIndex", "multi_indices", "SeminormSpec", "coordinate_abs",
    "curried_derivative", "iterated_seminorm", "p_norm", "sup_norm", "weight_on_grid",
    "weighted_seminorm_c", "weighted_seminorm_ck", "weighted_seminorm_ckl",
]
