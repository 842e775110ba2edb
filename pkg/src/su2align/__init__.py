"""Rotation estimation via special unitary matrices.

Optimal and closed-form solvers for the weighted vector-alignment problem,
differentiable rotation-representation maps, and a reproducible Monte-Carlo
benchmark CLI (`bench`).
"""

from .closedform import (
    DEGENERACY_TOL,
    align_cross,
    average_two_quats,
    degenerate_two_point,
    kernel_rows,
    one_point_align,
    two_point_exact,
    two_point_unweighted,
    two_point_weighted,
)
from .errors import (
    AntipodalSingularity,
    ConfigError,
    DegenerateAlgebraic,
    DegenerateAxes,
    DegenerateFrame,
    DegenerateInput,
    EigGapTooSmall,
    NonConvergence,
    SingularMobius,
    Su2AlignError,
)
from .learnmaps import (
    quadmobius_assemble,
    quadmobius_backward,
    quadmobius_extract,
    quadmobius_forward,
    twovec_backward,
    twovec_forward,
)
from .linalg4 import eigh_herm4, eigh_sym4, svd_c2
from .projective import (
    chi_embed,
    chi_unembed,
    mobius_apply,
    projective_chordal_sq,
    stereo_project,
    stereo_unproject,
    su2_conjugate,
)
from .quat import (
    IDENTITY_QUAT,
    ObservationSet,
    apply_frame_fix,
    quat_angular_error,
    quat_canonical,
    quat_compose,
    quat_conjugate,
    quat_from_su2,
    quat_geodesic_error,
    quat_normalize,
    quat_to_rotmat,
    rotate_vec,
    su2_from_quat,
    undo_frame_fix,
)
from .wahba import (
    StereoObservationSet,
    WahbaSolution,
    alignment_loss,
    build_Aprime_general,
    build_Aprime_row,
    build_D_general,
    build_D_row,
    build_Q,
    solve_GM,
    solve_GP,
    solve_GS,
    solve_davenport,
)

__version__ = "0.1.0"
