"""Corank-2 fat distributions on R^6 and horizontal immersions of the unit disc."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AdmissibilityError,
    CapabilityError,
    ConfigurationError,
    DegeneracyError,
    DegenerateDistributionError,
    DiscretizationError,
    DomainError,
    EllipticityError,
    EvaluationError,
    FatDiscError,
    FrameError,
    ParseError,
    ScaleError,
    StagnationError,
)
from .geometry import (  # noqa: E402
    CorankTwoDistribution,
    DifferentialOneForm,
    VectorField,
    bracket_step_two,
    check_reeb_directions,
    check_type_constraints,
    compatible_acs,
    fatness_via_phi,
    from_structure_constants,
    holomorphic_contact_model,
    integrable_example,
    is_fat_at,
    kernel_basis,
    radon_hurwitz,
    symplectic_complement,
)
from .mesh import (  # noqa: E402
    DiscMesh,
    MeshMap,
    OneFormField,
    build_disc_mesh,
    graded_norm,
    horizontality_operator,
    pullback,
)
from .admissibility import admissibility_check, coefficient_fields  # noqa: E402
from .linearized import (  # noqa: E402
    BoundaryData,
    SectionAlongMap,
    apply_linearization,
    right_inverse,
    solve_reduced_dirichlet,
    tame_estimate_probe,
)
from .horizontal import (  # noqa: E402
    SolveOptions,
    homotopy_family,
    infinitesimal_order,
    make_cutoff,
    newton_invert,
)
