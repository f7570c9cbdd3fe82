"""czlab: multi-parameter singular integrals, product BMO, iterated commutators."""

from .lattice import (
    GridFunction,
    ProductLattice,
    StructureError,
    fft_forward,
    fft_inverse,
    inner_product,
    lp_norm,
    read_czl1,
    write_czl1,
)
from .wavelets import (
    DyadicRectangle,
    Signature,
    WaveletCoefficients,
    haar_inverse,
    haar_transform,
    project_onto_collection,
    scaling_projection,
)
from .multipliers import (
    Cone,
    ConePair,
    MultiplierSymbol,
    apply_multiplier,
    riesz_symbol,
)
from .families import SymbolFamily, approximate_symbol, build_h_CD, close_family
from .bmo import (
    RectangleCollection,
    bmo_minus_one,
    damped_projection,
    journe_enlarge,
    product_bmo_lower,
    rectangular_bmo,
)
from .commutator import (
    iterated_commutator_apply,
    operator_norm,
    pi_form,
    select_cones,
    sup_commutator_norm,
)
from .experiments import ExperimentConfig, equivalence_sweep, test_function_experiment

__version__ = "0.1.0"
