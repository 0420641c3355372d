"""Species-sampling chain simulators and Monte Carlo verification tools."""

from .engine import (
    BaseMeasure,
    GosRule,
    PredictionRule,
    Trajectory,
    WeightProcess,
    block_weights,
    gos_weights,
    gos_weights_closed_form,
    rng_for_replicate,
    sample_next,
    simulate,
    uniform01,
)
from .errors import ConfigError, DomainError, RuleError, SpeciesmcError, WeightError
from .families import (
    Family,
    FamilySpec,
    WeightDist,
    blackwell_macqueen,
    deterministic_rn,
    markov_chain_y,
    markov_family,
    parse_weight_dist,
    point_mass,
    power_decay,
    reinforced_bm,
    reinforced_polya,
    shifted_exponential,
    two_param_pd_generalized,
    two_point,
    uniform_weights,
)
from .partition import (
    PartitionState,
    augment_into_block,
    augment_new_block,
    enumerate_partitions,
    induced_partition,
)

__version__ = "0.1.0"
