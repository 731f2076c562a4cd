"""medtraj: drug-utilization state sequences, OM dissimilarities, clustering,
and survival statistics for longitudinal cohorts."""

from .cluster import (
    ClusterPartition,
    Dendrogram,
    PartitionQuality,
    asw,
    cut_tree,
    hubert_c,
    medoids_of,
    pam_refine,
    pbc,
    select_k,
    ward_hierarchy,
)
from .config import RunConfig
from .descriptives import StateDistribution, TransitionMatrix, state_distribution, transition_rates
from .dissim import (
    CostModel,
    DissimilarityMatrix,
    constant_costs,
    distance_matrix,
    om_distance,
    trate_costs,
)
from .errors import MedtrajError, ParseError, ValidationError
from .ingest import (
    CohortConfig,
    CoverageTimeline,
    PatientRecord,
    PurchaseEvent,
    apply_cohort_filters,
    build_channel_sequence,
    parse_inputs,
    resolve_overlaps,
)
from .sequences import (
    Alphabet,
    SequenceSet,
    StateSequence,
    combine_channels,
    extended_alphabet,
    split_channels,
    validate_set,
)
from .survstats import (
    CoxModelFit,
    SurvivalRecord,
    build_design,
    compare_clusters,
    cox_fit,
    cox_partial_loglik,
    kruskal_wallis,
    survival_from_patients,
    wilcoxon_rank_sum,
)
from .synthcohort import (
    ArchetypeSpec,
    GeneratorConfig,
    adjusted_rand_index,
    default_archetypes,
    generate,
    generate_cohort,
)

__version__ = "0.1.0"
