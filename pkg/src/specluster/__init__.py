"""Kernel spectral clustering toolkit.

Core model training with out-of-sample extension, soft assignments, model
selection (BLF, AMS, modularity), community detection with representative
subset extraction, temporal clustering with memory, incremental streaming
clustering, and the usual cluster quality measures.
"""

from .data import (
    DataMatrix,
    Graph,
    LabeledDataset,
    Partition,
    Snapshot,
    SnapshotSequence,
    adjacency_rows,
    load_edge_list,
    window_concat,
)
from .generators import gen_drift_sequence, gen_gaussian_mixture, planted_partition
from .kernels import KernelMatrix, KernelSpec, community_kernel, degree_vector, kernel_eval, kernel_matrix
from .ksc import KscModel, ScoreMatrix, assign_hamming, classical_sc, project, train_ksc
from .metrics import ari, conductance, dbi, modularity, nmi, silhouette
from .model_selection import GridSpec, SelectionResult, blf, modularity_select, select
from .community import CommunityResult, EfConfig, detect_communities, ef_subset, expansion_factor
from .mksc import MkscState, align_snapshots, mksc_step, run_mksc_sequence, smoothed_quality, track_clusters
from .iksc import IkscModel, incremental_kmeans, init_iksc, iksc_update, run_stream
from .sksc import PrototypeSet, SoftPartition, ams, compute_prototypes, soft_assign, sksc_full

__version__ = "0.1.0"
