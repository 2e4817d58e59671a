"""Outfit compatibility engine.

Learns item embeddings in a shared style space, scores item sets by mean
pairwise dot product, generates outfits by beam search from a seed item,
and evaluates itself offline (AUC on leak-free splits) and online (human
ratings under a two-way random-effects model).
"""

from .catalog import (
    Catalog,
    CatalogError,
    Item,
    ItemFeatures,
    Outfit,
    OutfitSet,
    OutfitTemplate,
    load_catalog,
    load_outfits,
    save_catalog,
    save_outfits,
    validate_outfit,
)
from .embedder import (
    EmbedderArch,
    EmbedderParams,
    backward_gradients,
    embed_batch,
    embed_infer,
    init_params,
    load_params,
    save_params,
)
from .scorer import ScoredOutfit, outfit_logit, outfit_score, score_outfit, sigmoid
from .sampler import StylingDistribution, build_styling_distribution, negative_sample
from .splitter import (
    CoOccurrenceGraph,
    SplitAssignment,
    assemble_split,
    assign_outfits,
    build_graph,
    louvain_partition,
    modularity,
)
from .synth import SynthConfig, generate_synthetic_dataset, load_word_vectors
from .trainer import TrainingConfig, ablation_study, bce_loss, evaluate_auc, train
from .generator import (
    complete_outfit_beam,
    exhaustive_complete,
    template_frequencies,
)
from .analysis import (
    ABTestResult,
    RatingRecord,
    ab_test_analysis,
    nearest_in_style,
    project_2d,
    roc_auc,
)

__version__ = "0.1.0"
