"""Semi-supervised co-training for hyperspectral image classification.

Two from-scratch learners — a GRU sequence classifier over pixel spectra and
a 3-D CNN over PCA-reduced patches — label unlabeled pixels for each other.
Sample selection combines prediction agreement, class-probability diversity
and a class-anchored k-means gate that keeps every update class-balanced;
inference fuses the learners by the product of their probability vectors.
"""

from .cotrain import (CoTrainConfig, CoTrainState, agreement_set, codecide,
                      cotrain_loop, dcpe_update, diversity_labels,
                      seeded_kmeans, select_updates)
from .dataio import (ExperimentConfig, SceneSpec, generate_synthetic,
                     load_config, load_cube, load_labels, parse_config,
                     save_cube, save_labels)
from .experiment import run_experiment
from .metrics import aa, confusion, kappa, oa, render_map
from .numerics import ParamStore, SeededRng, gradient_check, sgd_step
from .preprocess import (DataSplit, PcaModel, SplitSpec, extract_patch,
                         minmax_normalize, pca_fit, pca_transform,
                         spectral_sequence, split_data)

__version__ = "0.1.0"
