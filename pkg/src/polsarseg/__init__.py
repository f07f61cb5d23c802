"""Polarimetric SAR semantic segmentation.

Undecimated 3D Haar texture features over the coherency matrix, a
multinomial logistic classifier, and edge-aware MRF label refinement by
min-sum belief propagation, plus a synthetic speckle scene generator
and an end-to-end pipeline.
"""

from .core import (CoherencyImage, FeatureCube, LabelMap, PauliField,
                   ProbabilityField, argmax_labels, extract_pauli,
                   extract_raw_features)
from .classifier import (LinearModel, TrainConfig, TrainingSet, load_model,
                         predict_probabilities, sample_training_set,
                         save_model, train)
from .dwt import (HAAR_HIGH, HAAR_LOW, dwt2d_features, dwt_features,
                  mean_filter_abs, subcube_names, udwt_1d, udwt_3d_level)
from .fileio import (load_coherency, load_labels, save_coherency, save_labels,
                     write_indexed_png)
from .mrf import (BpDiagnostics, MrfProblem, bp_solve, compute_sigma,
                  count_discontinuities, edge_affinities, exhaustive_map,
                  pairwise_cost, problem_from_probabilities, total_energy)
from .pipeline import (DEFAULT_PALETTE, AblationResult, EvalReport,
                       PipelineConfig, PipelineResult, ablation_harness,
                       evaluate, export_label_png, run_pipeline)
from .synth import ClassModel, SceneSpec, default_class_bank, generate_scene

__version__ = "0.1.0"
