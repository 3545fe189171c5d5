"""latentshape: VAEs whose latent geometry is shaped by a deterministic map.

A Gaussian latent y feeds a fixed or trainable map g; the decoder sees
z = g(y).  The KL term stays the closed-form Gaussian one, while g moves
prior mass onto circles, glued curves, clusters, sparse axes, or ordered
coordinate chains.
"""

from .autodiff import Tensor, finite_diff_check, gradients
from .data import LabeledBatch, MogSpec, gen_synthetic, load_idx, read_csv, write_csv
from .divergence import (ElboEquivalenceResult, GaussianSpec,
                         InvertibleTestMap, check_affine_invariance,
                         check_elbo_equivalence, check_marginal_inequality,
                         kl_gaussian_closed_form)
from .mappings import Mapping, make_mapping
from .metrics import MetricReport, energy_distance, hoyer_score, mc_kl, mode_stats
from .nn import Adam, Mlp
from .rng import Rng, derive_seed, splitmix64
from .vae import (TrainConfig, TrainReport, TrainingDiverged, VaeModel,
                  elbo_y, generate, load_checkpoint, represent,
                  save_checkpoint, sparsity_penalty, train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "ElboEquivalenceResult", "GaussianSpec", "InvertibleTestMap",
    "LabeledBatch", "Mapping", "MetricReport", "Mlp", "MogSpec", "Rng",
    "Tensor", "TrainConfig", "TrainReport", "TrainingDiverged", "VaeModel",
    "check_affine_invariance", "check_elbo_equivalence",
    "check_marginal_inequality", "derive_seed", "elbo_y", "energy_distance",
    "finite_diff_check", "gen_synthetic", "generate", "gradients",
    "hoyer_score", "kl_gaussian_closed_form", "load_checkpoint", "load_idx",
    "make_mapping", "mc_kl", "mode_stats", "read_csv", "represent",
    "save_checkpoint", "sparsity_penalty", "splitmix64", "train", "write_csv",
]
