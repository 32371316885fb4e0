"""Contrastive image-complexity toolkit."""

from .imagecore import GrayImage, Image, Rect, crop, decode_image, resize, to_grayscale
from .rcm import CropPlan, MixedSample, expand_dataset, mix_pairs, plan_crops, rcm_positives
from .heuristics import compression_ratio, edge_density, shannon_entropy
from .nn import EncoderParams, backward, encoder_forward, sgd_step
from .moco import NegativeQueue, TrainConfig, info_nce, momentum_update, multi_positive_loss, train
from .finetune_eval import FinetuneConfig, RegressionHead, finetune, pearson, predict_ic, spearman
from .icd import fit_normal, histogram, score_dataset, stratify
from .fusion import FeatureMap, extract_stage_maps, fuse

__version__ = "0.1.0"
