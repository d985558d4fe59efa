"""Kernel graph convolutional networks for skeleton-based action recognition."""
from .config import RunConfig, load_config
from .errors import KgcnError
from .graph import LabeledGraph, adjacency_from_edges
from .kernels import KINDS, KernelSpec, gram, kernel_eval, kernel_eval_neural, sigma_quad
from .kpca import KpcaProjector, kpca_fit
from .model import KgcnModel, SgcnModel, init_kgcn, init_sgcn, loss_and_grad, param_count, predict_logits
from .skeleton import MinMaxScaler, build_graph, synth_dataset, synth_split
from .train import ablate, ablation_table, evaluate, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "KernelSpec",
    "KgcnError",
    "KgcnModel",
    "KpcaProjector",
    "LabeledGraph",
    "MinMaxScaler",
    "RunConfig",
    "SgcnModel",
    "ablate",
    "ablation_table",
    "adjacency_from_edges",
    "build_graph",
    "evaluate",
    "gram",
    "init_kgcn",
    "init_sgcn",
    "kernel_eval",
    "kernel_eval_neural",
    "kpca_fit",
    "load_checkpoint",
    "load_config",
    "loss_and_grad",
    "param_count",
    "predict_logits",
    "save_checkpoint",
    "sigma_quad",
    "synth_dataset",
    "synth_split",
    "train",
]
