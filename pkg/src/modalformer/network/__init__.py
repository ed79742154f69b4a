from .aux_unet import AuxUNet, Taps, aux_unet_forward
from .blocks import FFN, MMTB, ffn_forward, mmtb_forward
from .checkpoint import CheckpointError, load_model, load_params, read_tensors, save_model, write_tensors
from .layers import Conv, Deconv, LayerNorm, Module
from .model import ModalFormer, ModelConfig, as_tensors, build, enhance, modalformer_forward

__all__ = [
    "AuxUNet",
    "CheckpointError",
    "Conv",
    "Deconv",
    "FFN",
    "LayerNorm",
    "MMTB",
    "ModalFormer",
    "ModelConfig",
    "Module",
    "Taps",
    "as_tensors",
    "aux_unet_forward",
    "build",
    "enhance",
    "ffn_forward",
    "load_model",
    "load_params",
    "mmtb_forward",
    "modalformer_forward",
    "read_tensors",
    "save_model",
    "write_tensors",
]
