from .bundle import CHANNELS, GROUPS, NAMES, BundleError, ImagePair, ModalityBundle, load_bundle, save_bundle
from .corpus import generate_corpus, load_corpus
from .extractors import (
    depth_normals_modalities,
    edges_modality,
    embedding_modality,
    extract_bundle,
    ntsc_luminance,
    palette_modality,
    segments_modality,
)
from .synth import DegradeParams, degrade, procedural_image, read_png, sample_params, write_png

__all__ = [
    "CHANNELS",
    "GROUPS",
    "NAMES",
    "BundleError",
    "DegradeParams",
    "ImagePair",
    "ModalityBundle",
    "degrade",
    "depth_normals_modalities",
    "edges_modality",
    "embedding_modality",
    "extract_bundle",
    "generate_corpus",
    "load_bundle",
    "load_corpus",
    "ntsc_luminance",
    "palette_modality",
    "procedural_image",
    "read_png",
    "sample_params",
    "save_bundle",
    "segments_modality",
    "write_png",
]
