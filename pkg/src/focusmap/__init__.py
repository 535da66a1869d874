"""Saliency annotation of imitation-learning demonstrations.

Key objects are chosen per sub-sequence by a vision-language model, tracked
with IoU + Hungarian association, and rendered as temporal multi-peak
Gaussian saliency maps. A reference penalty lets trainers check their
saliency regularizer.
"""
from .core import (FrameRecord, PipelineConfig, TrajectoryManifest, load_config, load_manifest, preset,
                   save_manifest)
from .detect import BBox, Detection, center, detect_frames
from .regularizer import FeatureMap, saliency_penalty, select_supervised_frames, upsample_bilinear
from .saliency import SaliencyMap, export_f32, export_png, generate, normalize, read_f32, render_raw
from .tracking import SubSequence, Track, associate, build_tracks, hungarian, iou, segment

__version__ = "0.1.0"
