"""Raw-audio dog vocalization emotion classifier built on a from-scratch numpy CNN."""

from .audio_io import AudioClip, emit_wav, parse_wav, resample_linear
from .data import EmotionClass, LabeledFragment, SplitConfig, segment_clip, stratified_split, synth_dataset
from .evaluation import build_report, confusion, render_report
from .features import MfccConfig, mfcc
from .model import BarkNet, BarkNetConfig, load_checkpoint, save_checkpoint
from .training import TrainConfig, evaluate_split, fit

__version__ = "0.1.0"
