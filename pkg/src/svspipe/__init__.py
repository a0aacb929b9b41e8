"""Detection, classification and tracking for background-filtering vision sensors."""
from .core import BoundingBox, Moments, MotionBitmap, ProjectionPair, iou, moments, project
from .detector import Blob, compare_detections, connected_components, detect
from .classifier import SvmModel, extract_features, svm_predict, svm_train, synth_dataset
from .tracker import EvalReport, Tracker, TrackerConfig, eval_error
from .pipeline import PipelineConfig, bench, run_pipeline

__version__ = "0.1.0"
