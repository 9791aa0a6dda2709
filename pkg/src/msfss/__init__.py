"""Multi-scale base/meta ensemble few-shot segmentation."""
__version__ = "0.1.0"
