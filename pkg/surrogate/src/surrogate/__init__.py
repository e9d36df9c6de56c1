"""Image-regression surrogate for virtual tensile test results.

Trains a small CNN to predict the effective Young's modulus and proof
stress of a fibre composite directly from its rasterized cross-section,
using the labelled dataset emitted by the generation pipeline (labels.csv,
manifest.json and the PNGs are the entire input contract). Prediction
takes milliseconds instead of a finite element solve, and integrated
gradients and gradient SHAP attribute each prediction back to pixels.
"""

__version__ = "0.1.0"
