"""De-aliasing of undersampled MRI with a conditional GAN, on a numpy autodiff core."""

__version__ = "0.1.0"
