from .fits import (fit_g2, fit_gaussian, fit_lifetime, fit_polarization, fit_saturation,
                   fit_spectrum)
from .models import (G2Model, PolarizationModel, SaturationModel, SpectrumModel, exp_gauss,
                     g2_convolved, g2_ideal, gaussian_model, lifetime_model, polarization_model,
                     saturation_model, spectrum_model)
from .optimizer import FitResult, central_jacobian, fd_jacobian, least_squares

__all__ = [
    "FitResult", "least_squares", "fd_jacobian", "central_jacobian",
    "fit_g2", "fit_lifetime", "fit_saturation", "fit_polarization", "fit_gaussian",
    "fit_spectrum",
    "G2Model", "SaturationModel", "PolarizationModel", "SpectrumModel",
    "g2_ideal", "g2_convolved", "exp_gauss", "lifetime_model", "saturation_model",
    "polarization_model", "gaussian_model", "spectrum_model",
]
