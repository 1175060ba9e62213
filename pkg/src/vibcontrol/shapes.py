"""Envelope and update-shape functions of time (atomic units)."""
import numpy as np

__all__ = ["gaussian", "gaussian_train", "sin2", "sin_shape", "flat", "SHAPES"]

_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


def gaussian(t, t0, fwhm):
    """Unit-peak Gaussian whose *intensity* profile has full width ``fwhm``."""
    # amplitude sigma is sqrt(2) larger than the intensity sigma
    sigma = np.sqrt(2.0) * fwhm * _FWHM_TO_SIGMA
    return np.exp(-0.5 * ((np.asarray(t) - t0) / sigma) ** 2)


def gaussian_train(t, centers, fwhm):
    """Sum of unit-peak Gaussians, clipped to at most one."""
    s = sum(gaussian(t, c, fwhm) for c in centers)
    return np.minimum(s, 1.0)


def sin2(t, t_final):
    """``sin(pi t / T)**2``, zero at both ends."""
    return np.sin(np.pi * np.asarray(t) / t_final) ** 2


def sin_shape(t, t_final):
    """``sin(pi t / T)``; the restart shape used after time compression."""
    return np.sin(np.pi * np.asarray(t) / t_final)


def flat(t, t_final=None):
    return np.ones_like(np.asarray(t, dtype=float))


SHAPES = {"sin2": sin2, "sin": sin_shape, "flat": flat}
