"""Distribution functions used by the tests.

Thin wrappers over :mod:`scipy.special` so that callers get plain floats
for scalar input and the argument order reads naturally.
"""
import numpy as np
from scipy import special


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def normal_cdf(x):
    return _out(special.ndtr(x))


def normal_sf(x):
    return _out(special.ndtr(-np.asarray(x, dtype=float)))


def t_cdf(x, df):
    return _out(special.stdtr(df, x))


def t_sf(x, df):
    return _out(special.stdtr(df, -np.asarray(x, dtype=float)))


def chi2_cdf(x, df):
    return _out(special.chdtr(df, np.maximum(x, 0.0)))


def chi2_sf(x, df):
    return _out(special.chdtrc(df, np.maximum(x, 0.0)))


def f_cdf(x, dfn, dfd):
    return _out(special.fdtr(dfn, dfd, np.maximum(x, 0.0)))


def f_sf(x, dfn, dfd):
    return _out(special.fdtrc(dfn, dfd, np.maximum(x, 0.0)))
