"""Asymptotic phase estimation of limit-cycle oscillators from data via a
series expansion of the temporal 1-form."""
from .dataset import Segment, TimeSeriesDataset
from .errors import FormPhaseError
from .fourier import FourierSeries, fit_fourier
from .rectify import (LimitCycleModel, RectificationMap, center_and_rotate,
                      fit_limit_cycle, wrap)
from .form import (BasisSpec, FormPhaseModel, basis_differential, basis_scalar,
                   dtheta_pairing, fit, fit_form_phase)
from .contour import isochrons
from .sde import sde_integrate
from .baselines import (EventPhaseModel, PhaseComparisonReport,
                        circular_residual_variance, compare_estimators,
                        event_phase)
from .preprocess import (FilterBankConfig, SmootherConfig, filter_bank_embed,
                         kalman_smooth, relative_phase, zscore_pcs)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
