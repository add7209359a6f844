"""Identification of DC-motor-like LTI models from step-response records.

Two identification routes are provided: least squares on sampled states
(:mod:`motorfit.pinv`) and Markov-parameter/Hankel realization
(:mod:`motorfit.markov`). :mod:`motorfit.signals` conditions raw records and
:mod:`motorfit.sim` / :mod:`motorfit.servo` generate ground truth.
"""

from .document import FitReport, ModelDocument, compare
from .errors import (AmbiguousDominanceError, IdentificationError, InvalidInputError,
                     InvalidModelError, MotorfitError, OrderTooHighError, ParseError, SyncError)
from .lti import (StateSpaceModel, TransferFunction, cancel_near_pole_zero, dominant_pole_reduce,
                  feedback, impulse_response, poles, ss_to_tf, step_response, tf_to_ss_companion,
                  zeros)
from .markov import (MarkovSequence, estimate_markov, estimate_order, hankel_build,
                     identify_markov, realize_companion, truncated_response)
from .pinv import build_regression, first_order_fit, identify_pinv, pinv_solve
from .servo import Mode, ModeThresholds, ServoLoopConfig, classify_mode, simulate_servo_loop
from .signals import (SyncedRecord, differentiate, downsample, load_record_csv, load_trace_csv,
                      synchronize, unwrap_position, zero_shift)
from .sim import WaveformSpec, add_noise, generate_reference, simulate_lti
from .trace import Trace

__version__ = "0.1.0"
