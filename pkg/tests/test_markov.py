import numpy as np
import pytest

from motorfit.errors import IdentificationError, InvalidInputError, OrderTooHighError
from motorfit.lti import StateSpaceModel, TransferFunction, ss_to_tf
from motorfit.markov import (MarkovSequence, estimate_markov, estimate_order, hankel_build,
                             hankel_from, identify_markov, normalized_spectrum,
                             realize_companion, truncated_response)
from motorfit.trace import Trace
from oracles import hankel_spectrum, impulse_36, markov_powers, random_stable_system

# Spectra of the series fit (te = 2 s, 50 samples, 11 parameters) computed by
# the lstsq oracle on closed-form impulse responses; frozen here.
SPECTRUM_36 = (1.0, 0.271730, 0.0166509)
SPECTRUM_FIRST_ORDER = (1.0, 0.0884899, 0.00433368)


def sampled(fn, dt, duration):
    t = dt * np.arange(int(round(duration / dt)) + 1)
    return Trace(0.0, dt, fn(t))


# ---------------------------------------------------------- estimate_markov

def test_markov_parameters_of_36_system():
    m = estimate_markov(sampled(impulse_36, 0.002, 0.1), 1.0, 11, 0.1)
    assert m.q[:3] == pytest.approx([0, 36, -36], abs=0.01)
    assert m.lm == 11 and m.te == pytest.approx(0.1)


def test_ramp_gives_unit_second_parameter():
    m = estimate_markov(sampled(lambda t: 2.5 * t, 0.01, 1.0), 2.5, 3)
    assert np.allclose(m.q, [0, 1, 0], atol=1e-9)


def test_requires_rest():
    with pytest.raises(InvalidInputError):
        estimate_markov(sampled(lambda t: 1 + t, 0.01, 1.0), 1.0, 3)


def test_window_checks():
    v = sampled(lambda t: t, 0.01, 1.0)
    with pytest.raises(InvalidInputError):
        estimate_markov(v, 1.0, 11, te=0.05)
    with pytest.raises(InvalidInputError):
        estimate_markov(v, 1.0, 3, te=2.0)
    with pytest.raises(InvalidInputError):
        estimate_markov(Trace(0.5, 0.01, v.samples), 1.0, 3)
    with pytest.raises(InvalidInputError):
        estimate_markov(v, 0.0, 3)


def test_default_window_is_a_third():
    m = estimate_markov(sampled(lambda t: t, 0.01, 3.0), 1.0, 3)
    assert m.te == pytest.approx(1.0)


# ------------------------------------------------------- truncated response

def test_truncated_response_ramp():
    r = truncated_response(MarkovSequence([0, 1, 0], v0=2.0), 0.1, 1.0)
    assert np.allclose(r.samples, 2 * r.t)


def test_truncated_response_zero():
    r = truncated_response(MarkovSequence(np.zeros(5)), 0.1, 1.0)
    assert not r.samples.any()


def fit_error(te, horizon):
    dt = te / 50
    m = estimate_markov(sampled(impulse_36, dt, te), 1.0, 11, te)
    fine = sampled(impulse_36, 0.001, horizon)
    r = truncated_response(m, 0.001, horizon)
    return np.max(np.abs(r.samples - fine.samples)) / np.max(np.abs(fine.samples))


def test_fit_window_dichotomy():
    assert fit_error(2.0, 2.0) < 0.05
    assert fit_error(5.0, 5.0) > 0.25


def test_early_time_fidelity_improves_with_more_parameters():
    A = np.array([[0, 1], [-36, -1.0]])
    q = markov_powers(A, [0, 36], [1, 0], 11)
    v = sampled(impulse_36, 0.001, 0.3)
    errs = [np.max(np.abs(truncated_response(MarkovSequence(q[:lm]), 0.001, 0.3).samples
                          - v.samples)) for lm in range(5, 12)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


# ---------------------------------------------------------------- Hankel

def test_hankel_small():
    assert hankel_build(MarkovSequence([0, 36, -36.001])).tolist() == [[0, 36], [36, -36.001]]
    assert hankel_build(MarkovSequence([1, 0, 0])).tolist() == [[1, 0], [0, 0]]


def test_hankel_size_and_shift():
    q = np.arange(1.0, 12.0)
    h = hankel_build(MarkovSequence(q))
    assert h.shape == (6, 6) and h[2, 3] == q[5]
    assert hankel_from(q, 3, shift=1)[0].tolist() == [2, 3, 4]


def test_hankel_even_rejected():
    with pytest.raises(InvalidInputError):
        hankel_build(MarkovSequence(np.ones(4)))


# ------------------------------------------------------------- order rule

def spectrum_of(fn):
    m = estimate_markov(sampled(fn, 0.04, 2.0), 1.0, 11, 2.0, require_rest=False)
    return estimate_order(hankel_build(m))


def test_order_of_36_system():
    order, sn = spectrum_of(impulse_36)
    assert order == 2
    assert sn[:3] == pytest.approx(SPECTRUM_36, rel=1e-4)


def test_order_of_first_order_system():
    order, sn = spectrum_of(lambda t: np.exp(-t))
    assert order == 1
    assert sn[:3] == pytest.approx(SPECTRUM_FIRST_ORDER, rel=1e-4)


def test_spectra_match_oracle():
    t = 0.04 * np.arange(1, 51)
    from oracles import series_fit_lstsq
    for fn in (impulse_36, lambda x: np.exp(-x)):
        ours = spectrum_of(fn)[1]
        assert np.allclose(ours[:3], hankel_spectrum(series_fit_lstsq(t, fn(t), 11), 6)[:3],
                           rtol=1e-5)


@pytest.mark.parametrize("spectrum,order", [
    ((1.0, 0.426, 0.1, 0.009, 0.0009, 0.00009), 3),
    ((1.0, 0.29, 0.016, 0, 0, 0), 2),
    ((1.0, 0.088, 0.0043, 0, 0, 0), 1),
])
def test_order_from_printed_spectra(spectrum, order):
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    H = U @ np.diag(spectrum) @ U.T
    assert estimate_order(H)[0] == order


def test_order_zero_matrix():
    order, sn = estimate_order(np.zeros((3, 3)))
    assert order == 0 and not sn.any()


def test_order_needs_square_matrix():
    with pytest.raises(InvalidInputError):
        estimate_order(np.ones((1, 1)))
    with pytest.raises(InvalidInputError):
        estimate_order(np.ones((2, 3)))


@pytest.mark.parametrize("scale", [1e-6, -3.0, 250.0])
def test_order_scale_invariant(scale):
    q = markov_powers([[0, 1], [-36, -1]], [0, 36], [1, 0], 11)
    base = estimate_order(hankel_from(q, 6))
    scaled = estimate_order(hankel_from(scale * q, 6))
    assert base[0] == scaled[0] and np.allclose(base[1], scaled[1])


def test_normalized_spectrum_leading_one():
    assert normalized_spectrum(np.diag([4.0, 2.0]))[0] == 1.0


# ----------------------------------------------------------- realization

def test_realize_first_order_exact():
    q = markov_powers([[-2]], [3], [1], 2)
    h = ss_to_tf(realize_companion(MarkovSequence(q), 1))
    assert h.allclose(TransferFunction([3], [2, 1]), atol=1e-9)


def test_realize_36_from_fit():
    m = estimate_markov(sampled(impulse_36, 0.002, 0.1), 1.0, 11, 0.1)
    model = realize_companion(m, 2)
    assert np.allclose(model.A, [[0, 1], [-36, -1]], atol=0.05)
    assert np.allclose(model.B.ravel(), [0, 36], atol=0.05)
    assert model.C.ravel().tolist() == [1.0, 0.0]


def test_realize_too_high_order():
    q = markov_powers([[-1]], [1], [1], 11)
    with pytest.raises(OrderTooHighError):
        realize_companion(MarkovSequence(q), 3)


def test_realize_needs_enough_parameters():
    with pytest.raises(InvalidInputError):
        realize_companion(MarkovSequence([1, 2, 3]), 2)


@pytest.mark.parametrize("seed", range(12))
def test_markov_round_trip(seed):
    rng = np.random.default_rng(500 + seed)
    n = 1 + seed % 3
    A, B, _ = random_stable_system(rng, n)
    C = rng.normal(size=n)
    q = markov_powers(A, B, C, 2 * n)
    model = realize_companion(MarkovSequence(q), n)
    assert np.allclose(model.markov(2 * n), q, atol=1e-8, rtol=1e-8)
    h = ss_to_tf(model)
    assert h.order == n
    assert h.allclose(ss_to_tf(StateSpaceModel(A, B, C, 0.0)), atol=1e-8, rtol=1e-8)


# -------------------------------------------------------------- end to end

def test_identify_36_system():
    res = identify_markov(sampled(impulse_36, 0.014, 2.1), 1.0, 11, te=0.7)
    assert res.order == 2
    assert res.tf.den == pytest.approx([36, 1, 1], rel=0.005)
    assert res.tf.num[0] == pytest.approx(36, rel=0.005)
    assert np.all(np.abs(res.tf.num[1:]) < 0.005 * 36)


def test_identify_first_order():
    res = identify_markov(sampled(lambda t: np.exp(-t), 0.04, 6.0), 1.0, 11, te=2.0,
                          require_rest=False)
    assert res.order == 1
    assert res.tf.allclose(TransferFunction([1], [1, 1]), atol=0.01)


def test_identify_scales_by_step():
    a = identify_markov(sampled(impulse_36, 0.014, 2.1), 1.0, te=0.7)
    b = identify_markov(sampled(lambda t: 5.92 * impulse_36(t), 0.014, 2.1), 5.92, te=0.7)
    assert b.tf.allclose(a.tf, atol=1e-9, rtol=1e-9)


def test_identify_zero_step():
    with pytest.raises(InvalidInputError):
        identify_markov(sampled(impulse_36, 0.014, 2.1), 0.0)


def test_identify_failure_carries_spectrum():
    with pytest.raises(IdentificationError) as info:
        identify_markov(sampled(lambda t: t, 0.01, 3.0), 1.0, te=1.0, order=3)
    assert info.value.spectrum[0] == 1.0


def test_velocity_model():
    res = identify_markov(sampled(impulse_36, 0.014, 2.1), 1.0, te=0.7)
    vm = res.velocity_model
    assert np.allclose(vm.C, res.model.C @ res.model.A)
