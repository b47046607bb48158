import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairegm import autodiff as ad
from fairegm.errors import InvalidArgumentError, UnknownParameterError, UnsupportedOperationError
from fairegm.linalg import SparseMatrix, make_rng
from fairegm.losses import pos_weight, reconstruction_loss
from fairegm.model import GraphInputs, Variant, init_params, record_forward
from fairegm.synthetic import random_graph

from helpers import central_difference, gradient_instance, loss_fn, relative_error, tape_grads


def test_sum_forward_and_gradient():
    tape = ad.Tape()
    w = tape.param("w", [[1.0, 2.0], [3.0, 4.0]])
    out = ad.sum(w)
    assert float(out.value) == 10.0
    assert np.array_equal(tape.backward(out)["w"], np.ones((2, 2)))


def test_square_at_three():
    tape = ad.Tape()
    x = tape.param("x", [[3.0]])
    grads = tape.backward(ad.sum(x * x), wrt=["x"])
    assert grads["x"][0, 0] == 6.0


def test_operator_sugar():
    tape = ad.Tape()
    a = tape.param("a", [[1.0, 2.0]])
    b = tape.const([[3.0, 5.0]])
    out = ad.sum((a + b) * a) - ad.sum(b @ a.T) * 0.5
    grads = tape.backward(out)
    # d/da [ sum(a^2 + a*b) - 0.5 * b.a ] = 2a + b - 0.5 b
    assert np.allclose(grads["a"], 2 * np.array([[1.0, 2.0]]) + 0.5 * np.array([[3.0, 5.0]]))


def test_unsupported_ops():
    tape = ad.Tape()
    a = tape.param("a", [[1.0]])
    with pytest.raises(UnsupportedOperationError):
        a / 2
    with pytest.raises(UnsupportedOperationError):
        a ** 2
    with pytest.raises(UnsupportedOperationError):
        np.exp(a)
    with pytest.raises(UnsupportedOperationError):
        tape.apply("softmax", a)
    assert float(tape.apply("sum", a).value) == 1.0


def test_backward_restricted_and_unknown():
    tape = ad.Tape()
    w = tape.param("w", np.ones((2, 2)))
    v = tape.param("v", np.ones((2, 2)))
    out = ad.sum(ad.hadamard(w, v))
    grads = tape.backward(out, wrt=["w"])
    assert set(grads) == {"w"}
    with pytest.raises(UnknownParameterError):
        tape.backward(out, wrt=["missing"])
    with pytest.raises(InvalidArgumentError):
        tape.backward(w)


def test_recorded_recon_equals_loss_module():
    rng = make_rng(4)
    g = random_graph(4, 3, 2, rng, p=0.6)
    phi = rng.normal(size=(4, 2))
    tape = ad.Tape()
    node = ad.weighted_bce_mean(tape.param("phi", phi), g.adjacency(), pos_weight(g))
    assert float(node.value) == reconstruction_loss(phi, g)
    again = ad.weighted_bce_mean(ad.Tape().param("phi", phi), g.adjacency(), pos_weight(g))
    assert float(again.value) == float(node.value)


def _check_all_grads(variant, seed, kinds=("recon", "divergence"), **kw):
    g, inputs, params = gradient_instance(variant, seed, **kw)
    for kind in kinds:
        grads = tape_grads(kind, g, inputs, params)
        assert set(grads) == set(params.tensors())
        f = loss_fn(kind, g, inputs, params)
        for name, grad in grads.items():
            def at(x, name=name):
                t = dict(params.tensors())
                t[name] = x
                return f(t)
            fd = central_difference(at, params.tensors()[name])
            assert relative_error(grad, fd) <= 1e-4, (variant, kind, name)


def test_recon_gradient_five_nodes():
    _check_all_grads("Base", 11, kinds=("recon",), n_max=5)


def test_divergence_gradient_gfo():
    _check_all_grads("GFO", 12, kinds=("divergence",), n_max=8)


@pytest.mark.parametrize("variant", ["Base", "GFO", "CFO(2)", "FEW", "AUG(3)"])
def test_gradients_small_dims(variant):
    _check_all_grads(variant, 100, kinds=("recon", "divergence", "augmented"), n_max=12, m_max=5,
                     hidden=4, dim=4)


def test_relu_subgradient_zero_at_kink():
    tape = ad.Tape()
    x = tape.param("x", [[0.0, 1.0, -1.0]])
    assert np.array_equal(tape.backward(ad.sum(ad.relu(x)))["x"], [[0.0, 1.0, 0.0]])


def test_sigmoid_backward_uses_forward_value():
    tape = ad.Tape()
    x = tape.param("x", [[0.0, 800.0]])
    g = tape.backward(ad.sum(ad.sigmoid(x)))["x"]
    assert g[0, 0] == 0.25 and g[0, 1] == 0.0


def test_spmm_and_weighted_spmm_gradients():
    rng = make_rng(9)
    a = SparseMatrix((4, 4), [0, 1, 2, 3, 0], [1, 0, 3, 2, 0], [0.5, 0.5, 2.0, 1.0, 1.0])
    x0 = rng.normal(size=(4, 3))
    w0 = rng.normal(size=(a.nnz, 1))

    def value(x, w):
        t = ad.Tape()
        return float(ad.sum(ad.sigmoid(ad.weighted_spmm(a, t.param("w", w), ad.spmm(a, t.param("x", x))))).value)

    tape = ad.Tape()
    out = ad.sum(ad.sigmoid(ad.weighted_spmm(a, tape.param("w", w0), ad.spmm(a, tape.param("x", x0)))))
    grads = tape.backward(out)
    assert relative_error(grads["x"], central_difference(lambda x: value(x, w0), x0)) < 1e-7
    assert relative_error(grads["w"], central_difference(lambda w: value(x0, w), w0)) < 1e-7


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9))
def test_blocked_losses_match_unblocked(seed, block):
    rng = make_rng(seed)
    g = random_graph(int(rng.integers(3, 25)), 3, 3, rng, p=0.3)
    if g.num_edges == 0:
        return
    phi = rng.normal(size=(g.n, 3)) * 2
    for fn in (lambda t, b: ad.weighted_bce_mean(t, g.adjacency(), pos_weight(g), b),
               lambda t, b: ad.kl_normalized_rows(t, g.groups, g.k, "sum", b)):
        full_tape, blk_tape = ad.Tape(), ad.Tape()
        full = fn(full_tape.param("p", phi), g.n)
        blk = fn(blk_tape.param("p", phi), block)
        assert abs(float(full.value) - float(blk.value)) <= 1e-10
        assert np.allclose(full_tape.backward(full)["p"], blk_tape.backward(blk)["p"], atol=1e-10, rtol=0)


def test_non_finite_value_rejected():
    tape = ad.Tape()
    x = tape.param("x", [[1e308]])
    with np.errstate(over="ignore"), pytest.raises(InvalidArgumentError, match="non-finite"):
        ad.scale(x, 10.0)


def test_mixed_tapes_rejected():
    a = ad.Tape().param("a", [[1.0]])
    b = ad.Tape().param("b", [[1.0]])
    with pytest.raises(InvalidArgumentError):
        ad.add(a, b)
