import numpy as np
import pytest

import phasegrid.autodiff as ad
from phasegrid.autodiff import (Tape, backward_pass, grad_check, value_of)
from phasegrid.errors import DomainError, ShapeError


def grad_of(f, x):
    """Gradient of a scalar-valued f at a single array input."""
    tape = Tape()
    leaf = tape.leaf(np.asarray(x, dtype=np.float64), name="x")
    loss = f(leaf)
    return backward_pass(tape, loss).get(leaf.nid)


def test_square_sum_gradient():
    g = grad_of(lambda x: ad.reduce_sum(ad.mul(x, x)), 3.0)
    assert float(g) == 6.0


def test_reuse_accumulates():
    # x appears on two paths; contributions must add, and each tape node
    # is visited exactly once on the way back
    g = grad_of(lambda x: ad.add(ad.mul(x, x), ad.sin(x)), 0.8)
    assert float(g) == pytest.approx(2 * 0.8 + np.cos(0.8), abs=1e-14)


def test_atan2_gradient_values():
    y0, x0 = 0.3, 0.7
    tape = Tape()
    y = tape.leaf(np.float64(y0), name="y")
    x = tape.leaf(np.float64(x0), name="x")
    grads = backward_pass(tape, ad.atan2(y, x))
    denom = x0 * x0 + y0 * y0
    assert float(grads[y.nid]) == pytest.approx(x0 / denom, abs=1e-15)
    assert float(grads[x.nid]) == pytest.approx(-y0 / denom, abs=1e-15)


def test_atan2_vs_finite_differences():
    rep = grad_check(
        lambda p: ad.reduce_sum(ad.atan2(p["y"], p["x"])),
        {"y": np.array([0.3, -1.1]), "x": np.array([0.7, 0.4])},
        n_coords=4,
    )
    assert rep.max_rel_err < 1e-8


def test_atan2_rejects_zero_vector():
    with pytest.raises(DomainError):
        ad.atan2(np.array([0.0]), np.array([0.0]))


def test_wrap_gradient_is_identity():
    g = grad_of(lambda x: ad.reduce_sum(ad.wrap_angle(x)),
                np.array([0.1, 5.0, -9.0]))
    assert np.array_equal(g, np.ones(3))


def test_loss_must_be_scalar_on_tape():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    with pytest.raises(ShapeError):
        backward_pass(tape, ad.mul(x, 2.0))
    other = Tape()
    y = other.leaf(np.array(1.0))
    with pytest.raises(ShapeError):
        backward_pass(tape, ad.mul(y, 1.0))


def test_mixed_tapes_rejected():
    a = Tape().leaf(np.zeros(2))
    b = Tape().leaf(np.zeros(2))
    with pytest.raises(ShapeError):
        ad.add(a, b)


# ---------------------------------------------------------------------------
# per-primitive finite-difference sweep
# ---------------------------------------------------------------------------


rng = np.random.default_rng(77)

PRIMITIVE_CASES = [
    ("add_broadcast",
     lambda p: ad.reduce_sum(ad.mul(ad.add(p["a"], p["b"]), p["a"])),
     {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal(4)}),
    ("sub_neg",
     lambda p: ad.reduce_sum(ad.mul(ad.sub(p["a"], ad.neg(p["b"])), p["b"])),
     {"a": rng.standard_normal(5), "b": rng.standard_normal(5)}),
    ("matmul",
     lambda p: ad.reduce_sum(ad.sin(ad.matmul(p["a"], p["b"]))),
     {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((4, 2))}),
    ("matmul_batched",
     lambda p: ad.reduce_sum(ad.matmul(p["a"], p["b"])),
     {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((4, 3))}),
    ("transpose_reshape",
     lambda p: ad.reduce_sum(
         ad.mul(ad.reshape(ad.transpose(p["a"], (1, 0, 2)), (12,)), p["w"])),
     {"a": rng.standard_normal((2, 3, 2)), "w": rng.standard_normal(12)}),
    ("concat",
     lambda p: ad.reduce_sum(ad.tanh(ad.concat([p["a"], p["b"]], -1))),
     {"a": rng.standard_normal((2, 3)), "b": rng.standard_normal((2, 2))}),
    ("broadcast_to",
     lambda p: ad.reduce_sum(ad.mul(ad.broadcast_to(p["a"], (4, 3)), p["w"])),
     {"a": rng.standard_normal((1, 3)), "w": rng.standard_normal((4, 3))}),
    ("reduce_mean_axis",
     lambda p: ad.reduce_sum(ad.cos(ad.reduce_mean(p["a"], axis=(0, 2)))),
     {"a": rng.standard_normal((2, 3, 2))}),
    ("reduce_sum_keepdims",
     lambda p: ad.reduce_sum(ad.mul(ad.reduce_sum(p["a"], axis=1, keepdims=True), p["a"])),
     {"a": rng.standard_normal((3, 4))}),
    ("trig",
     lambda p: ad.reduce_sum(ad.mul(ad.sin(p["a"]), ad.cos(p["a"]))),
     {"a": rng.uniform(-2, 2, (3, 3))}),
    ("softmax",
     lambda p: ad.reduce_sum(ad.mul(ad.softmax(p["a"], axis=-1), p["w"])),
     {"a": rng.standard_normal((3, 5)), "w": rng.standard_normal((3, 5))}),
    ("log_softmax",
     lambda p: ad.reduce_sum(ad.mul(ad.log_softmax(p["a"], axis=-1), p["w"])),
     {"a": rng.standard_normal((3, 5)), "w": rng.standard_normal((3, 5))}),
    ("atan2_field",
     lambda p: ad.reduce_sum(ad.atan2(p["y"], p["x"])),
     {"y": rng.uniform(0.2, 1.5, (2, 3)), "x": rng.uniform(0.2, 1.5, (2, 3))}),
    ("conv2d",
     lambda p: ad.reduce_sum(ad.mul(ad.conv2d(p["x"], p["k"]), p["w"])),
     {"x": rng.standard_normal((2, 4, 4, 3)),
      "k": rng.standard_normal((3, 3, 3, 2)),
      "w": rng.standard_normal((2, 4, 4, 2))}),
]


@pytest.mark.parametrize("name,f,params", PRIMITIVE_CASES,
                         ids=[c[0] for c in PRIMITIVE_CASES])
def test_primitive_matches_finite_differences(name, f, params):
    rep = grad_check(f, params, n_coords=min(60, sum(v.size for v in params.values())))
    assert rep.max_rel_err < 1e-6, rep.to_dict()


def test_grad_check_linear_is_exact():
    """A purely linear map gradient-checks to near machine precision."""
    w = rng.standard_normal((6, 3))
    rep = grad_check(
        lambda p: ad.reduce_sum(ad.matmul(p["x"], w)),
        {"x": rng.standard_normal((2, 6))},
        n_coords=12,
    )
    assert rep.max_rel_err < 1e-10


def test_grad_check_report_fields():
    rep = grad_check(
        lambda p: ad.reduce_sum(ad.mul(p["x"], p["x"])),
        {"x": np.arange(1.0, 5.0)},
        n_coords=4,
    )
    assert rep.n_coords == 4
    assert rep.passed(1e-6)
    d = rep.to_dict()
    assert {"max_rel_err", "mean_rel_err", "n_coords", "worst"} <= set(d)


def test_conv2d_identity_kernel():
    x = rng.standard_normal((1, 5, 5, 2))
    k = np.zeros((3, 3, 2, 2))
    k[1, 1] = np.eye(2)  # center tap copies channels through
    out = ad.conv2d(x, k)
    assert np.max(np.abs(out - x)) < 1e-14


def test_values_pass_through_without_tape():
    # primitives on plain arrays return plain arrays, no taping
    out = ad.add(np.ones(3), np.ones(3))
    assert isinstance(out, np.ndarray)
    assert value_of(out) is out
