import numpy as np
import pytest

from deepgalerkin.network import (
    CheckpointError,
    DerivativeOrderError,
    LayoutError,
    NetworkSpec,
    forward,
    init_params,
    input_derivatives,
    load_checkpoint,
    n_params,
    parse_layout,
    save_checkpoint,
    tag_closure,
    unpack_params,
)


def spec_of(layout, units, acts, dim=2):
    return NetworkSpec(layout=layout, units=tuple(units), activations=tuple(acts), input_dim=dim)


SMALL = spec_of("fa f", (8, 1), ("tanh",))
RESNET = spec_of("faR fa fa+ f", (10, 25, 10, 1), ("tanh",) * 3, dim=3)


# -- layout ----------------------------------------------------------------------

def test_single_affine_map():
    spec = spec_of("f", (1,), (), dim=2)
    assert n_params(spec) == 3
    theta = np.array([2.0, -1.0, 0.5])  # W = [[2], [-1]], b = [0.5]
    pts = np.array([[1.0, 1.0], [0.0, 2.0]])
    assert np.allclose(forward(spec, theta, pts), [[1.5], [-1.5]])


def test_identity_dense_layer():
    spec = spec_of("f", (2,), (), dim=2)
    theta = np.concatenate([np.eye(2).ravel(), np.zeros(2)])
    pts = np.random.default_rng(0).random((4, 2))
    assert np.array_equal(forward(spec, theta, pts), pts)


def test_param_count_matches_dense_shapes():
    assert n_params(RESNET) == (3 * 10 + 10) + (10 * 25 + 25) + (25 * 10 + 10) + (10 * 1 + 1)


@pytest.mark.parametrize("layout, units, acts", [
    ("fa f", (8, 4, 1), ("tanh",)),          # unit count mismatch
    ("fa fa f", (8, 4, 1), ("tanh",)),       # activation count mismatch
    ("fq f", (8, 1), ("tanh",)),             # unknown symbol
    ("fa f", (8, 1), ("softplus",)),         # unknown activation
    ("faR faR f", (8, 8, 1), ("tanh",) * 2),  # nested residual
    ("fa fa+ f", (8, 8, 1), ("tanh",) * 2),  # '+' without an open R
    ("faR f+ f", (8, 4, 1), ("tanh",)),      # width mismatch at the join
    ("faR fa f", (8, 8, 1), ("tanh",) * 2),  # unclosed residual
    ("a", (), ("tanh",)),                    # no dense layer at all
])
def test_layout_errors(layout, units, acts):
    with pytest.raises(LayoutError, match="layout|activation"):
        parse_layout(spec_of(layout, units, acts))


def test_unmatched_residual_message_mentions_layout():
    with pytest.raises(LayoutError, match="layout"):
        parse_layout(spec_of("faR fa f", (8, 8, 1), ("tanh",) * 2))


# -- initialization ----------------------------------------------------------------

def test_init_is_seeded_and_bounded():
    a = init_params(SMALL, seed=5)
    b = init_params(SMALL, seed=5)
    c = init_params(SMALL, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    weights, biases = unpack_params(SMALL, a)[0]
    assert np.array_equal(biases, np.zeros(8))
    bound = np.sqrt(6.0 / (2 + 8))
    assert np.all(np.abs(weights) <= bound)
    # dense output layer init is bounded too
    w2, b2 = unpack_params(SMALL, a)[1]
    assert np.all(np.abs(w2) <= np.sqrt(6.0 / (8 + 1))) and b2 == 0.0


def test_zero_theta_gives_zero_output():
    theta = np.zeros(n_params(SMALL))
    pts = np.random.default_rng(1).random((6, 2))
    assert np.array_equal(forward(SMALL, theta, pts), np.zeros((6, 1)))


def test_forward_shapes():
    theta = init_params(RESNET, seed=0)
    pts = np.random.default_rng(2).random((7, 3))
    assert forward(RESNET, theta, pts).shape == (7, 1)


def test_residual_layout_actually_adds():
    # same units with and without the skip; outputs must differ
    plain = spec_of("fa fa fa f", (10, 25, 10, 1), ("tanh",) * 3, dim=3)
    theta = init_params(RESNET, seed=3)
    pts = np.random.default_rng(3).random((5, 3))
    assert n_params(plain) == n_params(RESNET)
    assert not np.allclose(forward(RESNET, theta, pts), forward(plain, theta, pts))


# -- input derivatives ---------------------------------------------------------------

def _fd_first(spec, theta, pts, i, h=1e-6):
    up, down = pts.copy(), pts.copy()
    up[:, i] += h
    down[:, i] -= h
    return (forward(spec, theta, up) - forward(spec, theta, down))[:, 0] / (2 * h)


def _fd_second(spec, theta, pts, i, j, h=1e-4):
    if i == j:
        up, down = pts.copy(), pts.copy()
        up[:, i] += h
        down[:, i] -= h
        mid = forward(spec, theta, pts)
        return (forward(spec, theta, up) - 2 * mid + forward(spec, theta, down))[:, 0] / h ** 2
    out = 0.0
    for si in (1, -1):
        for sj in (1, -1):
            q = pts.copy()
            q[:, i] += si * h
            q[:, j] += sj * h
            out = out + si * sj * forward(spec, theta, q)[:, 0]
    return out / (4 * h ** 2)


@pytest.mark.parametrize("act", ["tanh", "sigmoid", "sin"])
def test_first_and_second_derivatives(act):
    spec = spec_of("fa fa f", (8, 6, 1), (act, act))
    theta = init_params(spec, seed=11)
    pts = np.random.default_rng(4).random((20, 2))
    got = input_derivatives(spec, theta, pts, [(), (0,), (1,), (0, 0), (0, 1), (1, 1)])
    assert np.array_equal(got[()], forward(spec, theta, pts)[:, 0])
    for i in range(2):
        fd = _fd_first(spec, theta, pts, i)
        assert np.max(np.abs(got[(i,)] - fd) / (1 + np.abs(fd))) < 1e-6
    for i, j in ((0, 0), (0, 1), (1, 1)):
        fd = _fd_second(spec, theta, pts, i, j)
        assert np.max(np.abs(got[(i, j)] - fd) / (1 + np.abs(fd))) < 1e-5


def test_third_derivative_on_residual_net():
    theta = init_params(RESNET, seed=13)
    pts = 0.2 + 0.6 * np.random.default_rng(5).random((10, 3))
    got = input_derivatives(RESNET, theta, pts, [(0, 0, 1)])[(0, 0, 1)]
    h = 1e-3

    def dxx(q):  # second difference in x at fixed offsets
        up, mid, down = q.copy(), q.copy(), q.copy()
        up[:, 0] += h
        down[:, 0] -= h
        return (forward(RESNET, theta, up) - 2 * forward(RESNET, theta, mid)
                + forward(RESNET, theta, down))[:, 0] / h ** 2

    up, down = pts.copy(), pts.copy()
    up[:, 1] += h
    down[:, 1] -= h
    fd = (dxx(up) - dxx(down)) / (2 * h)
    assert np.max(np.abs(got - fd) / (1 + np.abs(fd))) < 1e-3


def test_mixed_partials_are_canonically_sorted():
    spec = spec_of("fa fa f", (8, 8, 1), ("tanh", "tanh"))
    theta = init_params(spec, seed=17)
    pts = np.random.default_rng(6).random((10, 2))
    a = input_derivatives(spec, theta, pts, [(0, 1)])
    b = input_derivatives(spec, theta, pts, [(1, 0)])
    assert set(a) == set(b) == {(0, 1)}  # requests come back under the sorted tag
    assert np.array_equal(a[(0, 1)], b[(0, 1)])


def test_relu_first_order_and_vanishing_second():
    spec = spec_of("fa f", (8, 1), ("relu",))
    theta = init_params(spec, seed=19)
    pts = np.random.default_rng(7).random((15, 2)) + 0.05
    got = input_derivatives(spec, theta, pts, [(0,), (0, 0)])
    fd = _fd_first(spec, theta, pts, 0)
    assert np.max(np.abs(got[(0,)] - fd)) < 1e-6
    assert np.array_equal(got[(0, 0)], np.zeros(15))  # piecewise linear a.e.


def test_tag_closure():
    closure = tag_closure([(0, 0), (1,)], input_dim=2)
    assert closure == [(), (0,), (1,), (0, 0)]
    with pytest.raises(DerivativeOrderError):
        tag_closure([(0, 0, 0, 0)], input_dim=1)
    with pytest.raises(ValueError):
        tag_closure([(2,)], input_dim=2)


def test_batch_rows_match_single_point_calls():
    theta = init_params(SMALL, seed=23)
    pts = np.random.default_rng(8).random((6, 2))
    whole = forward(SMALL, theta, pts)
    for k in range(6):
        row = forward(SMALL, theta, pts[k : k + 1])
        assert np.allclose(whole[k], row[0], rtol=0, atol=1e-15)


# -- checkpoints -----------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    theta = init_params(RESNET, seed=29)
    path = tmp_path / "model.ckpt"
    save_checkpoint(RESNET, theta, path)
    spec, loaded = load_checkpoint(path)
    assert spec == RESNET
    assert np.array_equal(loaded, theta)


def test_checkpoint_header_bytes(tmp_path):
    theta = init_params(SMALL, seed=31)
    path = tmp_path / "model.ckpt"
    save_checkpoint(SMALL, theta, path)
    raw = path.read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert header == b"GFDG1 2 fa f 8,1 tanh"
    assert payload == theta.astype("<f8").tobytes()


@pytest.mark.parametrize("mutate", [
    lambda raw: b"NOPE1" + raw[5:],                      # wrong magic
    lambda raw: raw[:-8],                                # truncated payload
    lambda raw: raw + b"\x00" * 8,                       # trailing extra params
    lambda raw: raw.replace(b"8,1", b"9,1", 1),          # header disagrees with payload
])
def test_checkpoint_corruption_detected(tmp_path, mutate):
    path = tmp_path / "model.ckpt"
    save_checkpoint(SMALL, init_params(SMALL, seed=37), path)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
