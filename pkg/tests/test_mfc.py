import numpy as np
import pydantic
import pytest

from ibanet import mfc
from ibanet import tensor as T
from ibanet.errors import DimensionError, ParameterError


def encoder_params(rng, arch: mfc.Architecture, zero: bool = False) -> mfc.EncoderParams:
    kernels, biases = [], []
    c_in = 1
    for c_out in arch.channels:
        w = np.zeros((c_out, c_in, arch.kernel_size)) if zero else rng.standard_normal((c_out, c_in, arch.kernel_size))
        kernels.append(T.Tensor(w))
        biases.append(T.Tensor(np.zeros(c_out)))
        c_in = c_out
    return mfc.EncoderParams(kernels=tuple(kernels), biases=tuple(biases))


def router(rng, c: int, n: int, tau: float) -> mfc.RouterParams:
    return mfc.RouterParams(
        w1=T.Tensor(rng.standard_normal((c, c // 2))),
        b1=T.Tensor(rng.standard_normal(c // 2)),
        w2=T.Tensor(rng.standard_normal((c // 2, n))),
        b2=T.Tensor(rng.standard_normal(n)),
        tau=tau,
    )


def expert(rng, c: int) -> mfc.ProjectionExpert:
    return mfc.ProjectionExpert(
        w1=T.Tensor(rng.standard_normal((c, c // 2))),
        b1=T.Tensor(rng.standard_normal(c // 2)),
        w2=T.Tensor(rng.standard_normal((c // 2, c))),
        b2=T.Tensor(rng.standard_normal(c)),
    )


def gelu(v):
    return 0.5 * v * (1 + np.tanh(np.sqrt(2 / np.pi) * (v + 0.044715 * v**3)))


def test_goat_window_encodes_to_published_shape(rng):
    arch = mfc.Architecture()
    out = mfc.encode(T.Tensor(rng.standard_normal((1, 1, 36, 200))), encoder_params(rng, arch), arch)
    assert out.shape == (1, 32, 36, 25)
    assert arch.output_width(200) == 25


def test_zero_input_and_weights_give_zero_map(rng):
    arch = mfc.Architecture(channels="4,8")
    out = mfc.encode(T.Tensor(np.zeros((2, 1, 3, 40))), encoder_params(rng, arch, zero=True), arch)
    assert not out.data.any()


def test_encoder_is_deterministic(rng):
    arch = mfc.Architecture(channels=(4, 8))
    params = encoder_params(rng, arch)
    x = T.Tensor(rng.standard_normal((2, 1, 3, 40)))
    np.testing.assert_array_equal(mfc.encode(x, params, arch).data, mfc.encode(x, params, arch).data)


def test_encode_rejects_short_window(rng):
    arch = mfc.Architecture()
    with pytest.raises(DimensionError):
        mfc.encode(T.Tensor(np.zeros((1, 1, 3, 4))), encoder_params(rng, arch), arch)
    with pytest.raises(DimensionError):
        mfc.encode(T.Tensor(np.zeros((1, 3, 40))), encoder_params(rng, arch), arch)


def test_architecture_validates_channels():
    with pytest.raises(pydantic.ValidationError):
        mfc.Architecture(channels=(8, 1))


def test_pool_removes_width_differences(rng):
    pooled = [mfc.pool(T.Tensor(rng.standard_normal((2, 8, 3, w)))) for w in (25, 13, 7)]
    assert {p.shape for p in pooled} == {(2, 8)}


def test_router_rates_sum_to_one_and_are_positive(rng):
    c, n = 8, 3
    params = router(rng, c, n, tau=0.4)
    features = [T.Tensor(rng.standard_normal((1000, c))) for _ in range(n)]
    rates = mfc.route(features, params).data
    np.testing.assert_allclose(rates.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(rates > 0)


def fixed_router(o: np.ndarray, tau: float) -> mfc.RouterParams:
    """Router whose output logits equal `o` for every input."""
    c = 4
    return mfc.RouterParams(
        w1=T.Tensor(np.zeros((c, c // 2))),
        b1=T.Tensor(np.zeros(c // 2)),
        w2=T.Tensor(np.zeros((c // 2, len(o)))),
        b2=T.Tensor(o),
        tau=tau,
    )


def test_router_scalar_oracle():
    features = [T.Tensor(np.ones((1, 4)))] * 3
    rates = mfc.route(features, fixed_router(np.array([1.0, 0.0, 0.0]), tau=1.0)).data[0]
    np.testing.assert_allclose(rates, [0.5761, 0.2119, 0.2119], atol=1e-4)
    uniform = mfc.route(features, fixed_router(np.full(3, 0.7), tau=0.2)).data[0]
    np.testing.assert_allclose(uniform, 1 / 3, atol=1e-15)


def test_temperature_limits(rng):
    features = [T.Tensor(np.ones((1, 4)))] * 3
    for _ in range(50):
        o = rng.uniform(-1, 1, size=3)
        hot = mfc.route(features, fixed_router(o, tau=1e3)).data[0]
        assert np.max(np.abs(hot - 1 / 3)) < 1e-3
        o = np.array([0.0, -0.5, -1.0]) + rng.uniform(-0.2, 0.2)
        o[0] += 0.1
        cold = mfc.route(features, fixed_router(o, tau=1e-3)).data[0]
        assert cold[0] > 1 - 1e-3


def test_router_rejects_non_positive_temperature():
    with pytest.raises(ParameterError):
        fixed_router(np.zeros(3), tau=0.0)


def test_router_needs_matching_feature_shapes(rng):
    with pytest.raises(DimensionError):
        mfc.route([T.Tensor(np.ones((1, 4))), T.Tensor(np.ones((1, 6)))], fixed_router(np.zeros(2), 1.0))


def test_one_hot_rates_select_single_expert(rng):
    c = 6
    experts = [expert(rng, c) for _ in range(3)]
    features = [T.Tensor(rng.standard_normal((2, c))) for _ in range(3)]
    rates = T.Tensor(np.tile([1.0, 0.0, 0.0], (2, 1)))
    fused = mfc.fuse(features, rates, experts).data
    np.testing.assert_array_equal(fused, mfc.project(features[0], experts[0]).data)


def test_fuse_matches_straight_line_oracle(rng):
    c = 6
    experts = [expert(rng, c) for _ in range(3)]
    features = [T.Tensor(rng.standard_normal((1, c))) for _ in range(3)]
    rates = mfc.route(features, router(rng, c, 3, tau=0.4))
    fused = mfc.fuse(features, rates, experts).data[0]

    expected = np.zeros(c)
    for i, (e, p) in enumerate(zip(features, experts, strict=True)):
        hidden = gelu(e.data[0] @ p.w1.data + p.b1.data)
        expected += rates.data[0, i] * gelu(hidden @ p.w2.data + p.b2.data)
    np.testing.assert_allclose(fused, expected, atol=1e-10)


def test_fusion_is_permutation_equivariant(rng):
    c = 6
    experts = [expert(rng, c) for _ in range(3)]
    features = [T.Tensor(rng.standard_normal((2, c))) for _ in range(3)]
    rates = mfc.route(features, router(rng, c, 3, tau=0.5)).data
    order = [2, 0, 1]
    a = mfc.fuse(features, T.Tensor(rates), experts).data
    b = mfc.fuse([features[i] for i in order], T.Tensor(rates[:, order]), [experts[i] for i in order]).data
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("mode", ["addition", "averaging", "multiplication"])
def test_elementwise_fusion_modes(rng, mode):
    projected = [T.Tensor(rng.standard_normal((2, 4))) for _ in range(3)]
    out = mfc.combine(projected, mode).data
    stack = np.stack([p.data for p in projected])
    expected = {"addition": stack.sum(0), "averaging": stack.mean(0), "multiplication": stack.prod(0)}[mode]
    np.testing.assert_allclose(out, expected, atol=1e-14)


def test_concatenation_widens_to_n_times_c(rng):
    projected = [T.Tensor(rng.standard_normal((2, 8))) for _ in range(3)]
    assert mfc.combine(projected, "concatenation").shape == (2, 24)


def test_soft_weighted_needs_rates(rng):
    with pytest.raises(ParameterError):
        mfc.combine([T.Tensor(np.ones((1, 2)))], "soft_weighted")


def test_expert_count_must_match(rng):
    with pytest.raises(DimensionError):
        mfc.fuse([T.Tensor(np.ones((1, 6)))] * 2, None, [expert(rng, 6)], "addition")


def test_gradcheck_through_route_and_fuse(rng):
    c, n = 6, 3
    features = [rng.standard_normal((2, c)) for _ in range(n)]
    params = {
        "rw1": rng.standard_normal((c, c // 2)),
        "rb1": rng.standard_normal(c // 2),
        "rw2": rng.standard_normal((c // 2, n)),
        "rb2": rng.standard_normal(n),
    }
    for i in range(n):
        params |= {
            f"w1_{i}": rng.standard_normal((c, c // 2)),
            f"b1_{i}": rng.standard_normal(c // 2),
            f"w2_{i}": rng.standard_normal((c // 2, c)),
            f"b2_{i}": rng.standard_normal(c),
        }
    weights = rng.standard_normal((2, c))

    def fn(p):
        e = [T.Tensor(f) for f in features]
        rates = mfc.route(e, mfc.RouterParams(p["rw1"], p["rb1"], p["rw2"], p["rb2"], tau=0.7))
        experts = [mfc.ProjectionExpert(p[f"w1_{i}"], p[f"b1_{i}"], p[f"w2_{i}"], p[f"b2_{i}"]) for i in range(n)]
        return T.total(T.mul(mfc.fuse(e, rates, experts), T.Tensor(weights)))

    report = T.gradcheck(fn, params, rng, coords_per_param=2)
    assert report.max_rel_error < 1e-5
