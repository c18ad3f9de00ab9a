import numpy as np
import pydantic
import pytest

from ibanet import loss, network
from ibanet import tensor as T
from ibanet.errors import DimensionError, ParameterError
from ibanet.mfc import Architecture

MICRO = network.NetworkSpec(
    n_classes=4,
    sensor_axes=2,
    source_rate_hz=64.0,
    factors=(1, 2, 4),
    arch=Architecture(channels=(2, 3, 4)),
    tau=0.7,
    k=0.4,
)


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("iba_net", network.Variant()),
        ("single_rate:12.5", network.Variant(kind="single_rate", rate_hz=12.5)),
        ("fusion:concatenation", network.Variant(kind="fusion", mode="concatenation")),
    ],
)
def test_parse_variant(text, expected):
    assert network.parse_variant(text) == expected
    assert str(network.parse_variant(text)) == text


@pytest.mark.parametrize("text", ["", "iba_net:1", "single_rate:", "single_rate:-3", "fusion:max", "resnet"])
def test_parse_variant_rejects(text):
    with pytest.raises(ParameterError):
        network.parse_variant(text)


def test_single_rate_factor():
    spec = network.NetworkSpec(n_classes=5, sensor_axes=3, source_rate_hz=100.0, variant="single_rate:12.5")
    assert spec.rate_factors == (8,)
    assert spec.rate_labels == ("12.5Hz",)
    assert not spec.uses_router
    names = [s.name for s in network.parameter_slots(spec)]
    assert not any(n.startswith(("router", "expert")) for n in names)
    odd = network.NetworkSpec(n_classes=5, sensor_axes=3, source_rate_hz=100.0, variant="single_rate:30")
    with pytest.raises(ParameterError):
        _ = odd.rate_factors


def test_spec_rejects_unknown_variant():
    with pytest.raises(pydantic.ValidationError):
        network.NetworkSpec(n_classes=5, sensor_axes=3, source_rate_hz=100.0, variant="fusion:max")


def test_concatenation_widens_head_input():
    spec = network.NetworkSpec(n_classes=5, sensor_axes=3, source_rate_hz=100.0, variant="fusion:concatenation")
    assert spec.head_dim == 3 * 32
    params = network.init_parameters(spec, seed=0)
    assert params["nc3.g.weight"].shape == (96, 5)
    assert params["nc3.fc.weight"].shape == (96, 5)
    assert "router.w1" not in params
    model = network.IbaNet.build(spec, seed=0)
    out = model.forward(model.leaves(), np.random.default_rng(0).standard_normal((2, 3, 200)))
    assert out.fused.shape == (2, 96)
    assert out.rates is None


def test_soft_weighted_fusion_is_the_standard_model():
    base = MICRO
    fused = MICRO.model_copy(update={"variant": "fusion:soft_weighted"})
    a = network.init_parameters(base, seed=3)
    b = network.init_parameters(fused, seed=3)
    assert list(a) == list(b)
    assert all(np.array_equal(a[n], b[n]) for n in a)
    x = np.random.default_rng(0).standard_normal((3, 2, 24))
    la, _ = network.IbaNet.build(base, 3).infer(x)
    lb, _ = network.IbaNet.build(fused, 3).infer(x)
    np.testing.assert_array_equal(la, lb)


def test_initialization_scheme():
    params = network.init_parameters(MICRO, seed=0)
    assert params["nc3.mu"].tolist() == [1.0]
    assert not params["enc0.conv0.bias"].any()
    bound = np.sqrt(6.0 / 5)
    assert np.all(np.abs(params["enc1.conv0.weight"]) <= bound)
    again = network.init_parameters(MICRO, seed=0)
    assert all(np.array_equal(params[n], again[n]) for n in params)


def test_infer_shapes_and_rates():
    model = network.IbaNet.build(MICRO, seed=1)
    assert model.prototypes.dim == 4
    x = np.random.default_rng(1).standard_normal((5, 2, 24))
    logits, rates = model.infer(x, batch_size=2)
    assert logits.shape == (5, 4)
    np.testing.assert_allclose(rates.sum(axis=1), 1.0, atol=1e-12)
    assert model.predict(x).shape == (5,)
    with pytest.raises(DimensionError):
        model.infer(np.zeros((1, 3, 24)))


def test_goat_shaped_forward():
    spec = network.NetworkSpec(n_classes=5, sensor_axes=36, source_rate_hz=100.0)
    model = network.IbaNet.build(spec, seed=0)
    logits, rates = model.infer(np.random.default_rng(0).standard_normal((2, 36, 200)))
    assert logits.shape == (2, 5)
    assert rates.shape == (2, 3)
    assert spec.rate_labels == ("50Hz", "25Hz", "12.5Hz")


def test_end_to_end_gradcheck():
    rng = np.random.default_rng(2024)
    weights = loss.class_weights([30, 8, 3, 1], 0.9999)
    accepted, attempts = 0, 0
    while accepted < 20:
        attempts += 1
        assert attempts < 400, "too many trials landed on a ReLU kink"
        params = network.init_parameters(MICRO, seed=int(rng.integers(1 << 30)))
        for name, value in params.items():
            if name.endswith(("bias", "b1", "b2")):
                params[name] = 0.1 * rng.standard_normal(value.shape)
        params = {name: 0.5 * value if "weight" in name or name.endswith(("w1", "w2")) else value
                  for name, value in params.items()}
        params["nc3.mu"] = np.array([1.5])
        model = network.IbaNet.build(MICRO, seed=accepted)
        x = rng.standard_normal((2, 2, 24))
        y = rng.integers(0, 4, size=2)

        def fn(p, x=x, y=y, model=model):
            return loss.cb_focal(model.forward(p, x).logits, y, weights, gamma=0.5)

        report = T.gradcheck(fn, params, rng, coords_per_param=1)
        if report.kink_distance < 1e-3:
            continue
        accepted += 1
        assert report.max_rel_error < 1e-4
