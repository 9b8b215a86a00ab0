import json

import numpy as np
import pytest

from cbb.errors import DelayError, InstanceError, ParamError, ProbabilityMassError, RangeError, UnknownName
from cbb.instance import (
    Instance,
    RewardKind,
    gap_instance,
    hardness,
    integral,
    named_instance,
    noninteg_3x3,
    noninteg_3x3_d6,
    noninteg_10x10,
    validate,
)


def test_minimal_instance():
    inst = validate({"delays": [1], "context_probs": [1.0], "means": [[0.5]]})
    assert (inst.k, inst.m, inst.d_max) == (1, 1, 1)
    assert inst.reward_kind is RewardKind.BERNOULLI


def test_mass_error():
    with pytest.raises(ProbabilityMassError):
        validate({"delays": [1], "context_probs": [0.6, 0.5], "means": [[0.5, 0.5]]})


@pytest.mark.parametrize(
    "raw, err",
    [
        ({"delays": [0], "context_probs": [1.0], "means": [[0.5]]}, DelayError),
        ({"delays": [1.5], "context_probs": [1.0], "means": [[0.5]]}, DelayError),
        ({"delays": [1], "context_probs": [1.0], "means": [[1.2]]}, RangeError),
        ({"delays": [1], "context_probs": [1.2, -0.2], "means": [[0.1, 0.1]]}, RangeError),
        ({"delays": [1, 2], "context_probs": [1.0], "means": [[0.5]]}, InstanceError),
        ({"delays": [1], "context_probs": [1.0]}, InstanceError),
    ],
)
def test_invalid(raw, err):
    with pytest.raises(err):
        validate(raw)


def test_mass_tolerance_boundary():
    validate({"delays": [1, 1], "context_probs": [0.5, 0.5 + 5e-13], "means": [[0, 0], [0, 0]]})
    with pytest.raises(ProbabilityMassError):
        validate({"delays": [1, 1], "context_probs": [0.5, 0.5 + 1e-11], "means": [[0, 0], [0, 0]]})


def test_immutable_and_caller_arrays_untouched():
    f = np.array([0.5, 0.5])
    inst = validate({"delays": [2], "context_probs": f, "means": [[0.1, 0.2]]})
    assert f.flags.writeable
    with pytest.raises(ValueError):
        inst.means[0, 0] = 1.0


def test_integral():
    inst = integral(0.4)
    assert inst.delays.tolist() == [3, 3, 3]
    assert np.allclose(inst.context_probs, 1 / 3)
    assert inst.means[0, 1] == pytest.approx(0.5)
    assert inst.means[2, 2] == pytest.approx(0.9)
    assert inst.alpha == pytest.approx(0.6)
    with pytest.raises(ParamError):
        integral(0.95)


def test_gap_instance():
    inst = gap_instance(3, 0.9)
    assert inst.delays.tolist() == [3, 3, 3]
    assert np.allclose(inst.means, np.eye(3) * 0.9)


def test_hardness_rescale():
    inst = hardness(3, 0.1, 0.7)
    assert inst.context_probs.tolist() == [0.1, 0.9]
    assert inst.means[0].tolist() == pytest.approx([0.875, 0.125])
    assert inst.means[1].tolist() == [0.0, 0.0]
    assert inst.reward_kind is RewardKind.DETERMINISTIC


def test_noninteg():
    a = noninteg_3x3()
    assert a.delays.tolist() == [2, 3, 6]
    assert noninteg_3x3_d6(5) == noninteg_3x3_d6(5)
    big = noninteg_10x10(1)
    assert big.k == big.m == 10 and set(big.delays.tolist()) <= {8, 9}


def test_named_lookup():
    assert named_instance("integral", gap=0.8) == integral(0.8)
    with pytest.raises(UnknownName):
        named_instance("nope")
    with pytest.raises(ParamError):
        named_instance("integral", width=3)


def test_json_roundtrip():
    inst = hardness(3, 0.1, 0.7)
    doc = json.loads(inst.to_json())
    assert set(doc) == {"k", "m", "delays", "context_probs", "means", "reward_kind"}
    assert Instance.from_json(inst.to_json()) == inst
    assert hash(Instance.from_json(inst.to_json())) == hash(inst)
