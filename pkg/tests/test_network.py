import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridmap.network import (
    ANALOG,
    LayerDescriptor,
    MappingVector,
    NetworkDescriptor,
    TileGeometry,
    build_network,
    count_macs,
    descriptor_from_json,
    descriptor_to_json,
    mac_ratio,
    tile_count,
    unfolded_shape,
)
from tests.test_tensor import conv_loop_oracle
from hybridmap.rng import stream


def test_count_macs_fc():
    assert count_macs(LayerDescriptor(id=0, kind="fc", in_features=10, out_features=5)) == 50


def test_count_macs_conv_unit():
    d = LayerDescriptor(id=0, kind="conv", in_channels=1, filters=1, kernel=1,
                        stride=1, padding=0, out_h=1, out_w=1)
    assert count_macs(d) == 1


def test_count_macs_matches_loop_multiplies():
    rng = stream(7, "macs")
    d = LayerDescriptor(id=0, kind="conv", in_channels=3, filters=16, kernel=3,
                        stride=1, padding=1, out_h=8, out_w=8)
    assert count_macs(d) == 27648
    x = rng.standard_normal((1, 3, 8, 8))
    w = rng.standard_normal((27, 16))
    _, mults = conv_loop_oracle(x, w, d)
    assert count_macs(d) == mults


def test_unfolded_shape():
    assert unfolded_shape(LayerDescriptor(id=0, kind="fc", in_features=784, out_features=10)) == (784, 10)
    conv = LayerDescriptor(id=0, kind="conv", in_channels=16, filters=32, kernel=3,
                           stride=1, padding=1, out_h=4, out_w=4)
    assert unfolded_shape(conv) == (144, 32)
    conv64 = LayerDescriptor(id=0, kind="conv", in_channels=64, filters=64, kernel=3,
                             stride=1, padding=1, out_h=4, out_w=4)
    assert unfolded_shape(conv64) == (576, 64)


def brute_force_tiles(rows, cols, geom):
    count = 0
    for _ in range(0, rows, geom.rows):
        for _ in range(0, cols, geom.cols):
            count += 1
    return count


def test_tile_count_examples():
    geom = TileGeometry()
    assert tile_count((144, 32), geom) == 1
    assert tile_count((576, 64), geom) == 3


@given(st.integers(1, 1024), st.integers(1, 1024), st.integers(1, 300), st.integers(1, 300))
def test_tile_count_matches_bruteforce(rows, cols, tr, tc):
    geom = TileGeometry(rows=tr, cols=tc)
    assert tile_count((rows, cols), geom) == brute_force_tiles(rows, cols, geom)


def _fc_chain(macs_widths):
    # one fc layer per (in, out) pair, shapes chained
    specs = []
    for _, out in macs_widths:
        specs.append({"kind": "fc", "out_features": out, "activation": "relu"})
    specs[-1]["activation"] = "none"
    first_in = macs_widths[0][0]
    return build_network(specs, (1, 1, first_in), macs_widths[-1][1])


def test_mac_ratio_endpoints(  ):
    net = _fc_chain([(8, 8), (8, 8)])
    assert mac_ratio(net, MappingVector.all_digital(net)) == 0.0
    assert mac_ratio(net, MappingVector.all_analog(net)) == 1.0
    one = MappingVector.all_digital(net).with_domain(0, ANALOG)
    assert mac_ratio(net, one) == 0.5


@given(st.lists(st.booleans(), min_size=2, max_size=8), st.integers(0, 7))
def test_mac_ratio_monotone_under_inclusion(bits, add_idx):
    widths = [(6, 6)] * len(bits)
    net = _fc_chain(widths)
    ids = net.mappable_ids
    analog = frozenset(lid for lid, b in zip(ids, bits) if b)
    base = MappingVector(ids, analog)
    lid = ids[add_idx % len(ids)]
    grown = base.with_domain(lid, ANALOG)
    assert mac_ratio(net, grown) >= mac_ratio(net, base)


def test_network_requires_mappable_layer():
    with pytest.raises(ValueError):
        build_network(
            [{"kind": "fc", "out_features": 4, "always_digital": True}],
            (1, 1, 4),
            4,
        )


def test_shape_validation_rejects_bad_fc_width():
    with pytest.raises(ValueError):
        NetworkDescriptor(
            layers=(
                LayerDescriptor(id=0, kind="fc", in_features=5, out_features=4),
            ),
            input_shape=(1, 1, 4),
            classes=4,
        )


def test_pool_must_divide():
    with pytest.raises(ValueError):
        build_network(
            [
                {"kind": "conv", "filters": 2, "kernel": 2, "pool": 2},
                {"kind": "fc", "out_features": 2},
            ],
            (1, 6, 6),  # 5x5 conv output not divisible by 2
            2,
        )


def test_descriptor_json_roundtrip(tmp_path):
    net = build_network(
        [
            {"kind": "conv", "filters": 3, "kernel": 3, "padding": 1, "pool": 2},
            {"kind": "fc", "out_features": 7, "always_digital": True},
            {"kind": "fc", "out_features": 4},
        ],
        (1, 8, 8),
        4,
    )
    obj = descriptor_to_json(net)
    again = descriptor_from_json(json.loads(json.dumps(obj)))
    assert again == net
    assert again.mappable_ids == (0, 2)


def test_descriptor_json_rejects_unknown_keys():
    with pytest.raises(ValueError):
        descriptor_from_json({"input_shape": [1, 1, 4], "classes": 4, "layers": [], "extra": 1})


def test_mapping_vector_rejects_non_mappable():
    net = build_network(
        [
            {"kind": "fc", "out_features": 4, "activation": "relu"},
            {"kind": "fc", "out_features": 4, "always_digital": True},
            {"kind": "fc", "out_features": 4},
        ],
        (1, 1, 4),
        4,
    )
    assert net.mappable_ids == (0, 2)
    with pytest.raises(ValueError):
        MappingVector(net.mappable_ids, frozenset({1}))
    m = MappingVector.all_digital(net)
    with pytest.raises(ValueError):
        m.with_domain(1, ANALOG)


def test_mapping_json_roundtrip():
    net = _fc_chain([(8, 8), (8, 8), (8, 8)])
    m = MappingVector.all_digital(net).with_domain(1, ANALOG)
    again = MappingVector.from_json(m.to_json(), net)
    assert again == m
