"""Built-in network descriptors.

``desk_cnn`` is the default trainable network for the 16x16 synthetic task
(six mappable layers, so its exhaustive ceiling has 64 mappings).  The
``*_like`` builders are descriptor-only stacks shaped after classic CIFAR
architectures; they exist for the performance model and are never trained
here.
"""

from __future__ import annotations

from .network import NetworkDescriptor, build_network


def desk_cnn(classes: int = 8) -> NetworkDescriptor:
    """Default desk-scale CNN: three pooled conv stages, three fc layers."""
    return build_network(
        [
            {"kind": "conv", "filters": 6, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 12, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 24, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "fc", "out_features": 48, "activation": "relu"},
            {"kind": "fc", "out_features": 24, "activation": "relu"},
            {"kind": "fc", "out_features": classes},
        ],
        (1, 16, 16),
        classes,
    )


def desk_cnn_l10(classes: int = 8) -> NetworkDescriptor:
    """Ten mappable layers; used for scan-complexity checks."""
    convs = [
        {"kind": "conv", "filters": 6, "kernel": 3, "stride": 1, "padding": 1},
        {"kind": "conv", "filters": 8, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
        {"kind": "conv", "filters": 10, "kernel": 3, "stride": 1, "padding": 1},
        {"kind": "conv", "filters": 12, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
        {"kind": "conv", "filters": 16, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
    ]
    fcs = [
        {"kind": "fc", "out_features": 48, "activation": "relu"},
        {"kind": "fc", "out_features": 32, "activation": "relu"},
        {"kind": "fc", "out_features": 24, "activation": "relu"},
        {"kind": "fc", "out_features": 16, "activation": "relu"},
        {"kind": "fc", "out_features": classes},
    ]
    return build_network(convs + fcs, (1, 16, 16), classes)


def resnet_style(classes: int = 8) -> NetworkDescriptor:
    """Plain stack shaped like a small residual network's backbone: the
    widest middle conv dominates the MAC count."""
    return build_network(
        [
            {"kind": "conv", "filters": 8, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 32, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 16, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "fc", "out_features": 32, "activation": "relu"},
            {"kind": "fc", "out_features": classes},
        ],
        (1, 16, 16),
        classes,
    )


def equal_fc_stack(layers: int = 10, width: int = 32) -> NetworkDescriptor:
    """Equal-MAC fc chain; exercises ranking tie-breaks and flms ratios."""
    specs = [{"kind": "fc", "out_features": width, "activation": "relu"} for _ in range(layers)]
    specs[-1] = {"kind": "fc", "out_features": width, "activation": "none"}
    return build_network(specs, (1, 1, width), width)


def attention_stub(classes: int = 8) -> NetworkDescriptor:
    """FC stack with always-digital layers standing in for dynamic-weight
    attention products (static projections remain mappable)."""
    return build_network(
        [
            {"kind": "fc", "out_features": 32, "activation": "relu"},
            {"kind": "fc", "out_features": 32, "activation": "relu", "always_digital": True},
            {"kind": "fc", "out_features": 32, "activation": "relu"},
            {"kind": "fc", "out_features": 32, "activation": "relu", "always_digital": True},
            {"kind": "fc", "out_features": classes},
        ],
        (1, 4, 16),
        classes,
    )


# ---------------------------------------------------------------------------
# descriptor-only stacks for the performance model (32x32x3 inputs)


def vgg_like() -> NetworkDescriptor:
    """Deep 3x3 conv pyramid with high data reuse (CIFAR-scale widths)."""
    specs = []
    for filters, blocks in ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3)):
        for b in range(blocks):
            spec = {"kind": "conv", "filters": filters, "kernel": 3, "stride": 1, "padding": 1}
            if b == blocks - 1:
                spec["pool"] = 2
            specs.append(spec)
    specs += [
        {"kind": "fc", "out_features": 512, "activation": "relu"},
        {"kind": "fc", "out_features": 10},
    ]
    return build_network(specs, (3, 32, 32), 10)


def alexnet_like() -> NetworkDescriptor:
    """Few large convs plus a wide fully-connected head (CIFAR-scale)."""
    return build_network(
        [
            {"kind": "conv", "filters": 64, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 192, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 384, "kernel": 3, "stride": 1, "padding": 1},
            {"kind": "conv", "filters": 256, "kernel": 3, "stride": 1, "padding": 1},
            {"kind": "conv", "filters": 256, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "fc", "out_features": 4096, "activation": "relu"},
            {"kind": "fc", "out_features": 4096, "activation": "relu"},
            {"kind": "fc", "out_features": 10},
        ],
        (3, 32, 32),
        10,
    )


def depthwise_like() -> NetworkDescriptor:
    """Separable-style stack: pointwise convs are mappable, the depthwise
    stages are low-reuse and pinned digital (grouped weights do not unfold
    onto crossbars in this model)."""
    layers = [
        {"kind": "conv", "filters": 64, "kernel": 3, "stride": 1, "padding": 1},
    ]
    channels = 64
    for spatial_pool in (2, 2, 2, 0):
        layers.append(
            {
                "kind": "conv", "filters": channels, "kernel": 3, "stride": 1,
                "padding": 1, "low_reuse": True, "always_digital": True,
            }
        )
        spec = {"kind": "conv", "filters": min(channels * 2, 512), "kernel": 1}
        if spatial_pool:
            spec["pool"] = spatial_pool
        layers.append(spec)
        channels = min(channels * 2, 512)
    layers.append({"kind": "fc", "out_features": 10})
    return build_network(layers, (3, 32, 32), 10)


BUILTIN_NETWORKS = {
    "desk-cnn": desk_cnn,
    "desk-cnn-l10": desk_cnn_l10,
    "resnet-style": resnet_style,
    "equal-fc-stack": equal_fc_stack,
    "attention-stub": attention_stub,
    "vgg-like": vgg_like,
    "alexnet-like": alexnet_like,
    "depthwise-like": depthwise_like,
}


def builtin(name: str) -> NetworkDescriptor:
    try:
        return BUILTIN_NETWORKS[name]()
    except KeyError:
        raise ValueError(
            f"unknown builtin network {name!r}; choose from {sorted(BUILTIN_NETWORKS)}"
        ) from None
