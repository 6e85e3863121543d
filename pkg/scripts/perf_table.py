"""Print the analytical speedup/energy table for the built-in networks.

Usage: python scripts/perf_table.py
"""

from hybridmap.baselines import flms_mapping
from hybridmap.nets import alexnet_like, depthwise_like, desk_cnn, vgg_like
from hybridmap.network import MappingVector, mac_ratio
from hybridmap.perf import SystemParams, estimate

if __name__ == "__main__":
    params = SystemParams()
    nets = {
        "vgg-like": vgg_like(),
        "alexnet-like": alexnet_like(),
        "depthwise-like": depthwise_like(),
        "desk-cnn": desk_cnn(),
    }
    print(f"{'network':<16} {'mapping':<12} {'mac_ratio':>9} {'speedup':>8} {'energy':>8}")
    for name, net in nets.items():
        for label, mapping in (
            ("all-analog", MappingVector.all_analog(net)),
            ("flms", flms_mapping(net)),
            ("all-digital", MappingVector.all_digital(net)),
        ):
            rep = estimate(net, mapping, params)
            print(
                f"{name:<16} {label:<12} {mac_ratio(net, mapping):>9.3f} "
                f"{rep.speedup:>8.2f} {rep.energy_gain:>8.2f}"
            )
