from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    glorot_init,
    load_network_spec,
    parse_network_spec,
)

__all__ = [
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "glorot_init",
    "load_network_spec",
    "parse_network_spec",
]
