"""EdgeKV: two-tier edge key-value store, simulator-backed Python surface.

The heavy lifting lives in the compiled `_edgekv` module; this package
re-exports it and adds small conveniences for building topologies.
"""

import json

try:
    from edgekv._edgekv import (  # installed layout
        SimCluster,
        compute_backup_map,
        decode_frame,
        encode_frame,
        finger_start,
        hash_id,
        id_to_hex,
        in_interval,
        run_scenario,
    )
except ImportError:  # build-tree layout: _edgekv next to the package
    from _edgekv import (
        SimCluster,
        compute_backup_map,
        decode_frame,
        encode_frame,
        finger_start,
        hash_id,
        id_to_hex,
        in_interval,
        run_scenario,
    )

__all__ = [
    "SimCluster",
    "compute_backup_map",
    "decode_frame",
    "encode_frame",
    "finger_start",
    "hash_id",
    "id_to_hex",
    "in_interval",
    "run_scenario",
    "make_topology",
]


def make_topology(groups=2, nodes_per_group=3, vnodes=2, sessions=4, seed=1,
                  profile="edge"):
    """Builds a topology dict: `groups` edge groups of `nodes_per_group`
    storage nodes, one gateway with `vnodes` virtual nodes and one client
    per group."""
    nodes = []
    bootstrap = []
    for g in range(groups):
        gid = f"g{g}"
        for n in range(nodes_per_group):
            nodes.append({"name": f"e{g}{n}", "role": "storage", "group": gid})
        nodes.append({"name": f"gw{g}", "role": "gateway", "group": gid,
                      "vnodes": vnodes})
        nodes.append({"name": f"c{g}", "role": "client", "group": gid,
                      "sessions": sessions})
        bootstrap.append(f"gw{g}")
    return {
        "transport": "sim",
        "profile": profile,
        "seed": seed,
        "nodes": nodes,
        "overlay_bootstrap_order": bootstrap,
    }


def cluster(topology=None, **kwargs):
    """Constructs and boots a SimCluster from a topology dict (or the
    make_topology keyword arguments)."""
    topo = topology if topology is not None else make_topology(**kwargs)
    c = SimCluster(json.dumps(topo))
    if not c.boot():
        raise RuntimeError("cluster failed to boot")
    return c
