"""Subgraph census of a small graph, checked against exhaustive search.

A square with a roof on one side and a three-leaf fan on node 2. The
doubling enumerator runs at depths 0..3; every record is checked for
structural validity and membership in a brute-force DFS listing.
"""
import numpy as np

from tlgnn.graph import Graph
from tlgnn.subgraphs import (brute_force_subgraphs, count_trees, enumerate_paths_circuits, max_record_nodes,
                             pair_coverage, subgraph_census)

edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4), (2, 5), (2, 6), (2, 7)]
g = Graph(8, edges, np.ones((8, 1)))

for depth in range(4):
    trees, state = count_trees(g, 3)
    recs = trees + enumerate_paths_circuits(g, depth, state)
    oracle = brute_force_subgraphs(g, max_nodes=max_record_nodes(depth))
    sound = all(r.is_valid(g) and oracle.contains(r) for r in recs)
    print(f"D={depth}  cap={max_record_nodes(depth):2d}  records={len(recs):3d}  "
          f"sound={sound}  coverage={pair_coverage(g, state, depth):.2f}  ops={state.operations}")
    for (kind, size), count in sorted(subgraph_census(recs).items()):
        print(f"    {kind:8s} {size:2d} nodes  x{count}")
