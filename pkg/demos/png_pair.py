"""A 1-WL-equivalent, non-isomorphic pair, and what the subgraph view sees.

Draws one certified pair from the synthetic generator, shows that colour
refinement cannot tell the two graphs apart, then compares their subgraph
censuses and generated graphs, which do differ.
"""
from tlgnn.generated import build_generated_graph
from tlgnn.graph import is_isomorphic_small, wl_equivalent, wl_refine
from tlgnn.png import check_png, generate_spng
from tlgnn.subgraphs import enumerate_subgraphs, subgraph_census

ds, pairs = generate_spng(1, seed=11)
p = pairs[0]
print("swap witness      :", p.swap_witness)
print("check_png         :", check_png(p.g1, p.g2) is not None)
print("1-WL equivalent   :", wl_equivalent(p.g1, p.g2), " rounds:", wl_refine(p.g1).rounds)
print("isomorphic        :", is_isomorphic_small(p.g1, p.g2))

for name, g in (("g1", p.g1), ("g2", p.g2)):
    recs = enumerate_subgraphs(g, depth=3)
    gg, _ = build_generated_graph(g, recs)
    census = subgraph_census(recs)
    circuits = {k[1]: v for k, v in census.items() if k[0] == "circuit"}
    print(f"{name}: label={g.graph_label} supernodes={gg.supernode_count} "
          f"super-edges={len(gg.super_edges)} circuits by size={dict(sorted(circuits.items()))}")
