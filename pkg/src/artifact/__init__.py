"""Node-disjoint paths in grids with boundary sources."""
