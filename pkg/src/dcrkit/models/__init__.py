"""Model implementations sharing the predict-CIF contract."""
