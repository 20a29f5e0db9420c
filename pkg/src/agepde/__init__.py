"""Two-phase age-structured population models: PDE, ODE and hybrid reductions."""
