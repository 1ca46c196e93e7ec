"""
What the error measures when boundary layers (don't) fit on the grid
====================================================================

A solution with exponential boundary layers of width ~eps along the outflow
edges is prescribed analytically, and the matching source is manufactured by
plugging it into the operator.  Whether refinement shows second order then
depends on one question only: does the grid resolve the layers?

* eps = 0.1: layers span several cells, the observed L1 order climbs to 2.
* eps = 1e-3: the limiter smears the unresolved layers over one cell row --
  monotonically, without under- or overshoots -- and that smeared strip
  contributes an O(h) error that dominates everything else.  The order
  honestly reads 1 until h ~ eps.
"""

from cdrfem import PROBLEMS, SolveOptions, convergence_study


def table(epsilon, levels):
    problem = PROBLEMS["boundary-layers"](epsilon=epsilon)
    records = convergence_study(problem, grid_id=1, levels=levels,
                                options=SolveOptions())
    print(f"eps = {epsilon:g}:")
    for r in records:
        e1 = "  -  " if r.eoc_l1 is None else f"{r.eoc_l1:5.2f}"
        print(f"  level {r.level}: L1 = {r.l1_error:.4e}  EOC = {e1}  "
              f"({r.iterations:4d} sweeps)")
    print()


table(0.1, range(2, 6))
table(1e-3, range(2, 5))
