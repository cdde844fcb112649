"""Semiclassical energy balance of Schroedinger eigenstates on finite-difference grids.

Typical use::

    from semivirial import make_power_well, build_grid, solve_window, WindowQuery, energy_balance

    v = make_power_well(1, 2.0)
    grid = build_grid(v, 1.0, 0.2, hbar=0.1)
    for pair in solve_window(grid, v, 0.1, WindowQuery.around(1.0, 0.2)):
        print(energy_balance(grid, v, 0.1, pair))
"""

from .eigen import (
    CompletenessWarning,
    EigenPair,
    EigenSolverError,
    WindowQuery,
    WindowSolution,
    count_below,
    load_pairs,
    save_pairs,
    solve_lowest,
    solve_nearest,
    solve_window,
    track_branch,
)
from .energetics import EnergyBalance, energy_balance, kato_derivative_check, kinetic_energy, potential_energy
from .grid import BudgetExceededError, Grid, ResolutionPolicy, build_grid
from .potentials import (
    PotentialModel,
    make_double_well,
    make_log_squared,
    make_patched_power,
    make_potential,
    make_power_well,
    make_separable_power,
    make_user_potential,
)
from .regions import (
    bound_constants,
    decompose,
    forbidden_mass,
    forbidden_potential_mass,
    prop37_verdict,
    stability_check,
    theorem33_verdict,
)
from .virial import build_well_multiplier, classic_virial_residual, generalized_virial_residual

__version__ = "0.1.0"
