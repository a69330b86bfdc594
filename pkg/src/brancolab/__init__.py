"""branco-lab: branching-annihilating-coalescing particle systems and their duals.

Short glossary for the names used throughout:

* branco process  -- particles performing random walks on a finite lattice,
  subject to pairwise annihilation (a), binary branching (b), pairwise
  coalescence (c), and death (d).
* resem process   -- the dual system of interacting Wright-Fisher diffusions
  with resampling rate r, selection rate s, and mutation rate m.

The toolkit simulates both, exposes the duality / thinning / Poissonization
transforms linking them, and verifies the defining identities and bounds with
exact oracles and seeded Monte Carlo experiments.
"""

from .branco import (
    EventTable,
    RateParams,
    SimulationError,
    event_rates,
    factorial_moment,
    simulate,
    simulate_from_infinity,
    started_at_infinity_mean_bound,
)
from .dualities import (
    DualityParams,
    ParamBridge,
    branco_to_resem,
    duality_functional,
    generator_identity_check,
    pois_sample,
    resem_to_branco,
    thin_sample,
)
from .lattice import (
    Lattice,
    LatticeError,
    ValidationReport,
    build_lattice,
    complete_graph,
    custom_lattice,
    torus_1d,
    torus_2d,
    transition_semigroup,
    validate_kernel,
)
from .resem import (
    ResemParams,
    extinction_probability,
    frequency_paths,
    moment_dual_expectation,
    simulate_resem,
    wf_pair_simulate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
