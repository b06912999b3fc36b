"""Entropy of eigenvector measures for hyperbolic torus maps.

Classical side: hyperbolic toral automorphisms and their small perturbations,
stopping-time partitions of symbolic sequences, and suspension flows under a
roof built from the unstable Jacobian.  Quantum side: the quantized maps,
smooth partitions of identity and the entropic uncertainty bound evaluated
on eigenvectors.
"""

from ._kernels import BACKEND
from .dynamics import (Cover, JacobianTable, Perturbation, Rect, TorusMap, TorusPoint, apply,
                       discrete_jacobian, lyapunov_exponent, tangent, unstable_direction,
                       unstable_jacobian)
from .errors import (ConfigurationError, DomainError, HyperbolicityError, NeedsMoreSymbols,
                     NumericError, RangeError, ResourceError, TorusEntropyError)
from .quantum import (ExperimentConfig, QuantSpace, QuantumPartition, c_norm, commutator_defect,
                      cylinder_measure_from_state, egorov_defect, eigensystem, eup_check, evolve,
                      pi, quantize_cat, quantize_map, quantize_observable, quantum_entropy,
                      smooth_partition, tau)
from .roof import (AdaptedAtom, IndexFamily, RefinedPartition, RoofFunction, adapted_partition,
                   index_family, k_prime, refine, roof_from_jacobian, stopping_time)
from .suspension import (SuspensionMeasure, SuspensionPoint, abramov_check, flow,
                         pushforward_deviation, quantum_subadditivity_defect, refinement_audit,
                         suspension_entropy, suspension_measure)
from .symbolic import (CylinderMeasure, MarkovMeasure, TableMeasure, Word, bernoulli_measure,
                       dirac_measure, ks_entropy_estimate, markov_measure, partition_entropy,
                       subadditivity_defect)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
