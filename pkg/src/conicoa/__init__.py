"""Mixed-integer conic optimization by outer approximation.

Modules: ``cones`` (membership, projection, separation), ``conic_solver``
(continuous subproblems), ``lp`` and ``milp`` (the polyhedral master), ``oa``
(the outer-approximation loop), ``dcp`` (modelling front-end), ``io`` and
``cli``.
"""

__version__ = "0.1.0"
