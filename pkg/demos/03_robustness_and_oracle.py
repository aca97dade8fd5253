# ## Robustness to an incomplete model and exhaustive checks

import numpy as np

from basefrac import (
    ExactDesign,
    FactorialModel,
    ProcedureConfig,
    brute_force_binary_oracle,
    build_orthocomplement,
    eff_lb_rho,
    info_of_design,
    optimize,
    procedure_a,
    psi,
    v_matrix,
)

# ### V and W
#
# When effects outside the model may be present, a design is judged by
# psi = sigma^2 tr(H^-1) + delta^2 (tr V - tr W).  For binary designs V
# equals H^-1; repeated runs make V - H^-1 nonnegative definite but nonzero.

model = FactorialModel.build((2, 2, 2, 2), "1;2;3;4;1x2;3x4")
opt = optimize(model.z)
binary = ExactDesign.from_labels([1, 2, 5, 7, 10, 12, 15, 16], model.v)
repeated = binary.add(16)
for d in (binary, repeated):
    hinv = np.linalg.inv(info_of_design(d, model.z))
    gap = v_matrix(d, model.z) - hinv
    print(d.n_runs, d.is_binary, np.abs(gap).max(), np.linalg.eigvalsh(gap).min())

# The same quantity through an explicit basis P of the orthocomplement of
# the full-model columns X = [1, Z].

p = build_orthocomplement(model.matrices.x)
idx = np.array(repeated.labels) - 1
n = repeated.n_runs
ln = np.eye(n) - 1.0 / n
hinv = np.linalg.inv(info_of_design(repeated, model.z))
lhs = hinv @ model.z[idx].T @ ln @ p[idx] @ p[idx].T @ ln @ model.z[idx] @ hinv
print(np.abs(lhs - (v_matrix(repeated, model.z) - model.w)).max())

# ### Efficiency bounds under misspecification

for rho in (0.0, 1.0, 5.0):
    print(rho, eff_lb_rho(binary, model.z, opt.s, rho, model.w))
print(psi(binary, model.z, 1.0, 1.0, model.w))

# ### Exhaustive comparison
#
# For small problems every binary design can be enumerated.  The bounds
# above are conservative: designs with eff_lb well under 0.9 can still be
# optimal or very nearly so.

for n in range(7, 11):
    oracle = brute_force_binary_oracle(model, n)
    d = procedure_a(model, opt, ProcedureConfig(target_n=7)).design_at(n)
    print(n, oracle.n_designs,
          [round(oracle.true_efficiency(d, model, rho), 4) for rho in (0.0, 1.0, 5.0)])
