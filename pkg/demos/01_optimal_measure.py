# ## Baseline-parametrized factorials and the A-optimal measure

import numpy as np

from basefrac import FactorialModel, info_of_measure, optimize, phi
from basefrac.measure import uniform, variance_function

# ### Labels and the model matrix
#
# A 3 x 3 factorial has nine treatment combinations, labelled 1..9 in
# lexicographic order.  With both main effects in the model every factor
# contributes two parameters (levels 1 and 2 against the baseline level 0).

model = FactorialModel.build((3, 3), "1;2")
space = model.space
print([space.format_treatment(space.unlabel(k)) for k in range(1, space.v + 1)])
print("q =", model.q)

# Rows of Z are indicators: treatment 10 (label 4) switches on theta(10) only,
# treatment 21 (label 8) switches on theta(20) and theta(01).

print(model.reqset.parameters)
print(model.z[[3, 7]])

# ### The uniform measure
#
# Under the uniform measure the information matrix is the full-factorial one
# scaled by 1/v, so phi is v tr(W).

p = uniform(space.v)
print(np.allclose(info_of_measure(p, model.z), np.linalg.inv(model.w) / space.v))
print(phi(p, model.z), space.v * np.trace(model.w))

# ### Multiplicative algorithm
#
# Masses are rescaled by d_k / tr M^-1 until no treatment has variance
# function above tr M^-1 + t.  s is the benchmark every N-run design is
# measured against: tr(H^-1) >= s / N.

res = optimize(model.z)
print(res.iterations, res.terminal_gap, res.s)
print(np.round(res.p_hat.reshape(3, 3), 4))
print(variance_function(res.p_hat, model.z).max() - res.phi)

# ### A larger mixed-level model
#
# 2^5 x 3 with two interactions involving the three-level factor.  Factors
# 3, 4 and 5 enter only as main effects, and the optimum treats their levels
# symmetrically, so masses come in tied groups.

big = FactorialModel.build((2, 2, 2, 2, 2, 3), "1;2;3;4;5;6;1x6;2x6")
res = optimize(big.z)
print(big.q, res.iterations, round(res.s, 4))
for k in (0, 72, 76):
    print(big.space.format_treatment(big.space.unlabel(k + 1)), round(res.p_hat[k], 4))
