# ## From the optimal measure to exact designs

import numpy as np

from basefrac import (
    ExactDesign,
    FactorialModel,
    NoValidScaleError,
    ProcedureConfig,
    SingularDesignError,
    optimize,
    procedure_a,
    procedure_b1,
    procedure_b2,
    round_measure,
    score_design,
)

# ### Rounding is not enough at small N
#
# Rounding c * p_hat to integers adding up to N either finds no suitable c or
# gives a design on too few distinct treatments to estimate theta.

model = FactorialModel.build((2, 2, 2, 2, 2, 3), "1;2;3;4;5;6;1x6;2x6")
opt = optimize(model.z)
for n in (12, 20, 32, 304):
    try:
        d = round_measure(opt.p_hat, n, model.z)
        print(n, "ok", round(score_design(d, model.z, opt.s, model.w).eff_lb, 4))
    except (NoValidScaleError, SingularDesignError) as exc:
        print(n, type(exc).__name__)

# ### Greedy deletion from the full factorial (B2)
#
# A 2^6 factorial with the six main effects and the nine two-factor
# interactions between the first three and the last three factors.

m6 = FactorialModel.build([2] * 6, "1;2;3;4;5;6;1x4;1x5;1x6;2x4;2x5;2x6;3x4;3x5;3x6")
opt6 = optimize(m6.z)
trace = procedure_b2(m6, opt6.s, ProcedureConfig(target_n=16))
for step in trace.steps[-8:]:
    print(step.n_runs, str(step.move), round(step.eff_lb, 4),
          {r: round(v, 4) for r, v in step.eff_lb_rho.items()})

# ### Procedures A and B1
#
# A starts from an efficient rounded design (which may repeat runs), B1 from
# the full factorial with only binary designs allowed.  Both delete one run
# while eff_lb stays above 0.95 and otherwise swap two runs for one.
# fast=True screens the swaps with rank-one updates; the moves are identical.

m = FactorialModel.build((2, 2, 3, 3, 4), None)
opt = optimize(m.z)
cfg = ProcedureConfig(target_n=14, fast=True)
for name, tr in (("A", procedure_a(m, opt, cfg)), ("B1", procedure_b1(m, opt.s, cfg))):
    print(name, "start N =", tr.steps[0].n_runs,
          [(s.n_runs, round(s.eff_lb, 4)) for s in tr.steps[-5:]])

# ### Scoring any design

d = ExactDesign.from_labels(trace.design_at(16).labels, m6.v)
sc = score_design(d, m6.z, opt6.s, m6.w, rhos=(1.0, 5.0))
print(sc.a_value, sc.eff_lb, sc.eff_lb_rho, sc.is_binary)
print(np.isclose(sc.tr_v, sc.a_value))
