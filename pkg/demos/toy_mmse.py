"""Training on measurements alone can land on the posterior mean.

Four pixels, a prior made of the six cyclic shifts of two patterns, and an
operator that never sees the last pixel.  A free output per input (a lookup
table) is trained on the exact ES loss.  It is then compared with the
closed-form posterior mean given each split measurement.
"""

import numpy as np

from eqsplit.priors import posterior_mean_discrete
from eqsplit.qanalysis import q_reports
from eqsplit.verify import toy_problem, train_tabular_toy

prior, G, A, rule = toy_problem()
print("atoms:\n", prior.atoms)
ranks = sorted(rep.rank for _, rep in q_reports(A, G, rule).values())
print("ranks of Q_A1 over the support:", ranks, "(4 means nothing is blind)")

f, inputs, prior, hist = train_tabular_toy(max_epochs=3000)
print(f"final ES loss {hist.losses[-1]:.3e}")

worst = 0.0
for y1, A1 in list(inputs.values())[:5]:
    learned = f(y1, A1)
    target = posterior_mean_discrete(prior, y1, A1, 0.0)
    worst = max(worst, np.abs(learned - target).max())
    print("pixel", int(np.argmax(A1[0])), " y1 =", y1, " learned", np.round(learned, 4), " posterior mean", np.round(target, 4))
print(f"largest gap over the printed inputs: {worst:.2e}")
