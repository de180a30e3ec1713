"""When can splitting plus a group see the whole signal?

Splitting losses only ever score what some split predicts about held-out
rows.  The matrix Q_{A1} collects every direction those predictions can
reach; whatever lies in its kernel is invisible to training.
"""

import numpy as np

from eqsplit import qanalysis as qa
from eqsplit.group import build_shift_group
from eqsplit.operators import SplitRule, make_gaussian_cs, make_inpainting

swap = build_shift_group(2)

# A single measurement of x1 + x2.  Swapping the two pixels leaves A alone,
# so no transformed copy ever shows the difference x1 - x2.
A = np.array([[1.0, 1.0]])
r = qa.q_matrix(A, swap, SplitRule.full(1), A)
print("A = (1 1)   rank", r.rank, "  blind direction", np.round(r.nullspace_basis[:, 0], 3))
print("verdict:", qa.check_not_equivariant(A, swap).verdict)

# Measuring x1 alone is different: the swap turns it into a measurement of x2.
A = np.array([[1.0, 0.0]])
r = qa.q_matrix(A, swap, SplitRule.fixed([()]), np.zeros((0, 2)))
print("A = (1 0)   Q =", r.q.tolist(), "  full rank:", r.full_rank)

# Inpainting under cyclic shifts: every pixel is observed in some shifted mask.
A = make_inpainting(6, [1, 1, 0, 1, 0, 0]).matrix
r = qa.q_bar(A, build_shift_group(6), SplitRule.bernoulli(0.5))
print("inpainting 3/6 under shifts: Qbar rank", r.rank, "of 6")

# A dense Gaussian split pins down g exactly, so Q_{A1} is the Gram matrix
# of the shifted operator: rank m, never more.  Shifts cannot fill that gap.
A = make_gaussian_cs(6, 12, seed=0).matrix
G = build_shift_group(12)
print("Gaussian 6x12 under shifts: min rank of Q_A1 =",
      min(rep.rank for _, rep in qa.q_reports(A, G, SplitRule.full(6)).values()), "of 12")
