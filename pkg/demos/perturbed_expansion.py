"""First two expansion coefficients of the partial kernel for a bumpy metric.

Far from the divisor the partial kernel agrees with the full one up to
O(p^-inf), so a three-term fit b0 p + b1 + c/p recovers the curvature density
b0 and the scalar-curvature term b1.  Both are compared with the values
computed directly from finite-difference curvature.

    python3 demos/perturbed_expansion.py
"""
from fractions import Fraction

from bergman_lab.asymptotics import expansion_analysis
from bergman_lab.geometry import ChartPoint, CutoffProfile, MetricSpec, Mode

metric = MetricSpec(
    (Mode(1, 1, 0.03), Mode(2, 0, 0.02), Mode(2, -1, 0.005)),
    hsigma_scale=0.9,
    eta=CutoffProfile(-0.8, -0.16),
)
points = [ChartPoint(1, 0.0), ChartPoint(1, 0.2 + 0.1j), ChartPoint(1, -0.15j), ChartPoint(1, 0.3)]
rep = expansion_analysis(metric, Fraction(1, 10), points, list(range(20, 61, 4)))

print(f"{'w':>16} {'b0 fit':>9} {'b0':>9} {'b1 fit':>9} {'b1':>9}")
for (i, b0h, b1h, b0, b1), x in zip(rep.rows, points):
    print(f"{x.z.real:+7.3f}{x.z.imag:+7.3f}i  {b0h:9.5f} {b0:9.5f} {b1h:9.5f} {b1:9.5f}")
print()
for k, v in sorted(rep.verdicts.items()):
    print(f"{'PASS' if v.passed else 'FAIL'}  {k}  (measured {v.measured:.3g}, tol {v.tolerance})")
