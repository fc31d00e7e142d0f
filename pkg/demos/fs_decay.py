"""Exponential decay of the partial kernel near the divisor on the round sphere.

For the Fubini-Study metric the partial kernel is a binomial tail, so the
oracle backend reaches p = 300 instantly.  The fitted rate L(x) sits strictly
between the lower bound 2 t rho(x) and zero.

    python3 demos/fs_decay.py
"""
from fractions import Fraction

from bergman_lab.asymptotics import decay_analysis
from bergman_lab.geometry import FS, point_at_distance

t = Fraction(1, 2)
points = [point_at_distance(d, 0.7) for d in (0.02, 0.05, 0.1, 0.2)]
rep = decay_analysis(FS, t, points, list(range(100, 301, 20)))

print(f"t = {t}, p in [100, 300]")
print(f"{'|z|':>8} {'2 t rho':>10} {'L fitted':>10}")
for i, x in enumerate(points):
    print(f"{abs(x.z):8.4f} {rep.fitted[f'2t_rho[{i}]']:10.4f} {rep.fitted[f'L[{i}]']:10.4f}")
print()
for k, v in sorted(rep.verdicts.items()):
    print(f"{'PASS' if v.passed else 'FAIL'}  {k}")
