"""
Doob h-transforms of a diffusion
================================

An h-transform rescales the scale density by h^-2 and the speed density by
h^2, so their product does not change. With h = s the transform is the
diffusion conditioned to escape to +inf.
"""

import numpy as np

from doobcond import build_scale_speed, condition_to_infinity, h_generator, h_transform_chars, logistic

spec = logistic(0.5, 0.1, 1.2)
ss = build_scale_speed(spec)
xs = np.array([0.1, 1.0, 5.0])

for h in (1.0, "1 + x^2", ss.s):
    ch = h_transform_chars(ss, h, xs)
    print(f"h={h if isinstance(h, (str, float)) else 's'}:  s_h'={ch.s_h_prime}  product/base="
          f"{ch.s_h_prime * ch.m_h_prime / (ss.s_prime(xs) * ss.m_prime(xs))}")
print(ch.warning)

# the h = s generator applied to f(x) = x returns the conditioned drift
cd = condition_to_infinity(spec)
for x in xs:
    print(f"x={x}:  G^h x = {h_generator(ss, ss.s, lambda v: v, x, 1e-4 * x):.8f}  b_tilde = {cd.b_tilde(x):.8f}")
