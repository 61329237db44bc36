"""Compiled inner loop for dose accumulation over a planar cell grid.

Cells sit at ``xs[i] * u + ys[j] * v`` in a plane with normal ``n``.  An
emitter at plane coordinates ``(a, b, h)`` (``h`` = height along n) sees
cell (i, j) at squared distance ``(xs[i]-a)^2 + (ys[j]-b)^2 + h^2`` and
with receiving cosine ``h / d``, so both terms separate per axis.  The
inverse square root is a bit-level seed refined by Newton steps to full
double precision, which is markedly cheaper than sqrt + divide here.
"""

import numba
import numpy as np

_RSQRT_MAGIC = np.int64(0x5FE6EB50C7B537A9)


@numba.njit(cache=True, fastmath=True)
def accumulate_dose(dose, xs, ys, a, b, h, au, av, an, coeff, lamb, widths):
    """``dose[j, i] += sum_k widths[k] * sum_m E_km(i, j)``.

    ``a, b, h, au, av, an`` are (K, M): emitter plane coordinates and optical
    axis components per step.  ``lamb[m]`` selects the Lambertian term
    ``coeff * h * max(ce, 0) / d^4`` over the isotropic ``coeff * h / d^3``.
    Per cell the step sum runs in ascending k, the emitter sum in ascending m.
    """
    n_steps, n_em = a.shape
    nx = xs.size
    ny = ys.size
    x2 = np.empty((n_em, nx))
    ax_part = np.empty((n_em, nx))
    yh = np.empty((n_em, ny))
    ay_part = np.empty((n_em, ny))
    cf = np.empty(n_em)
    esum = np.empty(nx)
    sb = np.empty(nx)
    yb = np.empty(nx)
    sbi = sb.view(np.int64)
    ybi = yb.view(np.int64)
    for k in range(n_steps):
        for m in range(n_em):
            hm = h[k, m]
            cf[m] = coeff[m] * hm if hm > 0.0 else 0.0
            for i in range(nx):
                t = xs[i] - a[k, m]
                x2[m, i] = t * t
                ax_part[m, i] = t * au[k, m]
            for j in range(ny):
                t = ys[j] - b[k, m]
                yh[m, j] = t * t + hm * hm
                ay_part[m, j] = t * av[k, m] - hm * an[k, m]
        w = widths[k]
        for j in range(ny):
            esum[:] = 0.0
            for m in range(n_em):
                c = cf[m]
                if c == 0.0:
                    continue
                yhm = yh[m, j]
                for i in range(nx):
                    sb[i] = x2[m, i] + yhm
                for i in range(nx):
                    ybi[i] = _RSQRT_MAGIC - (sbi[i] >> 1)
                if lamb[m]:
                    aym = ay_part[m, j]
                    for i in range(nx):
                        s = sb[i]
                        y = yb[i]
                        hs = 0.5 * s
                        y = y * (1.5 - hs * y * y)
                        y = y * (1.5 - hs * y * y)
                        y = y * (1.5 - hs * y * y)
                        y = y * (1.5 - hs * y * y)
                        ce = ax_part[m, i] + aym
                        if ce > 0.0:
                            y2 = y * y
                            esum[i] += c * ce * (y2 * y2)
                else:
                    for i in range(nx):
                        s = sb[i]
                        y = yb[i]
                        hs = 0.5 * s
                        y = y * (1.5 - hs * y * y)
                        y = y * (1.5 - hs * y * y)
                        y = y * (1.5 - hs * y * y)
                        y = y * (1.5 - hs * y * y)
                        esum[i] += c * (y * y * y)
            for i in range(nx):
                dose[j, i] += esum[i] * w
