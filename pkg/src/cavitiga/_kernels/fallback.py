"""Pure-numpy element-matrix kernels (fallback backend).

Same contracts as the compiled backend in ``_core.pyx``; everything is
expressed through batched einsum/matmul so the fallback stays usable for
production meshes, just slower.
"""

import numpy as np

BACKEND = "fallback"


def sym_triple_products(A, W, s):
    """Element matrices R[e,l,m] = sum_q s[e,q] * A[e,q,l,:] W[e,q] A[e,q,m,:].

    A: (E, Q, NL, 3) per-quad-point vector values of the NL local functions,
    W: (E, Q, 3, 3) symmetric metric at each quad point,
    s: (E, Q) scalar weight.
    The result is exactly symmetric (computed once and mirrored).
    """
    T = np.einsum("eqab,eqlb->eqla", W, A)
    R = np.einsum("eqla,eqma,eq->elm", T, A, s, optimize=True)
    return 0.5 * (R + R.transpose(0, 2, 1))


def elasticity_blocks(grads, s, eta, lam):
    """Isotropic elasticity element matrices from physical scalar gradients.

    grads: (E, Q, NL, 3) physical gradients of the NL scalar basis functions,
    s: (E, Q) quadrature weight including the Jacobian determinant.
    Local DOF ordering is interleaved: dof = 3*l + component.
    """
    E, Q, NL, _ = grads.shape
    gg = np.einsum("eqla,eqma,eq->elm", grads, grads, s, optimize=True)
    cross = np.einsum("eqlb,eqma,eq->elamb", grads, grads, s, optimize=True)
    out = np.zeros((E, 3 * NL, 3 * NL))
    out[:, 0::3, 0::3] = eta * gg
    out[:, 1::3, 1::3] = eta * gg
    out[:, 2::3, 2::3] = eta * gg
    for a in range(3):
        for b in range(3):
            blk = eta * cross[:, :, a, :, b] + lam * cross[:, :, b, :, a]
            out[:, a::3, b::3] += blk
    return 0.5 * (out + out.transpose(0, 2, 1))
