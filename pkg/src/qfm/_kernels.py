"""Jitted gate kernels for batched statevector evolution.

All functions operate in place on a C-contiguous ``(dim, M)`` complex128
amplitude array: one column per trajectory, so the batch index is the fast
axis and the per-amplitude work vectorizes.  Rotation gates are
``exp(-i * theta * G / 2)`` with ``G`` the Pauli generator; applying the
negated angle is the exact inverse, which the adjoint-differentiation pass
relies on.  All loops run in a fixed order, so results are bit-reproducible.

Gate kind codes are shared with :mod:`qfm.circuits`.
"""
from __future__ import annotations

import numpy as np
from numba import njit

KIND_RX = 0
KIND_RY = 1
KIND_RZ = 2
KIND_XX = 3
KIND_YY = 4
KIND_ZZ = 5
KIND_H = 6

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@njit(cache=True)
def apply_gate(a, kind, qa, qb, theta):  # pragma: no cover - exercised via wrappers
    dim, m_count = a.shape
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    js = -1j * s
    if kind <= KIND_RZ or kind == KIND_H:
        step = 1 << qa
        for hi in range(0, dim, 2 * step):
            for i0 in range(hi, hi + step):
                i1 = i0 + step
                r0 = a[i0]
                r1 = a[i1]
                if kind == KIND_RX:
                    for m in range(m_count):
                        x0 = r0[m]
                        x1 = r1[m]
                        r0[m] = c * x0 + js * x1
                        r1[m] = c * x1 + js * x0
                elif kind == KIND_RY:
                    for m in range(m_count):
                        x0 = r0[m]
                        x1 = r1[m]
                        r0[m] = c * x0 - s * x1
                        r1[m] = c * x1 + s * x0
                elif kind == KIND_RZ:
                    for m in range(m_count):
                        r0[m] = (c + js) * r0[m]
                        r1[m] = (c - js) * r1[m]
                else:  # H
                    for m in range(m_count):
                        x0 = r0[m]
                        x1 = r1[m]
                        r0[m] = (x0 + x1) * _INV_SQRT2
                        r1[m] = (x0 - x1) * _INV_SQRT2
    else:
        sa = 1 << qa
        sb = 1 << qb
        for idx in range(dim):
            if (idx & sa) == 0 and (idx & sb) == 0:
                r00 = a[idx]
                rA = a[idx + sa]
                rB = a[idx + sb]
                rAB = a[idx + sa + sb]
                if kind == KIND_XX:
                    for m in range(m_count):
                        x00 = r00[m]
                        xA = rA[m]
                        xB = rB[m]
                        xAB = rAB[m]
                        r00[m] = c * x00 + js * xAB
                        rAB[m] = c * xAB + js * x00
                        rA[m] = c * xA + js * xB
                        rB[m] = c * xB + js * xA
                elif kind == KIND_YY:
                    for m in range(m_count):
                        x00 = r00[m]
                        xA = rA[m]
                        xB = rB[m]
                        xAB = rAB[m]
                        r00[m] = c * x00 - js * xAB
                        rAB[m] = c * xAB - js * x00
                        rA[m] = c * xA + js * xB
                        rB[m] = c * xB + js * xA
                else:  # ZZ
                    for m in range(m_count):
                        r00[m] = (c + js) * r00[m]
                        rAB[m] = (c + js) * rAB[m]
                        rA[m] = (c - js) * rA[m]
                        rB[m] = (c - js) * rB[m]


@njit(cache=True)
def grad_term(b, k, kind, qa, qb):  # pragma: no cover - exercised via wrappers
    """``Im( sum_m <b_m| G |k_m> )`` for the generator of the given gate kind."""
    dim, m_count = b.shape
    acc = 0.0
    if kind <= KIND_RZ:
        step = 1 << qa
        for hi in range(0, dim, 2 * step):
            for i0 in range(hi, hi + step):
                i1 = i0 + step
                b0 = b[i0]
                b1 = b[i1]
                k0 = k[i0]
                k1 = k[i1]
                if kind == KIND_RX:
                    for m in range(m_count):
                        z = np.conj(b0[m]) * k1[m] + np.conj(b1[m]) * k0[m]
                        acc += z.imag
                elif kind == KIND_RY:
                    for m in range(m_count):
                        acc += (np.conj(b1[m]) * k0[m]).real
                        acc -= (np.conj(b0[m]) * k1[m]).real
                else:  # RZ
                    for m in range(m_count):
                        z = np.conj(b0[m]) * k0[m] - np.conj(b1[m]) * k1[m]
                        acc += z.imag
    else:
        sa = 1 << qa
        sb = 1 << qb
        for idx in range(dim):
            if (idx & sa) == 0 and (idx & sb) == 0:
                b00 = b[idx]
                bA = b[idx + sa]
                bB = b[idx + sb]
                bAB = b[idx + sa + sb]
                k00 = k[idx]
                kA = k[idx + sa]
                kB = k[idx + sb]
                kAB = k[idx + sa + sb]
                if kind == KIND_XX:
                    for m in range(m_count):
                        z = (
                            np.conj(b00[m]) * kAB[m]
                            + np.conj(bAB[m]) * k00[m]
                            + np.conj(bA[m]) * kB[m]
                            + np.conj(bB[m]) * kA[m]
                        )
                        acc += z.imag
                elif kind == KIND_YY:
                    for m in range(m_count):
                        z = (
                            -np.conj(b00[m]) * kAB[m]
                            - np.conj(bAB[m]) * k00[m]
                            + np.conj(bA[m]) * kB[m]
                            + np.conj(bB[m]) * kA[m]
                        )
                        acc += z.imag
                else:  # ZZ
                    for m in range(m_count):
                        z = (
                            np.conj(b00[m]) * k00[m]
                            + np.conj(bAB[m]) * kAB[m]
                            - np.conj(bA[m]) * kA[m]
                            - np.conj(bB[m]) * kB[m]
                        )
                        acc += z.imag
    return acc


@njit(cache=True)
def run_forward(a, kinds, qa, qb, pidx, base, params):  # pragma: no cover
    for g in range(kinds.shape[0]):
        theta = params[pidx[g]] if pidx[g] >= 0 else base[g]
        apply_gate(a, kinds[g], qa[g], qb[g], theta)


@njit(cache=True)
def run_adjoint(k, b, kinds, qa, qb, pidx, base, params, grads):  # pragma: no cover
    """Reverse sweep accumulating dL/d(params) into ``grads``.

    On entry ``k`` holds the post-circuit states and ``b`` the loss cogradient
    d L / d conj(psi) per trajectory (weights included).  Both arrays are
    rewound in place to the circuit input frame.
    """
    for g in range(kinds.shape[0] - 1, -1, -1):
        theta = params[pidx[g]] if pidx[g] >= 0 else base[g]
        if pidx[g] >= 0:
            grads[pidx[g]] += grad_term(b, k, kinds[g], qa[g], qb[g])
        apply_gate(k, kinds[g], qa[g], qb[g], -theta)
        apply_gate(b, kinds[g], qa[g], qb[g], -theta)


# ---------------------------------------------------------------------------
# split real/imaginary variants (training hot path; vectorizes much better)

@njit(cache=True, fastmath=True)
def apply_gate_split(ar, ai, kind, qa, qb, theta):  # pragma: no cover
    dim, m_count = ar.shape
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    if kind <= KIND_RZ or kind == KIND_H:
        step = 1 << qa
        for hi in range(0, dim, 2 * step):
            for i0 in range(hi, hi + step):
                i1 = i0 + step
                r0r = ar[i0]
                r0i = ai[i0]
                r1r = ar[i1]
                r1i = ai[i1]
                if kind == KIND_RX:
                    for m in range(m_count):
                        x0r = r0r[m]; x0i = r0i[m]; x1r = r1r[m]; x1i = r1i[m]
                        r0r[m] = c * x0r + s * x1i
                        r0i[m] = c * x0i - s * x1r
                        r1r[m] = c * x1r + s * x0i
                        r1i[m] = c * x1i - s * x0r
                elif kind == KIND_RY:
                    for m in range(m_count):
                        x0r = r0r[m]; x0i = r0i[m]; x1r = r1r[m]; x1i = r1i[m]
                        r0r[m] = c * x0r - s * x1r
                        r0i[m] = c * x0i - s * x1i
                        r1r[m] = c * x1r + s * x0r
                        r1i[m] = c * x1i + s * x0i
                elif kind == KIND_RZ:
                    for m in range(m_count):
                        x0r = r0r[m]; x0i = r0i[m]; x1r = r1r[m]; x1i = r1i[m]
                        r0r[m] = c * x0r + s * x0i
                        r0i[m] = c * x0i - s * x0r
                        r1r[m] = c * x1r - s * x1i
                        r1i[m] = c * x1i + s * x1r
                else:  # H
                    for m in range(m_count):
                        x0r = r0r[m]; x0i = r0i[m]; x1r = r1r[m]; x1i = r1i[m]
                        r0r[m] = (x0r + x1r) * _INV_SQRT2
                        r0i[m] = (x0i + x1i) * _INV_SQRT2
                        r1r[m] = (x0r - x1r) * _INV_SQRT2
                        r1i[m] = (x0i - x1i) * _INV_SQRT2
    else:
        sa = 1 << qa
        sb = 1 << qb
        for idx in range(dim):
            if (idx & sa) == 0 and (idx & sb) == 0:
                r00r = ar[idx]; r00i = ai[idx]
                rAr = ar[idx + sa]; rAi = ai[idx + sa]
                rBr = ar[idx + sb]; rBi = ai[idx + sb]
                rABr = ar[idx + sa + sb]; rABi = ai[idx + sa + sb]
                if kind == KIND_XX:
                    for m in range(m_count):
                        x00r = r00r[m]; x00i = r00i[m]; xABr = rABr[m]; xABi = rABi[m]
                        xAr = rAr[m]; xAi = rAi[m]; xBr = rBr[m]; xBi = rBi[m]
                        r00r[m] = c * x00r + s * xABi
                        r00i[m] = c * x00i - s * xABr
                        rABr[m] = c * xABr + s * x00i
                        rABi[m] = c * xABi - s * x00r
                        rAr[m] = c * xAr + s * xBi
                        rAi[m] = c * xAi - s * xBr
                        rBr[m] = c * xBr + s * xAi
                        rBi[m] = c * xBi - s * xAr
                elif kind == KIND_YY:
                    for m in range(m_count):
                        x00r = r00r[m]; x00i = r00i[m]; xABr = rABr[m]; xABi = rABi[m]
                        xAr = rAr[m]; xAi = rAi[m]; xBr = rBr[m]; xBi = rBi[m]
                        r00r[m] = c * x00r - s * xABi
                        r00i[m] = c * x00i + s * xABr
                        rABr[m] = c * xABr - s * x00i
                        rABi[m] = c * xABi + s * x00r
                        rAr[m] = c * xAr + s * xBi
                        rAi[m] = c * xAi - s * xBr
                        rBr[m] = c * xBr + s * xAi
                        rBi[m] = c * xBi - s * xAr
                else:  # ZZ
                    for m in range(m_count):
                        x00r = r00r[m]; x00i = r00i[m]; xABr = rABr[m]; xABi = rABi[m]
                        xAr = rAr[m]; xAi = rAi[m]; xBr = rBr[m]; xBi = rBi[m]
                        r00r[m] = c * x00r + s * x00i
                        r00i[m] = c * x00i - s * x00r
                        rABr[m] = c * xABr + s * xABi
                        rABi[m] = c * xABi - s * xABr
                        rAr[m] = c * xAr - s * xAi
                        rAi[m] = c * xAi + s * xAr
                        rBr[m] = c * xBr - s * xBi
                        rBi[m] = c * xBi + s * xBr


@njit(cache=True, fastmath=True)
def grad_term_split(br, bi, kr, ki, kind, qa, qb):  # pragma: no cover
    dim, m_count = br.shape
    acc = 0.0
    if kind <= KIND_RZ:
        step = 1 << qa
        for hi in range(0, dim, 2 * step):
            for i0 in range(hi, hi + step):
                i1 = i0 + step
                b0r = br[i0]; b0i = bi[i0]; b1r = br[i1]; b1i = bi[i1]
                k0r = kr[i0]; k0i = ki[i0]; k1r = kr[i1]; k1i = ki[i1]
                if kind == KIND_RX:
                    for m in range(m_count):
                        acc += b0r[m] * k1i[m] - b0i[m] * k1r[m]
                        acc += b1r[m] * k0i[m] - b1i[m] * k0r[m]
                elif kind == KIND_RY:
                    for m in range(m_count):
                        acc += b1r[m] * k0r[m] + b1i[m] * k0i[m]
                        acc -= b0r[m] * k1r[m] + b0i[m] * k1i[m]
                else:  # RZ
                    for m in range(m_count):
                        acc += b0r[m] * k0i[m] - b0i[m] * k0r[m]
                        acc -= b1r[m] * k1i[m] - b1i[m] * k1r[m]
    else:
        sa = 1 << qa
        sb = 1 << qb
        for idx in range(dim):
            if (idx & sa) == 0 and (idx & sb) == 0:
                iA = idx + sa
                iB = idx + sb
                iAB = idx + sa + sb
                if kind == KIND_XX:
                    for m in range(m_count):
                        acc += br[idx][m] * ki[iAB][m] - bi[idx][m] * kr[iAB][m]
                        acc += br[iAB][m] * ki[idx][m] - bi[iAB][m] * kr[idx][m]
                        acc += br[iA][m] * ki[iB][m] - bi[iA][m] * kr[iB][m]
                        acc += br[iB][m] * ki[iA][m] - bi[iB][m] * kr[iA][m]
                elif kind == KIND_YY:
                    for m in range(m_count):
                        acc -= br[idx][m] * ki[iAB][m] - bi[idx][m] * kr[iAB][m]
                        acc -= br[iAB][m] * ki[idx][m] - bi[iAB][m] * kr[idx][m]
                        acc += br[iA][m] * ki[iB][m] - bi[iA][m] * kr[iB][m]
                        acc += br[iB][m] * ki[iA][m] - bi[iB][m] * kr[iA][m]
                else:  # ZZ
                    for m in range(m_count):
                        acc += br[idx][m] * ki[idx][m] - bi[idx][m] * kr[idx][m]
                        acc += br[iAB][m] * ki[iAB][m] - bi[iAB][m] * kr[iAB][m]
                        acc -= br[iA][m] * ki[iA][m] - bi[iA][m] * kr[iA][m]
                        acc -= br[iB][m] * ki[iB][m] - bi[iB][m] * kr[iB][m]
    return acc


@njit(cache=True)
def run_forward_split(ar, ai, kinds, qa, qb, pidx, base, params):  # pragma: no cover
    for g in range(kinds.shape[0]):
        theta = params[pidx[g]] if pidx[g] >= 0 else base[g]
        apply_gate_split(ar, ai, kinds[g], qa[g], qb[g], theta)


@njit(cache=True)
def run_adjoint_split(
    kr, ki, br, bi, kinds, qa, qb, pidx, base, params, grads
):  # pragma: no cover
    for g in range(kinds.shape[0] - 1, -1, -1):
        theta = params[pidx[g]] if pidx[g] >= 0 else base[g]
        if pidx[g] >= 0:
            grads[pidx[g]] += grad_term_split(br, bi, kr, ki, kinds[g], qa[g], qb[g])
        apply_gate_split(kr, ki, kinds[g], qa[g], qb[g], -theta)
        apply_gate_split(br, bi, kinds[g], qa[g], qb[g], -theta)
