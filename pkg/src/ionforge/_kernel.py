"""Compiled circuit kernel: gate construction, forward product, gradient.

Circuits arrive encoded as integer arrays (kind, qubit, parameter offset).
Kinds: 0 = MS, 1 = CXY, 2 = Z. Z gates are diagonal and are applied as row
or column scalings, never as dense products.
"""

import numpy as np
from numba import njit

KIND_MS = 0
KIND_CXY = 1
KIND_Z = 2


@njit(cache=True)
def _build_gates(kinds, qubits, offsets, params, xy, xy_e, ms, ms_e,
                 phase_idx, z_signs, want_grad):
    n_gates = kinds.shape[0]
    n_qubits = xy.shape[0] - 1
    d = xy.shape[1]
    gates = np.zeros((n_gates, d, d), dtype=np.complex128)
    dgates = np.zeros((n_gates if want_grad else 0, 2, d, d), dtype=np.complex128)
    table = np.empty(2 * n_qubits + 1, dtype=np.complex128)
    for l in range(n_gates):
        theta = params[offsets[l]]
        if kinds[l] == KIND_Z:
            row = z_signs[qubits[l] - 1]
            for i in range(d):
                z = np.exp(-0.5j * theta * row[i])
                gates[l, i, i] = z
                if want_grad:
                    dgates[l, 0, i, i] = -0.5j * row[i] * z
            continue
        phi = params[offsets[l] + 1]
        if kinds[l] == KIND_MS:
            stack = ms
            eigs = ms_e
            scale = 0.25
        else:
            stack = xy
            eigs = xy_e
            scale = 0.5
        m = eigs.shape[0]
        coef = np.empty(m, dtype=np.complex128)
        dcoef = np.empty(m, dtype=np.complex128)
        for k in range(m):
            coef[k] = np.exp(-1j * scale * theta * eigs[k])
            dcoef[k] = -1j * scale * eigs[k] * coef[k]
        for q in range(2 * n_qubits + 1):
            table[q] = np.exp(1j * phi * (q - n_qubits))
        for i in range(d):
            for j in range(d):
                s = 0j
                ds = 0j
                for k in range(m):
                    p = stack[k, i, j]
                    if p != 0.0:
                        s += coef[k] * p
                        ds += dcoef[k] * p
                ph = table[phase_idx[i, j]]
                u = ph * s
                gates[l, i, j] = u
                if want_grad:
                    dgates[l, 0, i, j] = ph * ds
                    dgates[l, 1, i, j] = 1j * (phase_idx[i, j] - n_qubits) * u
    return gates, dgates


@njit(cache=True)
def _left_apply(kind, gate, mat):
    """Return ``gate @ mat``."""
    if kind == KIND_Z:
        d = mat.shape[0]
        out = np.empty_like(mat)
        for i in range(d):
            out[i, :] = gate[i, i] * mat[i, :]
        return out
    return gate @ mat


@njit(cache=True)
def _prefix_products(kinds, gates):
    """``prefix[l] = V_l ... V_1`` (gate 1 acts first)."""
    n_gates = kinds.shape[0]
    d = gates.shape[1]
    prefix = np.empty((n_gates + 1, d, d), dtype=np.complex128)
    prefix[0] = np.eye(d, dtype=np.complex128)
    for l in range(n_gates):
        prefix[l + 1] = _left_apply(kinds[l], gates[l], prefix[l])
    return prefix


@njit(cache=True)
def forward(kinds, qubits, offsets, params, xy, xy_e, ms, ms_e, phase_idx, z_signs):
    gates, _ = _build_gates(kinds, qubits, offsets, params, xy, xy_e, ms, ms_e,
                            phase_idx, z_signs, False)
    return _prefix_products(kinds, gates)[kinds.shape[0]]


@njit(cache=True)
def overlap_cost(v, target):
    """``1 - |tr(V U^dagger)|^2 / d^2`` and the trace itself."""
    d = v.shape[0]
    a = 0j
    for i in range(d):
        for j in range(d):
            a += v[i, j] * np.conj(target[i, j])
    f = (a.real * a.real + a.imag * a.imag) / (d * d)
    return 1.0 - f, a


@njit(cache=True)
def cost_and_grad(kinds, qubits, offsets, n_params, params, target,
                  xy, xy_e, ms, ms_e, phase_idx, z_signs):
    gates, dgates = _build_gates(kinds, qubits, offsets, params, xy, xy_e, ms, ms_e,
                                 phase_idx, z_signs, True)
    prefix = _prefix_products(kinds, gates)
    n_gates = kinds.shape[0]
    d = target.shape[0]
    cost, a = overlap_cost(prefix[n_gates], target)
    grad = np.zeros(n_params)
    # suffix = U^dagger V_L ... V_{l+1}, accumulated from the last gate back
    suffix = np.ascontiguousarray(target.conj().T)
    norm = 2.0 / (d * d)
    for l in range(n_gates - 1, -1, -1):
        before = prefix[l]
        if kinds[l] == KIND_Z:
            t = 0j
            for i in range(d):
                bii = 0j
                for k in range(d):
                    bii += before[i, k] * suffix[k, i]
                t += dgates[l, 0, i, i] * bii
            grad[offsets[l]] = -norm * (np.conj(a) * t).real
            for j in range(d):
                suffix[:, j] = suffix[:, j] * gates[l, j, j]
        else:
            b = before @ suffix
            for slot in range(2):
                t = 0j
                for i in range(d):
                    for j in range(d):
                        t += dgates[l, slot, i, j] * b[j, i]
                grad[offsets[l] + slot] = -norm * (np.conj(a) * t).real
            suffix = suffix @ gates[l]
    return cost, grad


@njit(cache=True)
def lbfgs(kinds, qubits, offsets, n_params, x0, target, xy, xy_e, ms, ms_e,
          phase_idx, z_signs, max_iterations, grad_tolerance, memory_pairs, ftol,
          c1, backtrack, max_backtracks):
    """Compiled twin of ``optimizer.minimize`` for circuit objectives.

    Returns ``(x, f, iterations, evaluations, converged, status)`` with
    status 0 = ok, 1 = non-finite start, 2 = non-finite gradient.
    """
    m = n_params
    x = x0.copy()
    f, g = cost_and_grad(kinds, qubits, offsets, m, x, target, xy, xy_e, ms, ms_e,
                         phase_idx, z_signs)
    n_eval = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return x, f, 0, n_eval, False, 1
    if m == 0:
        return x, f, 0, n_eval, True, 0
    s_hist = np.zeros((memory_pairs, m))
    y_hist = np.zeros((memory_pairs, m))
    rho_hist = np.zeros(memory_pairs)
    alphas = np.zeros(memory_pairs)
    count = 0
    converged = np.max(np.abs(g)) <= grad_tolerance
    it = 0
    while not converged and it < max_iterations:
        it += 1
        # two-loop recursion over the ring buffer, oldest pair at index 0
        q = g.copy()
        for k in range(count - 1, -1, -1):
            alphas[k] = rho_hist[k] * (s_hist[k] @ q)
            q -= alphas[k] * y_hist[k]
        if count > 0:
            yl = y_hist[count - 1]
            q *= (s_hist[count - 1] @ yl) / (yl @ yl)
        for k in range(count):
            beta = rho_hist[k] * (y_hist[k] @ q)
            q += (alphas[k] - beta) * s_hist[k]
        d = -q
        slope = g @ d
        if not slope < 0:
            count = 0
            d = -g
            slope = -(g @ g)
        step = 1.0 if count > 0 else min(1.0, 1.0 / np.max(np.abs(g)))
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = cost_and_grad(kinds, qubits, offsets, m, x_new, target, xy,
                                         xy_e, ms, ms_e, phase_idx, z_signs)
            n_eval += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = True
                break
            step *= backtrack
        if not accepted:
            break
        if not np.all(np.isfinite(g_new)):
            return x, f, it, n_eval, False, 2
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            if count == memory_pairs:
                for k in range(memory_pairs - 1):
                    s_hist[k] = s_hist[k + 1]
                    y_hist[k] = y_hist[k + 1]
                    rho_hist[k] = rho_hist[k + 1]
                count -= 1
            s_hist[count] = s
            y_hist[count] = y
            rho_hist[count] = 1.0 / sy
            count += 1
        decrease = f - f_new
        x = x_new
        f = f_new
        g = g_new
        if np.max(np.abs(g)) <= grad_tolerance:
            converged = True
        elif ftol > 0 and decrease <= ftol * max(abs(f), 1.0):
            break
    return x, f, it, n_eval, converged, 0
