# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled transmission kernel; same contract as ``_kernel_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()

cdef enum:
    OK = 0
    NETWORK_DIVERGED = 1
    TRIPPED = 2


cdef double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef int _solve(double complex[:, ::1] zr, long[::1] gen_pos,
                double complex[::1] y_gen, double complex[::1] e_gen,
                double complex[::1] s_obs, double complex[::1] v,
                double complex[::1] inj, double complex[::1] cur,
                double complex[::1] nxt, double tol, int maxit) nogil:
    cdef Py_ssize_t m = v.shape[0], ng = e_gen.shape[0]
    cdef Py_ssize_t i, j
    cdef int it
    cdef double err, tol2 = tol * tol, d
    cdef double complex acc
    for i in range(m):
        inj[i] = 0
    for i in range(ng):
        inj[gen_pos[i]] = inj[gen_pos[i]] + e_gen[i] * y_gen[i]
    for it in range(1, maxit + 1):
        for i in range(m):
            if s_obs[i] != 0:
                cur[i] = inj[i] - (s_obs[i] / v[i]).conjugate()
            else:
                cur[i] = inj[i]
        err = 0.0
        for i in range(m):
            acc = 0
            for j in range(m):
                acc = acc + zr[i, j] * cur[j]
            d = cabs2(acc - v[i])
            if d > err:
                err = d
            nxt[i] = acc
        for i in range(m):
            v[i] = nxt[i]
        if err < tol2:
            return it
    return -1


def solve_network(zr, gen_pos, y_gen, e_gen, s_obs, v_obs, double tol, int maxit):
    cdef Py_ssize_t m = v_obs.shape[0]
    inj = np.zeros(m, dtype=complex)
    cur = np.zeros(m, dtype=complex)
    nxt = np.zeros(m, dtype=complex)
    return _solve(zr, np.ascontiguousarray(gen_pos, dtype=np.int_),
                  np.ascontiguousarray(y_gen, dtype=complex),
                  np.ascontiguousarray(e_gen, dtype=complex),
                  np.ascontiguousarray(s_obs, dtype=complex),
                  v_obs, inj, cur, nxt, tol, maxit)


cdef int _deriv(double[:, ::1] x, double[::1] emag, double[::1] pref,
                double[::1] pagc, double[::1] gain, double[::1] tg,
                double[::1] tt, double[::1] damp, double[::1] inertia,
                double ws, double complex[:, ::1] zr, long[::1] gen_pos,
                double complex[::1] y_gen, double complex[::1] s_obs,
                double complex[::1] v, double complex[::1] e_gen,
                double complex[::1] inj, double complex[::1] cur,
                double complex[::1] nxt, double tol, int maxit,
                double[:, ::1] dx) nogil:
    cdef Py_ssize_t ng = x.shape[1], i
    cdef double target, pv_eff, pm_eff, pe
    cdef double complex ig
    for i in range(ng):
        e_gen[i] = emag[i] * (cos(x[0, i]) + 1j * sin(x[0, i]))
    if _solve(zr, gen_pos, y_gen, e_gen, s_obs, v, inj, cur, nxt, tol, maxit) < 0:
        return 0
    for i in range(ng):
        ig = (e_gen[i] - v[gen_pos[i]]) * y_gen[i]
        pe = (e_gen[i] * ig.conjugate()).real
        target = pref[i] + pagc[i] - gain[i] * x[1, i]
        pv_eff = x[3, i] if tg[i] > 0 else target
        pm_eff = x[2, i] if tt[i] > 0 else pv_eff
        dx[0, i] = ws * x[1, i]
        dx[1, i] = (pm_eff - pe - damp[i] * x[1, i]) / (2.0 * inertia[i])
        dx[2, i] = (pv_eff - x[2, i]) / tt[i] if tt[i] > 0 else 0.0
        dx[3, i] = (target - x[3, i]) / tg[i] if tg[i] > 0 else 0.0
    return 1


def integrate(double[:, ::1] x, dict params, zr_in, gen_pos_in, y_gen_in,
              s_obs_in, double complex[::1] v_obs, double dt, long n_steps,
              double tol, int maxit, double trip):
    cdef Py_ssize_t ng = x.shape[1], m = v_obs.shape[0], i, r
    cdef long step
    cdef double[::1] emag = np.ascontiguousarray(params["emag"], dtype=float)
    cdef double[::1] pref = np.ascontiguousarray(params["pref"], dtype=float)
    cdef double[::1] pagc = np.ascontiguousarray(params["pagc"], dtype=float)
    cdef double[::1] gain = np.ascontiguousarray(params["gain"], dtype=float)
    cdef double[::1] tg = np.ascontiguousarray(params["tg"], dtype=float)
    cdef double[::1] tt = np.ascontiguousarray(params["tt"], dtype=float)
    cdef double[::1] damp = np.ascontiguousarray(params["damp"], dtype=float)
    cdef double[::1] inertia = np.ascontiguousarray(params["inertia"], dtype=float)
    cdef double ws = params["ws"]
    cdef double complex[:, ::1] zr = np.ascontiguousarray(zr_in, dtype=complex)
    cdef long[::1] gen_pos = np.ascontiguousarray(gen_pos_in, dtype=np.int_)
    cdef double complex[::1] y_gen = np.ascontiguousarray(y_gen_in, dtype=complex)
    cdef double complex[::1] s_obs = np.ascontiguousarray(s_obs_in, dtype=complex)
    cdef double complex[::1] e_gen = np.zeros(ng, dtype=complex)
    cdef double complex[::1] inj = np.zeros(m, dtype=complex)
    cdef double complex[::1] cur = np.zeros(m, dtype=complex)
    cdef double complex[::1] nxt = np.zeros(m, dtype=complex)
    cdef double[:, ::1] xs = np.empty((4, ng))
    cdef double[:, ::1] k1 = np.empty((4, ng))
    cdef double[:, ::1] k2 = np.empty((4, ng))
    cdef double[:, ::1] k3 = np.empty((4, ng))
    cdef double[:, ::1] k4 = np.empty((4, ng))
    cdef double h = 0.5 * dt, sixth = dt / 6.0, target
    cdef int status = OK
    cdef long done = n_steps

    with nogil:
        for step in range(n_steps):
            if not _deriv(x, emag, pref, pagc, gain, tg, tt, damp, inertia, ws,
                          zr, gen_pos, y_gen, s_obs, v_obs, e_gen, inj, cur,
                          nxt, tol, maxit, k1):
                status = NETWORK_DIVERGED
                done = step
                break
            for r in range(4):
                for i in range(ng):
                    xs[r, i] = x[r, i] + h * k1[r, i]
            if not _deriv(xs, emag, pref, pagc, gain, tg, tt, damp, inertia, ws,
                          zr, gen_pos, y_gen, s_obs, v_obs, e_gen, inj, cur,
                          nxt, tol, maxit, k2):
                status = NETWORK_DIVERGED
                done = step
                break
            for r in range(4):
                for i in range(ng):
                    xs[r, i] = x[r, i] + h * k2[r, i]
            if not _deriv(xs, emag, pref, pagc, gain, tg, tt, damp, inertia, ws,
                          zr, gen_pos, y_gen, s_obs, v_obs, e_gen, inj, cur,
                          nxt, tol, maxit, k3):
                status = NETWORK_DIVERGED
                done = step
                break
            for r in range(4):
                for i in range(ng):
                    xs[r, i] = x[r, i] + dt * k3[r, i]
            if not _deriv(xs, emag, pref, pagc, gain, tg, tt, damp, inertia, ws,
                          zr, gen_pos, y_gen, s_obs, v_obs, e_gen, inj, cur,
                          nxt, tol, maxit, k4):
                status = NETWORK_DIVERGED
                done = step
                break
            for r in range(4):
                for i in range(ng):
                    x[r, i] = x[r, i] + sixth * (k1[r, i] + 2.0 * k2[r, i]
                                                 + 2.0 * k3[r, i] + k4[r, i])
            for i in range(ng):
                target = pref[i] + pagc[i] - gain[i] * x[1, i]
                if tg[i] <= 0:
                    x[3, i] = target
                if tt[i] <= 0:
                    x[2, i] = x[3, i]
            for i in range(ng):
                if fabs(x[1, i]) > trip:
                    status = TRIPPED
                    done = step + 1
                    break
            if status != OK:
                break
        if status == OK:
            for i in range(ng):
                e_gen[i] = emag[i] * (cos(x[0, i]) + 1j * sin(x[0, i]))
            if _solve(zr, gen_pos, y_gen, e_gen, s_obs, v_obs, inj, cur, nxt, tol,
                      maxit) < 0:
                status = NETWORK_DIVERGED
    return status, done
