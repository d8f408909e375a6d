"""Pure-Python transmission kernel.

Reference implementation of the hot loop; ``_kernel.pyx`` mirrors it
line for line. State layout ``x`` is ``(4, ng)``: rotor angle, speed
deviation, mechanical power, valve position (system per-unit).
"""
import numpy as np

OK = 0
NETWORK_DIVERGED = 1
TRIPPED = 2


def solve_network(zr, gen_pos, y_gen, e_gen, s_obs, v_obs, tol, maxit):
    """Fixed-point solve of the reduced network with constant-power loads.

    Iterates ``V = Zr (I_gen - conj(S / V))`` in place on ``v_obs``.
    Returns the iteration count, or -1 without convergence.
    """
    inj = np.zeros(len(v_obs), dtype=complex)
    inj[gen_pos] += e_gen * y_gen
    for it in range(1, maxit + 1):
        cur = inj - np.conj(s_obs / v_obs)
        v_new = zr @ cur
        err = np.max(np.abs(v_new - v_obs))
        v_obs[:] = v_new
        if err < tol:
            return it
    return -1


def _deriv(x, p, zr, gen_pos, y_gen, s_obs, v_obs, tol, maxit, dx):
    delta, domega, pm, pv = x
    e_gen = p["emag"] * np.exp(1j * delta)
    if solve_network(zr, gen_pos, y_gen, e_gen, s_obs, v_obs, tol, maxit) < 0:
        return False
    i_gen = (e_gen - v_obs[gen_pos]) * y_gen
    pe = (e_gen * np.conj(i_gen)).real
    target = p["pref"] + p["pagc"] - p["gain"] * domega
    tg, tt = p["tg"], p["tt"]
    pv_eff = np.where(tg > 0, pv, target)
    pm_eff = np.where(tt > 0, pm, pv_eff)
    dx[0] = p["ws"] * domega
    dx[1] = (pm_eff - pe - p["damp"] * domega) / (2.0 * p["inertia"])
    dx[2] = np.where(tt > 0, (pv_eff - pm) / np.where(tt > 0, tt, 1.0), 0.0)
    dx[3] = np.where(tg > 0, (target - pv) / np.where(tg > 0, tg, 1.0), 0.0)
    return True


def _algebraic(x, p):
    target = p["pref"] + p["pagc"] - p["gain"] * x[1]
    x[3] = np.where(p["tg"] > 0, x[3], target)
    x[2] = np.where(p["tt"] > 0, x[2], x[3])


def integrate(x, params, zr, gen_pos, y_gen, s_obs, v_obs, dt, n_steps,
              tol, maxit, trip):
    """Advance ``x`` by ``n_steps`` explicit RK4 steps of size ``dt`` in place.

    ``v_obs`` is the warm start and on return holds the network solution
    at the final state. Returns ``(status, steps_done)``.
    """
    k1 = np.empty_like(x)
    k2 = np.empty_like(x)
    k3 = np.empty_like(x)
    k4 = np.empty_like(x)
    for step in range(n_steps):
        if not _deriv(x, params, zr, gen_pos, y_gen, s_obs, v_obs, tol, maxit, k1):
            return NETWORK_DIVERGED, step
        if not _deriv(x + 0.5 * dt * k1, params, zr, gen_pos, y_gen, s_obs,
                      v_obs, tol, maxit, k2):
            return NETWORK_DIVERGED, step
        if not _deriv(x + 0.5 * dt * k2, params, zr, gen_pos, y_gen, s_obs,
                      v_obs, tol, maxit, k3):
            return NETWORK_DIVERGED, step
        if not _deriv(x + dt * k3, params, zr, gen_pos, y_gen, s_obs,
                      v_obs, tol, maxit, k4):
            return NETWORK_DIVERGED, step
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _algebraic(x, params)
        if np.max(np.abs(x[1])) > trip:
            return TRIPPED, step + 1
    e_gen = params["emag"] * np.exp(1j * x[0])
    if solve_network(zr, gen_pos, y_gen, e_gen, s_obs, v_obs, tol, maxit) < 0:
        return NETWORK_DIVERGED, n_steps
    return OK, n_steps
