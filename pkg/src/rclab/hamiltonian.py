"""Hamiltonian ``H = h + p.b + sigma.P`` and its x-derivatives.

All functions take weight rows over the action atoms, so a strict action is
a one-hot row and a relaxed control is its weight vector; the value is the
weight-average of the atomic values.
"""

from __future__ import annotations

import numpy as np

from .problem import FD_STEP, FD_STEP_NESTED, ProblemSpec, as_paths, central_difference, mix_atoms


def hamiltonian_terms(spec: ProblemSpec, t, x, weights, p, P):
    """``(h, p.b, sigma.P)`` averaged over the atoms, each of shape ``(P,)``."""
    x = as_paths(x)
    atoms = spec.action_grid
    n_paths = x.shape[0]
    p = np.broadcast_to(np.asarray(p, dtype=float), (n_paths, spec.state_dim))
    P = np.broadcast_to(np.asarray(P, dtype=float), (n_paths, spec.state_dim, spec.noise_dim))
    h = mix_atoms(spec.running_cost, atoms, t, x, weights)
    b = mix_atoms(spec.drift, atoms, t, x, weights)
    s = mix_atoms(spec.diffusion, atoms, t, x, weights)
    return h, np.sum(p * b, axis=-1), np.sum(s * P, axis=(-2, -1))


def hamiltonian_value(spec, t, x, weights, p, P):
    h, pb, sP = hamiltonian_terms(spec, t, x, weights, p, P)
    return h + pb + sP


def _has_first_order_oracles(spec):
    return all(f is not None for f in (spec.drift_x, spec.diffusion_x, spec.running_cost_x))


def hamiltonian_gradient(spec: ProblemSpec, t, x, weights, p, P):
    """``H_x = h_x + b_x^T p + sum_{i,l} P_il d(sigma_il)/dx``, shape ``(P, n)``."""
    x = as_paths(x)
    atoms = spec.action_grid
    n_paths = x.shape[0]
    p = np.broadcast_to(np.asarray(p, dtype=float), (n_paths, spec.state_dim))
    P = np.broadcast_to(np.asarray(P, dtype=float), (n_paths, spec.state_dim, spec.noise_dim))
    hx = mix_atoms(spec.running_cost_gradient, atoms, t, x, weights)
    bx = mix_atoms(spec.drift_jacobian, atoms, t, x, weights)
    sx = mix_atoms(spec.diffusion_jacobian, atoms, t, x, weights)
    return hx + np.einsum("pij,pi->pj", bx, p) + np.einsum("pilj,pil->pj", sx, P)


def hamiltonian_hessian(spec: ProblemSpec, t, x, weights, p, P):
    """``H_xx`` of shape ``(P, n, n)``; analytic oracle or differenced gradient."""
    x = as_paths(x)
    if spec.hamiltonian_xx is not None:
        return mix_atoms(lambda tt, y, a: spec.hamiltonian_xx(tt, y, a, p, P),
                         spec.action_grid, t, x, weights)
    step = FD_STEP if _has_first_order_oracles(spec) else FD_STEP_NESTED
    hess = central_difference(lambda y: hamiltonian_gradient(spec, t, y, weights, p, P), x, step)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))
