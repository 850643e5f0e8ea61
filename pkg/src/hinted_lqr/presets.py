"""Named test plants, the C0 / eps0 calibration sweep and practical parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control_core import SystemTruth, solve_dare
from .controllers import ControllerConfig, gain_cap
from .errors import ConfigError, NotStabilizable, Unstable
from .prng import GaussianStream


@dataclass(frozen=True)
class Preset:
    truth: SystemTruth
    C0: float
    eps0: float
    tau1: int
    r: float
    K0_R_scale: float = 10.0

    @property
    def K0(self) -> np.ndarray:
        t = self.truth
        return solve_dare(t.A_star, t.B_star, t.Q, self.K0_R_scale * t.R).K


def _scalar() -> SystemTruth:
    return SystemTruth([[1.1]], [[1.0]], [[1.0]], [[1.0]], 1.0, name="scalar-appendixB")


def _desk() -> SystemTruth:
    A = np.array([[1.01, 0.1, 0.0],
                  [0.0, 0.95, 0.2],
                  [0.05, 0.0, 0.9]])
    B = np.array([[1.0, 0.0],
                  [0.3, 0.8],
                  [0.0, 0.6]])
    return SystemTruth(A, B, np.eye(3), np.eye(2), 1.0, name="paper-desk-3x2")


def _stable() -> SystemTruth:
    A = np.array([[0.5, 0.1], [0.0, 0.4]])
    B = np.array([[1.0], [0.5]])
    return SystemTruth(A, B, np.eye(2), np.eye(1), 1.0, name="stable-easy")


# C0 / eps0 below were produced by ``calibrate(truth)`` with its defaults.
PRESETS = {
    "scalar-appendixB": lambda: Preset(_scalar(), C0=18.912725845187683, eps0=0.3981071705534973, tau1=100, r=2.0),
    "paper-desk-3x2": lambda: Preset(_desk(), C0=191.04581127800392, eps0=0.3981071705534973, tau1=200, r=2.0),
    "stable-easy": lambda: Preset(_stable(), C0=14.014293731441235, eps0=0.6309573444801936, tau1=100, r=2.0),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown plant preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class Calibration:
    C0: float
    eps0: float
    radii: tuple[float, ...]
    cost_ratio: tuple[float, ...]
    gain_ratio: tuple[float, ...]
    stable: tuple[bool, ...]


def calibrate(truth: SystemTruth, radii=None, directions: int = 64, seed: int = 0) -> Calibration:
    """Perturbation sweep for the certainty-equivalence constants.

    For each radius ``eps`` it perturbs ``A*`` and ``B*`` by random matrices of
    spectral norm ``eps`` and solves the Riccati equation for the perturbed
    pair. ``C0`` is the largest of ``(J(K) - J*)/eps^2`` and ``||K - K*||/eps``
    seen at any stabilising radius; ``eps0`` is the largest radius for which
    every sampled gain still stabilises the true plant.
    """
    if radii is None:
        radii = tuple(float(x) for x in np.geomspace(1e-3, 1.0, 16))
    n, m = truth.n, truth.m
    stream = GaussianStream(seed, "calibrate", n * (n + m))
    cost_ratio, gain_ratio, stable = [], [], []
    for ri, eps in enumerate(radii):
        worst_c = worst_g = 0.0
        ok = True
        for d in range(directions):
            D = stream.at(ri * directions + d).reshape(n, n + m)
            dA, dB = D[:, :n], D[:, n:]
            dA = eps * dA / np.linalg.norm(dA, 2)
            dB = eps * dB / np.linalg.norm(dB, 2)
            try:
                K = solve_dare(truth.A_star + dA, truth.B_star + dB, truth.Q, truth.R).K
                J = truth.cost_of(K)
            except (NotStabilizable, Unstable):
                ok = False
                break
            worst_c = max(worst_c, (J - truth.J_star) / eps ** 2)
            worst_g = max(worst_g, float(np.linalg.norm(K - truth.K_star, 2)) / eps)
        cost_ratio.append(worst_c if ok else math.inf)
        gain_ratio.append(worst_g if ok else math.inf)
        stable.append(ok)
        if not ok:
            break
    good = [i for i, s in enumerate(stable) if s]
    if not good:
        raise ValueError("no stabilising perturbation radius in the sweep")
    eps0 = radii[good[-1]]
    C0 = max(max(cost_ratio[i], gain_ratio[i]) for i in good)
    n_done = len(stable)
    return Calibration(C0=float(C0), eps0=float(eps0), radii=tuple(radii[:n_done]),
                       cost_ratio=tuple(cost_ratio), gain_ratio=tuple(gain_ratio), stable=tuple(stable))


def practical_params(preset: Preset, T: int, alg: int = 1, tau1: int | None = None,
                     lam: float = 1.0, r: float | None = None, mu1: float | None = None) -> ControllerConfig:
    """Desk-scale parameters that keep the schedule structure.

    ``k`` follows the theoretical formula with ``nu = J(K0)``; the state cap
    is ``135 n k^2 sigma^2 log(4T)`` (the ``k^6`` factor dropped); ``tau1`` and
    ``lam`` are supplied directly.
    """
    t = preset.truth
    nu = t.cost_of(preset.K0)
    k = gain_cap(nu, preset.C0, preset.eps0, t.alpha0, t.sigma2)
    r = preset.r if r is None else r
    tau1 = preset.tau1 if tau1 is None else tau1
    x_b = 135.0 * t.n * k ** 2 * t.sigma2 * math.log(4.0 * T)
    if alg == 2:
        p = 4.0 / (2.0 + k ** 2)
        mu_star = t.mu_star
        if mu1 is None:
            mu1 = 0.5 * mu_star
        r = 2.0
    else:
        p = r ** 2 / (2.0 + k ** 2)
        mu_star = None
        mu1 = None
    return ControllerConfig(k=k, ell=1.0 / (2.0 * k ** 2), tau1=int(tau1), r=float(r), x_b=x_b, lam=lam,
                            p=p, T=int(T), sigma2=t.sigma2, mu1=mu1, mu_star=mu_star, C0=preset.C0,
                            eps0=preset.eps0, nu=nu, params_mode="practical", n=t.n, m=t.m)
