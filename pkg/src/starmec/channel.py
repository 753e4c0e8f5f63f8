"""Per-slot Rician links, surface coefficient algebra, SINR/rate and the
surface power draw.

Both hops (user -> surface, surface -> base station) are Rician with a
steering-vector line-of-sight part and unit-variance circular complex
Gaussian scatter, scaled by sqrt(ref_gain * d^-exponent).  Arrays at the
surface and the base station are uniform linear along the Y axis with
half-wavelength spacing, so element m contributes phase pi * m * u_y for a
unit arrival direction u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, UserRecord, substream

_CHANNEL_SPACE = 0xC4A  # spawn-key namespace for channel draws


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelRealization:
    """One slot's links: user->surface rows (K x M) and surface->BS matrix (M x B)."""

    g_user_ris: np.ndarray   # complex, shape (K, M)
    g_ris_bs: np.ndarray     # complex, shape (M, B)
    d_user_ris: np.ndarray   # metres, shape (K,)
    d_ris_bs: float


@dataclass(frozen=True)
class RisState:
    """Surface control state.

    ``beta_t`` is derived as ``1 - beta_r`` so the energy split holds exactly.
    ``amp`` stores the per-element amplitude gain (sqrt of the power gain).
    """

    beta_r: np.ndarray   # (M,) in [0, 1]
    phi_r: np.ndarray    # (M,) radians on the quantizer grid
    phi_t: np.ndarray    # (M,)
    amp: np.ndarray      # (M,) in [1, amp_max]

    @property
    def beta_t(self) -> np.ndarray:
        return 1.0 - self.beta_r

    def beta(self, side: str) -> np.ndarray:
        return self.beta_r if side == "r" else self.beta_t

    def phi(self, side: str) -> np.ndarray:
        return self.phi_r if side == "r" else self.phi_t


def initial_ris_state(sc: Scenario) -> RisState:
    """Even split, zero phases, unit amplification."""
    m = sc.num_elements
    return project_ris(
        RisState(beta_r=np.full(m, 0.5), phi_r=np.zeros(m),
                 phi_t=np.zeros(m), amp=np.ones(m)),
        sc,
    )


def project_ris(ris: RisState, sc: Scenario) -> RisState:
    """Clip to feasible ranges, quantize phases, apply the mode's structure."""
    beta_r = np.clip(ris.beta_r, 0.0, 1.0)
    amp = np.clip(ris.amp, 1.0, sc.amp_max)
    if sc.ris_mode in ("active_reflect", "passive_reflect"):
        beta_r = np.ones_like(beta_r)
    if sc.ris_mode in ("passive_star", "passive_reflect"):
        amp = np.ones_like(amp)
    return RisState(
        beta_r=beta_r,
        phi_r=quantize_phase(ris.phi_r, sc.phase_bits),
        phi_t=quantize_phase(ris.phi_t, sc.phase_bits),
        amp=amp,
    )


def ris_invariants_ok(ris: RisState, sc: Scenario) -> bool:
    grid = phase_grid_step(sc.phase_bits)
    levels = np.round(np.concatenate([ris.phi_r, ris.phi_t]) / grid)
    on_grid = np.allclose(levels * grid, np.concatenate([ris.phi_r, ris.phi_t]),
                          rtol=0, atol=1e-12)
    ok = (
        np.all(ris.beta_r >= 0) and np.all(ris.beta_r <= 1)
        and np.all(ris.beta_r + ris.beta_t == 1.0)
        and np.all(ris.amp >= 1) and np.all(ris.amp <= sc.amp_max)
        and bool(on_grid)
    )
    if sc.ris_mode in ("active_reflect", "passive_reflect"):
        ok = ok and np.all(ris.beta_r == 1.0)
    if sc.ris_mode in ("passive_star", "passive_reflect"):
        ok = ok and np.all(ris.amp == 1.0)
    return bool(ok)


# ---------------------------------------------------------------------------
# sampling

def steering_vector(n: int, unit_y: float) -> np.ndarray:
    """Half-wavelength ULA response along Y for a unit direction component."""
    return np.exp(1j * np.pi * np.arange(n) * unit_y)


def sample_channels(sc: Scenario, users: list[UserRecord], slot: int,
                    seed: int | None = None,
                    rng: np.random.Generator | None = None) -> ChannelRealization:
    """Draw one slot's Rician realization, deterministic per (seed, slot)."""
    if rng is None:
        if seed is None:
            seed = sc.seed
        rng = substream(seed, _CHANNEL_SPACE, slot)
    ris_pos = np.asarray(sc.ris_position)
    bs_pos = np.asarray(sc.bs_position)
    k_count = len(users)
    m = sc.num_elements
    b = sc.num_bs_antennas

    pos = np.array([u.position for u in users])
    diff = ris_pos[None, :] - pos
    d_user = np.linalg.norm(diff, axis=1)
    if np.any(d_user <= 0):
        raise ChannelError("user located exactly at the surface position")
    d_bs = float(np.linalg.norm(bs_pos - ris_pos))
    if d_bs <= 0:
        raise ChannelError("surface and base station positions coincide")

    los_scale = np.sqrt(sc.rician_factor / (1.0 + sc.rician_factor))
    nlos_scale = np.sqrt(1.0 / (1.0 + sc.rician_factor))

    # user -> surface rows
    unit_y_user = diff[:, 1] / d_user
    los_u = np.exp(1j * np.pi * np.outer(unit_y_user, np.arange(m)))
    nlos_u = (rng.standard_normal((k_count, m)) + 1j * rng.standard_normal((k_count, m)))
    nlos_u /= np.sqrt(2.0)
    amp_u = np.sqrt(sc.ref_gain * d_user ** (-sc.path_loss_exp))
    g_user_ris = amp_u[:, None] * (los_scale * los_u + nlos_scale * nlos_u)

    # surface -> BS matrix (rank-1 line of sight)
    unit_rb = (bs_pos - ris_pos) / d_bs
    a_ris = steering_vector(m, unit_rb[1])
    a_bs = steering_vector(b, -unit_rb[1])
    los_g = np.outer(a_ris, a_bs)
    nlos_g = (rng.standard_normal((m, b)) + 1j * rng.standard_normal((m, b)))
    nlos_g /= np.sqrt(2.0)
    amp_g = np.sqrt(sc.ref_gain * d_bs ** (-sc.path_loss_exp))
    g_ris_bs = amp_g * (los_scale * los_g + nlos_scale * nlos_g)

    return ChannelRealization(
        g_user_ris=g_user_ris, g_ris_bs=g_ris_bs,
        d_user_ris=d_user, d_ris_bs=d_bs,
    )


# ---------------------------------------------------------------------------
# coefficient algebra

def phase_grid_step(bits: int) -> float:
    return np.pi / 2 ** (bits - 1)


def quantize_phase(phi, bits: int):
    """Snap to the nearest grid point iota * pi / 2^(bits-1), wrapped to [0, 2pi)."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    step = phase_grid_step(bits)
    idx = np.round(np.asarray(phi, dtype=float) / step) % 2 ** bits
    out = idx * step
    if np.isscalar(phi) or np.ndim(phi) == 0:
        return float(out)
    return out


def coefficient_matrix(ris: RisState, side: str) -> np.ndarray:
    """Diagonal reflection/transmission coefficient matrix for one side."""
    return np.diag(ris.beta(side) * np.exp(1j * ris.phi(side)))


def coefficient_diag(ris: RisState, side: str) -> np.ndarray:
    return ris.beta(side) * np.exp(1j * ris.phi(side))


def equivalent_channel(ch: ChannelRealization, ris: RisState, k: int,
                       side: str) -> np.ndarray:
    """Cascaded user->surface->BS channel row for user k (length B)."""
    row = ch.g_user_ris[k]
    if row.shape[0] != ch.g_ris_bs.shape[0]:
        raise ChannelError("element-count mismatch between the two hops")
    return (row * coefficient_diag(ris, side) * ris.amp) @ ch.g_ris_bs


def equivalent_gains(ch: ChannelRealization, ris: RisState,
                     sides: list[str] | np.ndarray) -> np.ndarray:
    """Squared norms of every user's equivalent channel (length K)."""
    weight_r = coefficient_diag(ris, "r") * ris.amp
    weight_t = coefficient_diag(ris, "t") * ris.amp
    is_r = np.asarray([s == "r" for s in sides])
    weights = np.where(is_r[:, None], weight_r[None, :], weight_t[None, :])
    eq = (ch.g_user_ris * weights) @ ch.g_ris_bs
    return np.sum(np.abs(eq) ** 2, axis=1)


def forwarded_noise(ch: ChannelRealization, ris: RisState, sc: Scenario,
                    side: str) -> float:
    """Surface noise forwarded to the BS through one side: sigma^2 ||Theta A G||_F^2."""
    row_power = np.sum(np.abs(ch.g_ris_bs) ** 2, axis=1)
    scale = (ris.beta(side) * ris.amp) ** 2
    return float(sc.ris_noise_w * np.dot(scale, row_power))


def sinr(ch: ChannelRealization, ris: RisState, sc: Scenario,
         powers: np.ndarray, k: int, sides) -> float:
    """Uplink SINR of user k; interferers use their own side's coefficients."""
    gains = equivalent_gains(ch, ris, sides)
    return sinr_from_gains(gains, powers, k,
                           forwarded_noise(ch, ris, sc, sides[k]), sc.bs_noise_w)


def sinr_from_gains(gains: np.ndarray, powers: np.ndarray, k: int,
                    ris_noise_term: float, bs_noise: float) -> float:
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ChannelError("transmit powers must be nonnegative")
    signal = gains[k] * powers[k]
    interference = float(np.dot(gains, powers) - signal)
    return float(signal / (interference + ris_noise_term + bs_noise))


def rate(sc: Scenario, gamma: float) -> float:
    """Achievable uplink rate W log2(1 + gamma) in bits/s."""
    if gamma < 0:
        raise ChannelError("SINR must be nonnegative")
    return sc.bandwidth_hz * float(np.log1p(gamma) / np.log(2.0))


def ris_power_usage(ch: ChannelRealization, ris: RisState, sc: Scenario,
                    powers: np.ndarray) -> float:
    """Surface power draw: sum_k ||A G||_F^2 p_k + sigma^2 ||A||_F^2 (watts)."""
    amp_g = float(np.sum((ris.amp[:, None] * np.abs(ch.g_ris_bs)) ** 2))
    return amp_g * float(np.sum(powers)) + sc.ris_noise_w * float(np.sum(ris.amp ** 2))
