"""Sampler validation against analytically known stationary laws.

For a spatially constant trial with per-particle amplitude alpha,
det-balance fixes the sector law to a truncated geometric:

    P_n = r^n (1 - r) / (1 - r^(n_max + 1)),   r = alpha^2 L^d,

which is the oracle for the chi-square checks below.  The three-state toy
pins the same thing with unequal sector amplitudes: P_n proportional to
|phi_n|^2 L^n.
"""

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from scipy import stats

from bosefock.ansatz import AnsatzHyper, Configuration, init_params
from bosefock.models import DomainSpec, ModelSpec
from bosefock.reference import cs1d_log_state, trap_log_state
from bosefock.sampler import (
    ChainState,
    SampleBatch,
    SamplerSettings,
    initial_particle_number,
    run_chains,
    step,
)

RING = ModelSpec("cs1d", DomainSpec(1, 2.0, "periodic"), coupling=1.0, mu=0.0)
BOX = ModelSpec("lieb_liniger", DomainSpec(1, 1.0, "closed"), coupling=1.0, mu=0.0)
TRAP = ModelSpec("gauss", DomainSpec(2, 10.0, "window"), coupling=0.0, mu=0.0, omega=1.0)


def constant_amp(log_alpha):
    """Trial with log amplitude n * log_alpha, independent of positions."""

    def logamp(params, positions, n):
        del params, positions
        return jnp.asarray(n, dtype=jnp.float64) * log_alpha

    return logamp


def truncated_geometric(r, n_max):
    probs = r ** np.arange(n_max + 1)
    return probs / probs.sum()


def sector_counts(batch: SampleBatch, n_max: int) -> np.ndarray:
    return np.bincount(batch.flat_ns(), minlength=n_max + 1)


def test_settings_defaults_match_published_practice():
    s = SamplerSettings()
    assert s.p_pm == 0.25
    assert s.chains == 100
    assert s.sweep == 30
    assert not s.single_particle_moves


def test_settings_validation():
    with pytest.raises(ValueError):
        SamplerSettings(p_pm=0.5)  # 2 p_pm must stay below 1
    with pytest.raises(ValueError):
        SamplerSettings(p_pm=-0.1)
    with pytest.raises(ValueError):
        SamplerSettings(width=0.0)
    with pytest.raises(ValueError):
        SamplerSettings(chains=0)
    with pytest.raises(ValueError):
        SamplerSettings(burn_in=-1)


def test_sector_law_decaying_geometric():
    # alpha = 0.8 on the unit box: r = 0.64
    n_max = 6
    expected = truncated_geometric(0.64, n_max)
    # frozen oracle head: (1 - 0.64) / (1 - 0.64^7)
    assert np.isclose(expected[0], 0.37656134, atol=1e-7)
    settings = SamplerSettings(chains=50, sweep=10, samples_per_chain=2000, burn_in=100)
    batch = run_chains(
        settings, BOX, constant_amp(np.log(0.8)), None,
        n_max=n_max, initial_n=3, seed=11,
    )
    counts = sector_counts(batch, n_max)
    assert counts.sum() == 100_000
    p = stats.chisquare(counts, expected * counts.sum()).pvalue
    assert p > 0.01, f"sector law rejected: p={p}, counts={counts}"


def test_sector_law_growing_geometric_carries_volume_factor():
    # alpha = 1 on an L = 2 ring: r = L^d = 2, so the volume factor alone
    # tilts the law upward
    n_max = 5
    expected = truncated_geometric(2.0, n_max)
    assert np.allclose(expected, np.array([1, 2, 4, 8, 16, 32]) / 63.0)
    settings = SamplerSettings(chains=50, sweep=10, samples_per_chain=2000, burn_in=100)
    batch = run_chains(
        settings, RING, constant_amp(0.0), None, n_max=n_max, initial_n=2, seed=12,
    )
    counts = sector_counts(batch, n_max)
    p = stats.chisquare(counts, expected * counts.sum()).pvalue
    assert p > 0.01, f"sector law rejected: p={p}, counts={counts}"


def test_three_state_toy_detailed_balance():
    # phi_0 = 1, phi_1 = 2, phi_2 = 0.7 on the unit box: P_n = |phi_n|^2 / 5.49
    amps = jnp.log(jnp.asarray([1.0, 2.0, 0.7]))

    def logamp(params, positions, n):
        del params, positions
        return amps[jnp.clip(n, 0, 2)]

    expected = np.array([1.0, 4.0, 0.49]) / 5.49
    settings = SamplerSettings(chains=20, sweep=10, samples_per_chain=5000, burn_in=100)
    batch = run_chains(settings, BOX, logamp, None, n_max=2, initial_n=1, seed=13)
    counts = sector_counts(batch, 2)
    assert counts.sum() == 100_000  # 1e6 steps of thinning behind it
    p = stats.chisquare(counts, expected * counts.sum()).pvalue
    assert p > 0.01, f"toy law rejected: p={p}, counts={counts}"


def test_canonical_mode_freezes_particle_number():
    settings = SamplerSettings(p_pm=0.0, chains=8, sweep=5, samples_per_chain=40, burn_in=10)
    batch = run_chains(
        settings, RING, cs1d_log_state(1.0, 2.0), None, n_max=5, initial_n=3, seed=3,
    )
    assert np.all(batch.ns == 3)
    rates = batch.acceptance()
    assert 0.0 < rates["displace"] <= 1.0
    assert np.isnan(rates["insert"]) and np.isnan(rates["remove"])


def test_vacuum_displacement_is_identity_accept():
    settings = SamplerSettings(p_pm=0.0, chains=4, sweep=3, samples_per_chain=20, burn_in=5)
    batch = run_chains(
        settings, RING, cs1d_log_state(1.0, 2.0), None, n_max=4, initial_n=0, seed=4,
    )
    assert np.all(batch.ns == 0)
    assert batch.acceptance()["displace"] == 1.0


def test_determinism_same_seed_same_stream():
    settings = SamplerSettings(chains=6, sweep=4, samples_per_chain=25, burn_in=10)
    kwargs = dict(n_max=5, initial_n=2, seed=42)
    a = run_chains(settings, RING, cs1d_log_state(3.0, 2.0), None, **kwargs)
    b = run_chains(settings, RING, cs1d_log_state(3.0, 2.0), None, **kwargs)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.ns, b.ns)
    assert np.array_equal(a.log_amps, b.log_amps)
    c = run_chains(settings, RING, cs1d_log_state(3.0, 2.0), None, n_max=5, initial_n=2, seed=43)
    assert not np.array_equal(a.ns, c.ns) or not np.array_equal(a.positions, c.positions)


def test_capacity_insert_always_rejected():
    # phi_1 >> phi_0 pins the walker at n = n_max = 1; every insertion
    # attempt hits capacity and must be auto-rejected
    amps = jnp.asarray([0.0, 20.0])

    def logamp(params, positions, n):
        del params, positions
        return amps[jnp.clip(n, 0, 1)]

    settings = SamplerSettings(chains=10, sweep=5, samples_per_chain=200, burn_in=20)
    batch = run_chains(settings, BOX, logamp, None, n_max=1, initial_n=1, seed=5)
    assert np.all(batch.ns == 1)
    proposed, accepted = batch.counters[1]
    assert proposed > 0 and accepted == 0


def test_vacuum_removal_always_rejected():
    amps = jnp.asarray([20.0, 0.0])

    def logamp(params, positions, n):
        del params, positions
        return amps[jnp.clip(n, 0, 1)]

    settings = SamplerSettings(chains=10, sweep=5, samples_per_chain=200, burn_in=20)
    batch = run_chains(settings, BOX, logamp, None, n_max=1, initial_n=0, seed=6)
    assert np.all(batch.ns == 0)
    proposed, accepted = batch.counters[2]
    assert proposed > 0 and accepted == 0


def test_unit_ratio_moves_always_accepted():
    # flat amplitude on a unit ring: displacements wrap, insert and remove
    # ratios are exactly one, so every proposal of every kind is accepted
    # (a wide register keeps the walk away from the capacity wall)
    ring_unit = ModelSpec("cs1d", DomainSpec(1, 1.0, "periodic"), coupling=1.0, mu=0.0)
    settings = SamplerSettings(chains=10, sweep=5, samples_per_chain=100, burn_in=20)
    batch = run_chains(
        settings, ring_unit, constant_amp(0.0), None, n_max=400, initial_n=200, seed=7,
    )
    counters = batch.counters
    assert np.all(counters[:, 0] > 0)
    assert np.array_equal(counters[:, 0], counters[:, 1])
    assert 120 < batch.ns.min() and batch.ns.max() < 280


def test_window_boundary_confines_walk():
    settings = SamplerSettings(chains=10, sweep=5, samples_per_chain=100, burn_in=50)
    batch = run_chains(
        settings, TRAP, trap_log_state(1.0, (5.0, 5.0)), None,
        n_max=3, initial_n=2, seed=8,
    )
    assert np.all((batch.positions >= 0.0) & (batch.positions <= 10.0))
    assert np.all((batch.ns >= 0) & (batch.ns <= 3))


def test_stuck_sampler_raises_warning_flag():
    # target so sharply peaked that in-band proposals are ~never accepted
    def logamp(params, positions, n):
        del params
        x = positions[:, 0]
        mask = jnp.arange(x.shape[0]) < n
        return -1e8 * jnp.sum(jnp.where(mask, (x - 0.5) ** 2, 0.0))

    settings = SamplerSettings(
        p_pm=0.0, chains=10, sweep=30, samples_per_chain=1, burn_in=200
    )
    with pytest.warns(RuntimeWarning, match="acceptance below 1%"):
        batch = run_chains(settings, BOX, logamp, None, n_max=1, initial_n=1, seed=9)
    assert batch.stuck


def test_log_space_ratios_survive_huge_amplitudes():
    # |delta ln phi| of 1e4 per particle must not overflow the decision
    for sign, target in ((+1.0, 3), (-1.0, 0)):
        settings = SamplerSettings(chains=5, sweep=5, samples_per_chain=50, burn_in=50)
        batch = run_chains(
            settings, BOX, constant_amp(sign * 1e4), None,
            n_max=3, initial_n=1, seed=10,
        )
        assert np.all(batch.ns == target)
        assert np.all(np.isfinite(batch.log_amps))


def test_chain_state_invariant_log_amp_matches_config():
    logamp = cs1d_log_state(2.0, 2.0)
    rng = np.random.default_rng(0)
    pos = rng.uniform(0.0, 2.0, size=(5, 1))
    config = Configuration(positions=pos, n=3)
    chain = ChainState(
        config=config,
        log_amp=float(logamp(None, jnp.asarray(pos), 3)),
        key=jax.random.PRNGKey(21),
    )
    settings = SamplerSettings()
    for _ in range(60):
        chain = step(chain, RING, logamp, None, settings)
        assert 0 <= chain.config.n <= 5
        recomputed = float(logamp(None, jnp.asarray(chain.config.positions), chain.config.n))
        assert np.isclose(chain.log_amp, recomputed, rtol=1e-12, atol=1e-12)
    assert chain.step_index == 60
    assert chain.counters.sum() > 0


def test_rigid_displacement_moves_all_particles_together():
    settings = SamplerSettings(p_pm=0.0, chains=1, sweep=1, samples_per_chain=1, burn_in=0)
    rng = np.random.default_rng(1)
    pos = rng.uniform(0.0, 2.0, size=(4, 1))
    chain = ChainState(config=Configuration(positions=pos, n=3), log_amp=0.0,
                       key=jax.random.PRNGKey(2))
    moves = 0
    for _ in range(20):
        before = np.array(chain.config.positions)
        chain = step(chain, RING, constant_amp(0.0), None, settings)
        after = np.array(chain.config.positions)
        delta = np.mod(after[:3] - before[:3], 2.0)
        assert np.allclose(delta, delta[0])  # one shared shift
        assert np.allclose(after[3:], before[3:])  # padding never moves
        moves += not np.allclose(delta, 0.0)
    assert moves > 0


def test_single_particle_mode_moves_one_particle():
    settings = SamplerSettings(
        p_pm=0.0, chains=1, sweep=1, samples_per_chain=1, burn_in=0,
        single_particle_moves=True,
    )
    rng = np.random.default_rng(2)
    pos = rng.uniform(0.0, 2.0, size=(4, 1))
    chain = ChainState(config=Configuration(positions=pos, n=3), log_amp=0.0,
                       key=jax.random.PRNGKey(3))
    for _ in range(20):
        before = np.array(chain.config.positions)
        chain = step(chain, RING, constant_amp(0.0), None, settings)
        after = np.array(chain.config.positions)
        changed = np.any(before != after, axis=1)
        assert changed[:3].sum() <= 1
        assert not changed[3:].any()


def test_initial_n_read_from_window_center():
    hyper = AnsatzHyper(
        embedding="fourier", grid_points=3, spatial_dim=1, box_length=2.0,
        blocks=1, heads=2, ffn_width=8, n_max=6,
    )
    params = init_params(hyper, 0)
    assert initial_particle_number(params, 6) == 3  # window opens as [0, n_max]


def test_missing_window_requires_explicit_initial_n():
    settings = SamplerSettings(chains=2, sweep=2, samples_per_chain=2, burn_in=1)
    with pytest.raises(ValueError, match="initial_n"):
        run_chains(settings, RING, cs1d_log_state(1.0, 2.0), None, n_max=4)
