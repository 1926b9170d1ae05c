import numpy as np
import pytest

from configs.columns import FORCING_COLS
from ingestion.synthetic import THETA_HIGH, THETA_LOW, generate_synthetic_fleet, simulate_reservoir


def test_fleet_is_deterministic():
    a = generate_synthetic_fleet(4, 800, seed=7)
    b = generate_synthetic_fleet(4, 800, seed=7)
    assert np.array_equal(a.attributes.values, b.attributes.values)
    assert np.array_equal(a.embeddings.values, b.embeddings.values)
    for basin in a.basins:
        assert np.array_equal(a.flow_series(basin).to_numpy(), b.flow_series(basin).to_numpy())


def test_fleet_layout(fleet):
    assert fleet.basins[0] == "00000001"
    assert fleet.attributes.d == 17 and fleet.embeddings.d == 64
    frame = fleet.forcing_frame(fleet.basins[0])
    assert frame.columns == FORCING_COLS
    assert len(frame) == 900
    assert not frame.data.isna().any().any()


def test_flows_are_non_negative(fleet):
    for basin in fleet.basins:
        assert (fleet.flow_series(basin).to_numpy() >= 0).all()


def test_reservoir_conserves_water():
    rng = np.random.default_rng(0)
    precip = rng.exponential(5.0, size=400)
    pet = rng.uniform(0.5, 4.0, size=400)
    out = simulate_reservoir(12.0, 40.0, 0.6, precip, pet)
    S = out["storage"]
    assert np.allclose(S[1:] - S[:-1], precip - out["evaporation"] - out["flow"] - out["spill"], atol=1e-9)
    assert (S >= -1e-12).all() and (S <= 40.0 + 1e-9).all()
    assert (out["spill"] > 0).any()


def test_reservoir_rejects_bad_parameters():
    with pytest.raises(ValueError):
        simulate_reservoir(1.0, 80.0, 0.5, np.ones(5), np.ones(5))
    with pytest.raises(ValueError):
        simulate_reservoir(10.0, 0.0, 0.5, np.ones(5), np.ones(5))


def test_fleet_rejects_tiny_requests():
    with pytest.raises(ValueError, match="at least 2 basins"):
        generate_synthetic_fleet(1, 900, seed=0)
    with pytest.raises(ValueError, match="at least 800 days"):
        generate_synthetic_fleet(3, 100, seed=0)


def _unit_theta(archive):
    return (archive.attributes.values[:, :3] - THETA_LOW) / (THETA_HIGH - THETA_LOW)


def test_close_parameters_mean_correlated_flow():
    wins = 0
    for seed in range(30):
        fleet = generate_synthetic_fleet(3, 800, seed=seed)
        u = _unit_theta(fleet)
        pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)]
        a, b, c = min(pairs, key=lambda p: np.linalg.norm(u[p[0]] - u[p[1]]))
        q = np.vstack([fleet.flow_series(x).to_numpy() for x in fleet.basins])
        r = np.corrcoef(q)
        if r[a, b] > max(r[a, c], r[b, c]):
            wins += 1
    assert wins > 15


def test_planted_regimes_are_compact():
    fleet = generate_synthetic_fleet(12, 800, seed=5, n_regimes=3)
    u = _unit_theta(fleet)
    labels = np.arange(12) % 3
    D = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=2)
    np.fill_diagonal(D, np.inf)
    nearest = D.argmin(axis=1)
    assert (labels[nearest] == labels).all()
