import numpy as np
import pytest

from rsgdenoise import experiments
from rsgdenoise.config import PhaseConfig, TrainConfig
from rsgdenoise.imagestore import NoiseSpec


@pytest.fixture
def base():
    return TrainConfig.desk(
        phase1=PhaseConfig(lr=1e-3, batch=2, patch=20, epochs=1, patches_per_epoch=2),
        phase2=PhaseConfig(lr=None, batch=2, patch=20, epochs=0, patches_per_epoch=2),
    )


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    clean = [rng.random((24, 24, 1)).astype(np.float32) for _ in range(2)]
    return clean, ([np.clip(c + 0.1, 0, 1) for c in clean], clean)


def test_ablation_grid(base, data, tmp_path):
    report = experiments.run_ablation(base, data[0], data[1])
    assert {(r["sampler"], r["loss"]) for r in report.rows} == {
        ("pd", "apbsn"), ("pd", "csdbsn"), ("rsg", "apbsn"), ("rsg", "csdbsn")}
    assert np.isfinite(report.cell(sampler="rsg", loss="csdbsn")["psnr"])
    path = report.write(tmp_path)
    assert path.read_text().count("\n") == 5
    assert "ablation:" in (tmp_path / "ablation_summary.txt").read_text()


def test_sweep_cell_count(base, data):
    report = experiments.run_perturbation_sweep(base, data[0], data[1], ("pbsn1", "pbsn3"), (0, 10))
    assert len(report.rows) == 2 * 2 * 2


def test_seed_experiment_rows(base, data):
    report = experiments.run_seed_experiment(base, data[0], {"a": data[0], "b": data[0][:1]})
    assert len(report.rows) == 4
    gap = experiments.mean_psnr_gap(report, "seed_mode", "per_epoch_random", "fixed")
    assert np.isfinite(gap)


def test_synthetic_test_set_is_fixed():
    clean = [np.zeros((8, 8, 1), np.float32)] * 2
    a = experiments.synthetic_test_set(clean, NoiseSpec("awgn", 25, "per_epoch_random"))
    b = experiments.synthetic_test_set(clean, NoiseSpec("awgn", 25))
    assert np.array_equal(a[0], b[0]) and not np.array_equal(a[0], a[1])
