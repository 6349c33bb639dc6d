import numpy as np
import pytest

from graphcondense import nn
from graphcondense.data import normalize_adjacency
from graphcondense.trajectory import (BankFormatError, ExpertConfig,
                                      TrajectoryBank, load_bank,
                                      sample_segment, save_bank, train_experts)


@pytest.fixture(scope="module")
def small_bank(sbm_module):
    ds = sbm_module
    arch = nn.GnnArch("gcn", ds.num_features, ds.num_classes, hidden=16)
    cfg = ExpertConfig(num_experts=3, total_epochs=60, snapshot_interval=20)
    return ds, arch, cfg, train_experts(ds, arch, cfg)


@pytest.fixture(scope="module")
def sbm_module():
    from graphcondense.synth import make_sbm_fixture
    return make_sbm_fixture(seed=7)


class TestExpertConfig:
    def test_interval_must_divide(self):
        with pytest.raises(ValueError, match="divide"):
            ExpertConfig(total_epochs=100, snapshot_interval=33)

    def test_snapshot_count(self):
        cfg = ExpertConfig(total_epochs=2400, snapshot_interval=100)
        assert cfg.snapshots_per_trajectory == 25


class TestTrainExperts:
    def test_shapes_and_epoch_axis(self, small_bank):
        _, arch, cfg, bank = small_bank
        assert bank.snapshots.shape == (3, 4, arch.param_len)
        assert np.array_equal(bank.epochs, [0, 20, 40, 60])
        assert bank.snapshots.dtype == np.float32

    def test_epoch_zero_is_glorot_init(self, small_bank):
        _, arch, cfg, bank = small_bank
        for i in range(cfg.num_experts):
            rng = np.random.default_rng(cfg.seed_base + i)
            want = arch.init_params(rng, dtype=np.float32)
            assert np.array_equal(bank.snapshot(i, 0), want)

    def test_experts_differ(self, small_bank):
        _, _, _, bank = small_bank
        assert not np.array_equal(bank.snapshots[0], bank.snapshots[1])

    def test_matches_manual_gd(self, small_bank):
        ds, arch, cfg, bank = small_bank
        adj = normalize_adjacency(ds.edges, ds.num_nodes)
        x = ds.features.astype(np.float32)
        params = arch.init_params(np.random.default_rng(cfg.seed_base),
                                  dtype=np.float32)
        for _ in range(20):
            _, g = nn.loss_and_grad(arch, adj, x, ds.labels, ds.train_idx,
                                    params, cfg.weight_decay)
            params = params - np.float32(cfg.lr) * g
        assert np.array_equal(bank.snapshot(0, 20), params)

    def test_trajectories_learn(self, small_bank):
        _, _, _, bank = small_bank
        assert (bank.final_train_acc > 0.9).all()

    def test_snapshots_immutable(self, small_bank):
        _, _, _, bank = small_bank
        with pytest.raises(ValueError):
            bank.snapshots[0, 0, 0] = 0.0

    def test_off_grid_epoch_rejected(self, small_bank):
        _, _, _, bank = small_bank
        with pytest.raises(ValueError, match="snapshot epoch"):
            bank.snapshot(0, 30)


class TestSampleSegment:
    def test_endpoints_come_from_bank(self, small_bank):
        _, _, _, bank = small_bank
        rng = np.random.default_rng(0)
        for _ in range(20):
            seg = sample_segment(bank, rng, p=20, max_start_epoch=40)
            assert seg.start_epoch in (0, 20, 40)
            assert np.array_equal(
                seg.start_params, bank.snapshot(seg.trajectory, seg.start_epoch))
            assert np.array_equal(
                seg.target_params,
                bank.snapshot(seg.trajectory, seg.start_epoch + 20))

    def test_start_cap_respected(self, small_bank):
        _, _, _, bank = small_bank
        rng = np.random.default_rng(1)
        starts = {sample_segment(bank, rng, p=20, max_start_epoch=0).start_epoch
                  for _ in range(10)}
        assert starts == {0}

    def test_p_not_on_grid_rejected(self, small_bank):
        _, _, _, bank = small_bank
        with pytest.raises(ValueError, match="multiple"):
            sample_segment(bank, np.random.default_rng(0), p=30,
                           max_start_epoch=40)

    def test_p_too_long_rejected(self, small_bank):
        _, _, _, bank = small_bank
        with pytest.raises(ValueError, match="admissible"):
            sample_segment(bank, np.random.default_rng(0), p=80,
                           max_start_epoch=40)

    def test_deterministic_given_rng(self, small_bank):
        _, _, _, bank = small_bank
        a = sample_segment(bank, np.random.default_rng(5), 20, 40)
        b = sample_segment(bank, np.random.default_rng(5), 20, 40)
        assert (a.trajectory, a.start_epoch) == (b.trajectory, b.start_epoch)


class TestPersistence:
    def test_round_trip(self, small_bank, tmp_path):
        _, _, _, bank = small_bank
        path = str(tmp_path / "bank.bin")
        save_bank(bank, path)
        back = load_bank(path)
        assert np.array_equal(back.snapshots, bank.snapshots)
        assert back.arch == bank.arch
        assert back.snapshot_interval == bank.snapshot_interval
        assert np.allclose(back.final_val_acc, bank.final_val_acc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(BankFormatError, match="missing"):
            load_bank(str(tmp_path / "nope.bin"))

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b'{"magic": "something-else"}\n')
        with pytest.raises(BankFormatError, match="not a trajectory bank"):
            load_bank(str(path))

    def test_truncated_payload(self, small_bank, tmp_path):
        _, _, _, bank = small_bank
        path = tmp_path / "bank.bin"
        save_bank(bank, str(path))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(BankFormatError, match="bytes"):
            load_bank(str(path))

    def test_garbage_header(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\xff\xfe not json\n1234")
        with pytest.raises(BankFormatError, match="corrupted"):
            load_bank(str(path))

    def test_nonfinite_snapshots_rejected(self, small_bank):
        _, arch, cfg, bank = small_bank
        snaps = bank.snapshots.copy()
        snaps[0, 0, 0] = np.nan
        with pytest.raises(BankFormatError, match="non-finite"):
            TrajectoryBank(arch=arch, total_epochs=cfg.total_epochs,
                           snapshot_interval=cfg.snapshot_interval,
                           snapshots=snaps,
                           final_train_acc=bank.final_train_acc,
                           final_val_acc=bank.final_val_acc)
