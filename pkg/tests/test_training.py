import numpy as np
import pytest

from advmt.data import CorpusConfig, generate_corpus
from advmt.discriminator import DiscriminatorConfig
from advmt.errors import ConfigurationError, ContractError, DivergenceError
from advmt.losses import LossWeights
from advmt.model import EncoderConfig
from advmt.tensor import Tensor
from advmt.training import Adam, TrainConfig, Trainer, clip_gradients, fit


def small_corpus(topo, n_train=4, n_test=2, frames=78):
    return generate_corpus(
        CorpusConfig(n_train=n_train, n_test=n_test, n_frames=frames), topo
    )


def small_setup(topo, corpus=None, **cfg_overrides):
    """A deliberately tiny encoder so training tests stay fast."""
    cs = corpus or small_corpus(topo)
    cfg = TrainConfig(**{"epochs": 1, "batch_size": 4, "seed": 1, **cfg_overrides})
    enc_cfg = EncoderConfig(
        input_dim=51, num_layers=1, num_heads=2, model_dim=16, ff_dim=16,
        history_len=cfg.history_frames,
    )
    disc_cfg = DiscriminatorConfig(input_dim=51, hidden_dims=(16,))
    return cs, cfg, enc_cfg, disc_cfg


class TestConfig:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(epochs=0)

    def test_weights_dict_coerced(self):
        cfg = TrainConfig(weights={"lambda_bone": 0.5})
        assert cfg.weights == LossWeights(lambda_bone=0.5)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig.from_dict({"epochs": 1, "bogus": 2})

    def test_dict_roundtrip(self):
        cfg = TrainConfig(epochs=3, weights=LossWeights(lambda_adv=0.2))
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestAdam:
    def test_minimizes_quadratic(self):
        w = Tensor(np.array([5.0, -3.0]), requires_grad=True)
        opt = Adam([w], lr=0.1)
        for _ in range(300):
            opt.zero_grad()
            (w * w).sum().backward()
            opt.step()
        assert np.abs(w.data).max() < 1e-3


class TestClipping:
    def test_clip_engages(self):
        w = Tensor(np.zeros(4), requires_grad=True)
        w.grad = np.full(4, 10.0)
        pre = clip_gradients([w], 1.0)
        assert pre == pytest.approx(20.0)
        assert np.sqrt((w.grad ** 2).sum()) <= 1.0 + 1e-9

    def test_infinite_norm_disables(self):
        w = Tensor(np.zeros(4), requires_grad=True)
        w.grad = np.full(4, 10.0)
        clip_gradients([w], float("inf"))
        assert np.array_equal(w.grad, np.full(4, 10.0))


class TestTrainStep:
    def test_supervised_reduction_leaves_disc_untouched(self, topo17):
        cs, cfg, enc_cfg, disc_cfg = small_setup(
            topo17,
            weights={"lambda_bone": 0.1, "lambda_adv": 0.0},
            disc_steps_per_gen_step=0,
        )
        enc, disc, _ = fit(cs, cfg, encoder_config=enc_cfg, disc_config=disc_cfg)
        rng = np.random.default_rng(cfg.seed)
        from advmt.model import EncoderModel
        from advmt.discriminator import DiscriminatorModel

        EncoderModel(enc_cfg, rng)  # same draws as the trained run
        reference = DiscriminatorModel(disc_cfg, rng)
        for a, b in zip(disc.parameters(), reference.parameters()):
            assert np.array_equal(a.data, b.data)
        assert all(r.adversarial == 0.0 for r in _.records)

    def test_empty_batch_rejected(self, topo17):
        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17)
        from advmt.model import EncoderModel
        from advmt.discriminator import DiscriminatorModel

        rng = np.random.default_rng(0)
        trainer = Trainer(EncoderModel(enc_cfg, rng), DiscriminatorModel(disc_cfg, rng),
                          topo17, cfg)
        with pytest.raises(ContractError):
            trainer.train_step([])

    def test_divergence_detected(self, topo17):
        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17)
        from advmt.model import EncoderModel
        from advmt.discriminator import DiscriminatorModel
        from advmt.data import window

        rng = np.random.default_rng(0)
        enc = EncoderModel(enc_cfg, rng)
        enc.head.W.data[:] = np.nan
        trainer = Trainer(enc, DiscriminatorModel(disc_cfg, rng), topo17, cfg)
        batch = window(cs.train.sequences[0], 50, 25, 5)[:2]
        with pytest.raises(DivergenceError):
            trainer.train_step(batch)


class TestFit:
    def test_requires_windows(self, topo17):
        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17)
        short = generate_corpus(CorpusConfig(n_train=2, n_test=0, n_frames=30), topo17)
        with pytest.raises(ConfigurationError):
            fit(short, cfg, encoder_config=enc_cfg, disc_config=disc_cfg)

    def test_deterministic_across_runs(self, topo17, tmp_path):
        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17, epochs=2)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        enc_a, _, log_a = fit(cs, cfg, out_dir=out_a,
                              encoder_config=enc_cfg, disc_config=disc_cfg)
        enc_b, _, log_b = fit(cs, cfg, out_dir=out_b,
                              encoder_config=enc_cfg, disc_config=disc_cfg)
        for a, b in zip(enc_a.parameters(), enc_b.parameters()):
            assert np.array_equal(a.data, b.data)
        for ra, rb in zip(log_a.records, log_b.records):
            assert ra.total == rb.total
            assert ra.val_mpjpe == rb.val_mpjpe
        assert (out_a / "encoder.ckpt").read_bytes() == (out_b / "encoder.ckpt").read_bytes()
        assert (out_a / "discriminator.ckpt").read_bytes() == (out_b / "discriminator.ckpt").read_bytes()

    def test_checkpoint_matches_in_memory_model(self, topo17, tmp_path):
        from advmt.evaluation import HorizonSet, evaluate
        from advmt.model import load_checkpoint

        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17)
        enc, _, _ = fit(cs, cfg, out_dir=tmp_path,
                        encoder_config=enc_cfg, disc_config=disc_cfg)
        loaded = load_checkpoint(tmp_path / "encoder.ckpt")
        horizons = HorizonSet(milliseconds=(400, 1000))
        in_memory = evaluate(enc, cs.test, horizons)
        reloaded = evaluate(loaded, cs.test, horizons)
        assert in_memory.value("model", "all", 1000) == reloaded.value("model", "all", 1000)

    def test_log_and_checkpoint_cadence(self, topo17, tmp_path):
        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17, epochs=2, checkpoint_every=1)
        _, _, log = fit(cs, cfg, out_dir=tmp_path,
                        encoder_config=enc_cfg, disc_config=disc_cfg)
        assert [r.epoch for r in log.records] == [1, 2]
        assert (tmp_path / "encoder_ep001.ckpt").exists()
        assert (tmp_path / "encoder_ep002.ckpt").exists()
        assert (tmp_path / "trainlog.csv").exists()
        header = (tmp_path / "trainlog.csv").read_text().splitlines()[0]
        assert header.startswith("epoch,mpjpe,bone,adversarial,total,disc_loss")

    def test_gradient_isolation_between_updates(self, topo17):
        # after a full step the encoder only saw total_loss gradients and the
        # discriminator only saw discriminator_loss gradients; run one manual
        # alternation to assert the crossed grads stay empty
        from advmt.data import window
        from advmt.discriminator import DiscriminatorModel, discriminator_loss
        from advmt.model import EncoderModel, rollout_graph

        cs, cfg, enc_cfg, disc_cfg = small_setup(topo17)
        rng = np.random.default_rng(0)
        enc = EncoderModel(enc_cfg, rng)
        disc = DiscriminatorModel(disc_cfg, rng)
        disc.layers[-1].W.data[:] = 0.1
        batch = window(cs.train.sequences[0], 50, 25, 5)[:2]
        inputs = np.stack([s.input for s in batch])
        targets = np.stack([s.target for s in batch])
        b = inputs.shape[0]
        preds = rollout_graph(enc, Tensor(inputs.reshape(b, 50, 51)), 25)

        real_seq = np.concatenate([inputs[:, -1:], targets], axis=1)
        real = (real_seq[:, 1:] - real_seq[:, :-1]).reshape(-1, 51)
        fake_full = np.concatenate([inputs[:, -1].reshape(b, 1, 51), preds.data], axis=1)
        fake = (fake_full[:, 1:] - fake_full[:, :-1]).reshape(-1, 51)
        discriminator_loss(disc, real, fake).backward()
        assert all(p.grad is None for p in enc.parameters())
        assert all(p.grad is not None for p in disc.parameters())

        for p in disc.parameters():
            p.zero_grad()
        from advmt.losses import total_loss

        breakdown = total_loss(preds.reshape((b, 25, 17, 3)), targets, topo17, disc,
                               cfg.weights, last_observed=inputs[:, -1])
        breakdown.total_node.backward()
        assert all(p.grad is not None for p in enc.parameters())
        assert all(p.grad is None for p in disc.parameters())


@pytest.mark.slow
class TestLearningSmoke:
    def test_mpjpe_decreases_over_epochs(self, topo17):
        # 20-sequence walk corpus, ~200 steps by epoch 10
        cs = generate_corpus(CorpusConfig(n_train=20, n_test=0, n_frames=80), topo17)
        cfg = TrainConfig(epochs=10, batch_size=3, seed=0, window_stride=2)
        enc_cfg = EncoderConfig(input_dim=51, num_layers=2, num_heads=2,
                                model_dim=32, ff_dim=48, history_len=50)
        _, _, log = fit(cs, cfg, encoder_config=enc_cfg)
        assert log.records[9].mpjpe < log.records[0].mpjpe
