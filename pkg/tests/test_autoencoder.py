import numpy as np
import pytest

from scanmend.autoencoder import (
    AeTrainConfig,
    Autoencoder,
    AutoencoderSpec,
    TrainingDivergedError,
    ae_loss,
    decode,
    encode,
    load_autoencoder,
    reconstruction_emd,
    save_autoencoder,
    train_ae,
)
from scanmend.pointset import PointSet
from scanmend.rng import Rng


def test_spec_validation_and_widths():
    with pytest.raises(ValueError):
        AutoencoderSpec(n=0, k=4)
    with pytest.raises(ValueError):
        AutoencoderSpec(n=16, k=0)
    spec = AutoencoderSpec(n=128, k=16)
    assert spec.encoder_widths == (64, 128, 128, 256, 16)
    assert spec.decoder_widths == (256, 256, 384)
    assert AutoencoderSpec.from_dict(spec.as_dict()) == spec


def test_ae_loss_unit_shift_example():
    # identity reconstruction offset by a unit vector has mean EMD exactly 1
    spec = AutoencoderSpec(n=4, k=3)
    ae = Autoencoder(spec, Rng(0))
    batch = Rng(1).normal((2, 4, 3))

    class Shifted:
        spec = ae.spec

        def forward_batch(self, x):
            return x + np.array([0.0, 0.0, 1.0])

    loss = ae_loss(Shifted(), batch)
    assert float(loss.data) == pytest.approx(1.0, abs=1e-12)


def test_ae_loss_count_mismatch():
    ae = Autoencoder(AutoencoderSpec(n=8, k=4), Rng(0))
    with pytest.raises(ValueError, match="expected 8"):
        ae_loss(ae, Rng(1).normal((2, 9, 3)))


def test_encoder_permutation_invariance_exact():
    ae = Autoencoder(AutoencoderSpec(n=32, k=8), Rng(2))
    rng = Rng(3)
    cloud = rng.normal((32, 3))
    z0 = encode(ae, PointSet(cloud)).values
    for _ in range(25):
        perm = rng.permutation(32)
        z = encode(ae, PointSet(cloud[perm])).values
        assert np.array_equal(z, z0)  # bit-identical, not just close


def test_encode_decode_contracts():
    ae = Autoencoder(AutoencoderSpec(n=16, k=4), Rng(4))
    ps = PointSet(Rng(5).normal((16, 3)))
    z = encode(ae, ps)
    assert z.k == 4
    out = decode(ae, z)
    assert out.n == 16
    with pytest.raises(ValueError, match="expected 16"):
        encode(ae, PointSet(Rng(6).normal((15, 3))))
    with pytest.raises(ValueError, match="latent length"):
        decode(ae, np.zeros(5))


def test_encode_preserves_network_mode():
    ae = Autoencoder(AutoencoderSpec(n=8, k=4), Rng(7)).train()
    encode(ae, PointSet(Rng(8).normal((8, 3))))
    assert ae.encoder.mode == "train"
    ae.infer()
    encode(ae, PointSet(Rng(8).normal((8, 3))))
    assert ae.encoder.mode == "infer"


def test_linear_ae_memorizes_single_shape():
    # k >= 3n makes a single shape exactly representable (the decoder bias
    # alone suffices); training must drive its reconstruction loss near zero.
    # EMD subgradients have unit magnitude, so the achievable floor scales
    # with the learning rate; a small lr is needed to get under 1e-3.
    spec = AutoencoderSpec(n=4, k=12, linear=True)
    data = Rng(9).normal((1, 4, 3)) * 0.5
    cfg = AeTrainConfig(lr=2e-4, batch_size=1, epochs=3000, seed=0)
    ae, losses = train_ae(data, spec, cfg)
    assert losses[-1] < 1e-3, losses[-1]
    assert reconstruction_emd(ae, data) < 1e-3


def test_train_ae_loss_decreases_and_is_deterministic():
    spec = AutoencoderSpec(n=16, k=8)
    data = Rng(10).normal((20, 16, 3)) * 0.5
    cfg = AeTrainConfig(lr=5e-4, batch_size=10, epochs=12, seed=3)
    ae1, l1 = train_ae(data, spec, cfg)
    ae2, l2 = train_ae(data, spec, cfg)
    assert l1 == l2
    assert np.array_equal(ae1.param_vector(), ae2.param_vector())
    assert l1[-1] < l1[0]
    assert len(l1) == 12
    # a different seed gives a different trajectory
    _, l3 = train_ae(data, spec, AeTrainConfig(lr=5e-4, batch_size=10, epochs=12, seed=4))
    assert l3 != l1


def test_train_ae_rejects_wrong_point_count():
    with pytest.raises(ValueError, match="expected 8"):
        train_ae(Rng(11).normal((4, 6, 3)), AutoencoderSpec(n=8, k=4), AeTrainConfig(epochs=1))


def test_train_ae_divergence_raises():
    # coordinates large enough that squared pairwise distances overflow
    spec = AutoencoderSpec(n=8, k=4)
    data = Rng(12).normal((4, 8, 3)) * 1e200
    with pytest.raises(TrainingDivergedError, match="diverged|non-finite"):
        train_ae(data, spec, AeTrainConfig(lr=1.0, batch_size=4, epochs=5, seed=0))


def test_save_load_round_trip(tmp_path):
    ae = Autoencoder(AutoencoderSpec(n=16, k=4), Rng(13))
    # move BN stats off init so the round trip covers them
    ae.train()
    ae.forward_batch(__import__("scanmend.nn.tensor", fromlist=["Tensor"]).Tensor(
        Rng(14).normal((3, 16, 3))
    ))
    path = tmp_path / "ae.json"
    save_autoencoder(path, ae, seed=5)
    back, bundle = load_autoencoder(path)
    assert bundle.seed == 5
    assert back.spec == ae.spec
    assert np.array_equal(back.param_vector(), ae.param_vector())
    # loaded model reproduces latent codes bit for bit
    ps = PointSet(Rng(15).normal((16, 3)))
    assert np.array_equal(encode(back, ps).values, encode(ae.infer(), ps).values)
